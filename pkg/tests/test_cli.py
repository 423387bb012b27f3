import csv
import io
import tempfile
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from tripwave.cli import default_jobs, dispatch, parse_sweep, run_sweep
from tripwave.config import format_config, load_config, parse_config
from tripwave.errors import ConfigError
from tripwave.model import PARAM_KEYS, PRESETS, Params

PS_A = PRESETS["PS-A"]


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = dispatch(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def ps_a_cfg(tmp_path):
    path = tmp_path / "ps_a.cfg"
    path.write_text("# strong alien\n" + format_config(PS_A))
    return path


# ------------------------------------------------------------------ config


def test_config_round_trip(ps_a_cfg):
    p, opt = load_config(ps_a_cfg)
    assert p == PS_A and opt == {}


def test_config_comments_whitespace_and_options():
    vals = parse_config("  d1=0.5   # diffusion\n\n t_end = 1.5e2\nscenario = invade-elow\n")
    assert vals == {"d1": 0.5, "t_end": 150.0, "scenario": "invade-elow"}


@pytest.mark.parametrize(
    "text",
    ["d1 = 1/2", "d1 = 0x10", "d1 = nan", "d1 = inf", "d1 0.5", "zeta = 1", "d1 = 1\nd1 = 2", "sample_every = 2.5", "scenario = 3"],
)
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


# --------------------------------------------------------------- exit codes


def test_analyze(ps_a_cfg):
    code, out, _ = call("analyze", "--config", str(ps_a_cfg))
    assert code == 0
    assert "beta_upper,0.74" in out
    assert "s_lower,none" in out
    assert "vr,True" in out


def test_analyze_preset_with_override():
    code, out, _ = call("analyze", "--preset", "PS-A", "--set", "b2=0.5")
    assert code == 0 and "hb2,False" in out


def test_verify_ul(ps_a_cfg, tmp_path):
    code, out, _ = call("verify-ul", "--config", str(ps_a_cfg), "--case", "estar-super", "--s", "2.0", "--out", str(tmp_path / "v"))
    assert code == 0
    assert out.splitlines()[-1] == "pass True"
    assert (tmp_path / "v" / "verification.csv").exists()


def test_verify_ul_hypothesis_violation(ps_a_cfg):
    code, out, _ = call("verify-ul", "--config", str(ps_a_cfg), "--case", "estar-super", "--s", "1.0")
    assert code == 1 and "s>s*" in out


def test_verify_ul_needs_case(ps_a_cfg):
    code, _, err = call("verify-ul", "--config", str(ps_a_cfg), "--s", "2.0")
    assert code == 2 and "--case" in err


def test_rect(ps_a_cfg):
    code, out, _ = call("rect", "--config", str(ps_a_cfg), "--set", "delta3=0.1", "--set", "eps=0.03")
    assert code == 0
    rows = [r for r in out.splitlines() if not r.startswith("#")]
    assert len(rows) == 11 and all(r.endswith("True") for r in rows[1:])


def test_rect_needs_predation_bound():
    code, out, _ = call("rect", "--preset", "PS-B")
    assert code == 1 and "a*gamma2>1" in out


def test_speed(tmp_path):
    code, out, _ = call(
        "speed", "--preset", "PS-A", "--set", "x_max=150", "--set", "t_end=40", "--set", "dx=0.25",
        "--set", "sample_every=100", "--scenario", "invade-estar", "--out", str(tmp_path / "s"),
    )
    assert code == 0
    info = dict(line.split(" ", 1) for line in out.splitlines() if not line.startswith("#"))
    assert float(info["relative_error"]) < 0.2
    assert (tmp_path / "s" / "front.csv").read_text().startswith("t,front_x\n")
    assert list((tmp_path / "s").glob("snap_t40.000000.csv"))


def test_simulate_with_snapshots(tmp_path):
    code, _, _ = call(
        "simulate", "--preset", "PS-A", "--set", "x_max=60", "--set", "t_end=2", "--set", "dx=0.5",
        "--set", "sample_every=50", "--set", "snapshot_every=1", "--out", str(tmp_path / "o"),
    )
    assert code == 0
    snaps = sorted(p.name for p in (tmp_path / "o").glob("snap_t*.csv"))
    assert "snap_t0.000000.csv" in snaps and "snap_t2.000000.csv" in snaps


def test_simulate_domain_too_short_is_a_config_error():
    code, out, err = call("simulate", "--preset", "PS-A", "--set", "x_max=60", "--set", "t_end=40", "--set", "dx=0.5")
    assert code == 2 and "x_max" in err


def test_bvp_and_continue(tmp_path):
    code, out, _ = call("bvp", "--preset", "PS-A", "--s", "2.0", "--out", str(tmp_path / "b"))
    assert code == 0
    assert (tmp_path / "b" / "profile.csv").read_text().startswith("z,phi1,phi2,phi3\n")
    assert (tmp_path / "b" / "solver.log").exists()
    code, out, _ = call("continue", "--preset", "PS-A", "--set", "s_from=2.5", "--set", "s_to=1.5", "--set", "n_steps=50")
    assert code == 0
    last = float(out.splitlines()[0].split()[1])
    assert abs(last - 1.720465) / 1.720465 < 0.05


def test_bvp_below_minimal_speed_fails():
    code, out, _ = call("bvp", "--preset", "PS-A", "--s", "0.86")
    assert code == 1
    assert "NewtonDivergence" in out or "NonPositiveProfile" in out


def test_lyapunov_short_horizon_reports_failure():
    code, out, _ = call("lyapunov", "--preset", "PS-B", "--set", "n_starts=3", "--set", "lyap_t_end=50", "--set", "kinetic_dt=0.05")
    assert code == 1
    assert "monotone True" in out and "converged False" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze"],
        ["analyze", "--preset", "PS-Z"],
        ["analyze", "--preset", "PS-A", "--bogus"],
        ["frobnicate", "--preset", "PS-A"],
        ["analyze", "--config", "/nonexistent/file.cfg"],
        ["analyze", "--preset", "PS-A", "--set", "a=0.5"],
        ["analyze", "--preset", "PS-A", "--set", "novel=1"],
        ["verify-ul", "--preset", "PS-A", "--case", "sideways", "--s", "2"],
        ["sweep", "--spec", "/nonexistent/sweep.txt"],
    ],
)
def test_usage_errors_exit_2(argv):
    code, out, err = call(*argv)
    assert code == 2
    assert err.startswith("tripwave: error:") or "error" in err


def test_usage_error_names_the_flag():
    code, _, err = call("analyze", "--preset", "PS-A", "--bogus")
    assert code == 2 and "--bogus" in err


LINE_MUTATIONS = st.sampled_from(
    ["drop", "dup", "garble_value", "unknown_key", "no_equals", "negative", "hex", "fraction"]
)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(PARAM_KEYS), LINE_MUTATIONS, st.text(alphabet="abcxyz!@/", min_size=1, max_size=5))
def test_malformed_configs_exit_2(key, how, junk):
    lines = {k: f"{k} = {getattr(PS_A, k)!r}" for k in PARAM_KEYS}
    if how == "drop":
        del lines[key]
    elif how == "dup":
        lines[key + "_dup"] = lines[key]
    elif how == "garble_value":
        lines[key] = f"{key} = {junk}"
    elif how == "unknown_key":
        lines["x" + junk] = f"{key}{junk} = 1"
    elif how == "no_equals":
        lines[key] = f"{key} {getattr(PS_A, key)}"
    elif how == "negative":
        lines[key] = f"{key} = -1"
    elif how == "hex":
        lines[key] = f"{key} = 0x1"
    else:
        lines[key] = f"{key} = 1/2"
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "bad.cfg"
        path.write_text("\n".join(lines.values()) + "\n")
        code, out, err = call("analyze", "--config", str(path))
    assert code == 2
    assert out == "" and err


@settings(max_examples=60, deadline=None)
@given(st.floats(1.01, 8), st.floats(0.01, 0.99), st.floats(1.01, 4), st.floats(0.01, 4), st.floats(0.01, 4))
def test_valid_configs_exit_0(a, h, k, b1, b2):
    p = Params(1, 1, 1, 1, 1, 1, h=h, k=k, a=a, b1=b1, b2=b2)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "ok.cfg"
        path.write_text(format_config(p))
        assert call("analyze", "--config", str(path))[0] == 0


# ------------------------------------------------------------------ sweeps


def write_sweep(tmp_path, body, base):
    spec = tmp_path / "sweep.txt"
    spec.write_text(f"base = {base.name}\nout = out\n{body}")
    return spec


def read_summary(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_one_point_sweep_equals_dispatch(tmp_path, ps_a_cfg):
    base = tmp_path / ps_a_cfg.name
    spec = write_sweep(tmp_path, "command = verify-ul\ncase = estar-super\ns = 2.0\n", base)
    code, out, _ = call("sweep", "--spec", str(spec), "--jobs", "1")
    assert code == 0
    rows = read_summary(tmp_path / "out" / "summary.csv")
    assert rows[0] == ["index", "outcome", "headline", "path"]
    assert rows[1][1] == "pass"
    single = call("verify-ul", "--config", str(ps_a_cfg), "--case", "estar-super", "--s", "2.0")[1]
    stored = (tmp_path / "out" / "point_0000" / "result.txt").read_text()
    assert stored == single


def test_b2_sweep_records_violations(tmp_path, ps_a_cfg):
    base = tmp_path / ps_a_cfg.name
    spec = write_sweep(tmp_path, "command = rect\naxis = b2 0.001 1.0 10 log\n", base)
    records = run_sweep(parse_sweep(spec.read_text(), tmp_path), jobs=2)
    assert [r.index for r in records] == list(range(10))
    outcomes = [r.outcome for r in records]
    assert "pass" in outcomes and "hypothesis-violated" in outcomes
    hb2_limit = (PS_A.a * (1 - PS_A.h) - 1) / (PS_A.a * (2 * PS_A.a - 1))
    for r in records:
        if r.values[0] >= hb2_limit:
            assert r.outcome == "hypothesis-violated"
    rows = read_summary(tmp_path / "out" / "summary.csv")
    assert rows[0] == ["index", "b2", "outcome", "headline", "path"]
    assert len(rows) == 11


def test_speed_sweep_all_pass(tmp_path, ps_a_cfg):
    base = tmp_path / ps_a_cfg.name
    spec = write_sweep(tmp_path, "command = verify-ul\ncase = estar-super\naxis = s 1.8 2.6 5 linear\n", base)
    code, out, _ = call("sweep", "--spec", str(spec))
    assert code == 0
    rows = read_summary(tmp_path / "out" / "summary.csv")[1:]
    assert [r[2] for r in rows] == ["pass"] * 5
    assert [float(r[1]) for r in rows] == pytest.approx([1.8, 2.0, 2.2, 2.4, 2.6])


def test_sweep_is_deterministic_across_job_counts(tmp_path, ps_a_cfg):
    results = []
    for jobs in ("1", "3"):
        d = tmp_path / jobs
        d.mkdir()
        base = d / ps_a_cfg.name
        base.write_text(ps_a_cfg.read_text())
        spec = write_sweep(d, "command = analyze\naxis = b1 0.5 2 4 linear\n", base)
        assert call("sweep", "--spec", str(spec), "--jobs", jobs)[0] == 0
        text = (d / "out" / "summary.csv").read_text().replace(str(d), "")
        results.append(text)
    assert results[0] == results[1]


@pytest.mark.parametrize(
    "body",
    ["command = nope\n", "command = analyze\naxis = b2 1 2\n", "command = analyze\naxis = scenario 1 2 3 linear\n",
     "command = analyze\naxis = b2 0 1 3 log\n", "command = analyze\naxis = b2 0 1 0 linear\n", "axis = b2 0 1 2 linear\n"],
)
def test_bad_sweep_specs_exit_2(tmp_path, ps_a_cfg, body):
    spec = write_sweep(tmp_path, body, tmp_path / ps_a_cfg.name)
    assert call("sweep", "--spec", str(spec))[0] == 2


def test_jobs_from_environment(monkeypatch):
    monkeypatch.setenv("TRIPWAVE_JOBS", "3")
    assert default_jobs() == 3
    monkeypatch.setenv("TRIPWAVE_JOBS", "zero")
    with pytest.raises(ConfigError):
        default_jobs()
    monkeypatch.delenv("TRIPWAVE_JOBS")
    assert default_jobs() >= 1
