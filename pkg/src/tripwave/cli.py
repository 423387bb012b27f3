"""Command-line entry point.

Every subcommand reads a parameter file (``--config``) or a named preset
(``--preset``).  Exit codes: 0 success, 1 failed verification or violated
hypothesis, 2 usage or configuration error.  Data files never carry
timestamps; human-oriented log lines start with ``#``.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import bvp, pde
from .config import ALL_KEYS, OPTION_KEYS, format_config, load_config, parse_config
from .errors import ConfigError, HypothesisViolated, TripwaveError
from .model import PRESETS, PARAM_KEYS, Params, check_conditions, derive

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class Outcome:
    code: int
    outcome: str  # pass, fail, hypothesis-violated, error
    headline: float = math.nan
    path: str = ""
    lines: list = field(default_factory=list)


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return "none"
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


# --------------------------------------------------------------------------
# subcommands


def cmd_analyze(p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    q = derive(p)
    rep = check_conditions(p, opt.get("s"))
    lines = ["quantity,value"]
    for name in ("u_star", "w_star", "v_lowstar", "w_lowstar", "beta_upper", "beta_lower",
                 "Delta", "Delta_u", "Delta_v", "Delta_w", "gamma2", "s_upper", "s_lower"):
        lines.append(f"{name},{_fmt(getattr(q, name))}")
    lines.append(f"Ec,{'none' if q.Ec is None else ' '.join(_fmt(c) for c in q.Ec)}")
    lines.append("condition,holds")
    for k, v in rep.as_dict().items():
        if k not in ("notes", "speed"):
            lines.append(f"{k},{_fmt(v)}")
    lines += [f"# {n}" for n in rep.notes]
    return Outcome(EXIT_OK, "pass", q.s_upper if q.s_upper is not None else math.nan, lines=lines)


def cmd_verify_ul(p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    from .waves_analytic import build_ul, verify_ul

    if "case" not in opt:
        raise UsageError("--case is required")
    c = build_ul(p, opt.get("s"), opt["case"])
    path = ""
    if out is not None:
        path = str(out / "verification.csv")
    rep = verify_ul(c, tol=opt.get("tol", 1e-10), n=opt.get("n_points", 10_000), csv_path=path or None)
    lines = rep.summary().splitlines()
    worst = max(abs(r.worst) for r in rep.inequalities.values())
    return Outcome(EXIT_OK if rep.passed else EXIT_FAIL, "pass" if rep.passed else "fail", worst, path, lines)


def cmd_rect(p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    from .waves_analytic import default_delta3, eps_max, rectangle_signs

    delta3 = opt.get("delta3", None)
    if delta3 is None:
        delta3 = default_delta3(p)
    emax = eps_max(p, delta3)
    eps = opt.get("eps", emax / 2)
    thetas = [opt["theta"]] if "theta" in opt else [i / 10 for i in range(10)]
    lines = [f"# delta3={_fmt(delta3)} eps={_fmt(eps)} eps_max={_fmt(emax)}",
             "theta,M1theta,alpha2,omega2,alpha3,omega3,signs_ok"]
    ok = True
    for th in thetas:
        rc = rectangle_signs(p, th, eps, delta3)
        ok &= rc.signs_ok
        lines.append(",".join(_fmt(x) for x in (th, rc.M1theta, rc.alpha2, rc.omega2, rc.alpha3, rc.omega3, rc.signs_ok)))
    path = ""
    if out is not None:
        path = str(out / "rectangles.csv")
        Path(path).write_text("\n".join(l for l in lines if not l.startswith("#")) + "\n")
    return Outcome(EXIT_OK if ok else EXIT_FAIL, "pass" if ok else "fail", emax, path, lines)


def cmd_lyapunov(p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    from .waves_analytic import lyapunov_check, random_positive_starts

    starts = random_positive_starts(opt.get("n_starts", 100), opt.get("seed", 0))
    r = lyapunov_check(p, starts, opt.get("lyap_t_end", 5000.0), opt.get("kinetic_dt"),
                       conv_tol=opt.get("conv_tol", 1e-6))
    lines = [
        f"starts {r.n_starts}",
        f"t_end {_fmt(r.t_end)}",
        f"dt {_fmt(r.dt)}",
        f"max_step_increase {r.max_increase:.6e}",
        f"monotone {r.monotone}",
        f"max_lie_derivative {r.max_lie:.6e}",
        f"terminal_distance {r.terminal_distance:.6e}",
        f"converged {r.converged}",
    ]
    ok = r.monotone and r.converged
    return Outcome(EXIT_OK if ok else EXIT_FAIL, "pass" if ok else "fail", r.terminal_distance, lines=lines)


def _simulation(p: Params, opt: dict):
    sc = pde.Scenario(opt.get("scenario", "invade-estar"), opt.get("amplitude", 0.1), opt.get("width", 2.0))
    g = pde.Grid.from_dx(opt.get("x_min", 0.0), opt.get("x_max", 400.0), opt.get("dx", 0.2))
    res = pde.run(
        g, p, sc, opt.get("t_end", 150.0),
        sample_every=opt.get("sample_every", 100),
        cfl_factor=opt.get("cfl_factor", 0.2),
        level_frac=opt.get("level_frac", 0.5),
        keep_snapshots="snapshot_every" in opt and opt["snapshot_every"] > 0,
    )
    return sc, res


def _write_run(res, out: Path, every: int) -> str:
    out.mkdir(parents=True, exist_ok=True)
    front = out / "front.csv"
    pde.write_front_csv(front, res)
    if every > 0:
        for snap in res.snapshots[::every]:
            pde.write_snapshot_csv(out / pde.snapshot_name(snap.t), snap)
    pde.write_snapshot_csv(out / pde.snapshot_name(res.terminal.t), res.terminal)
    return str(front)


def cmd_simulate(p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    sc, res = _simulation(p, opt)
    xf = res.fronts[res.alien][-1] if res.alien in res.fronts else math.nan
    path = _write_run(res, out, opt.get("snapshot_every", 0)) if out is not None else ""
    lines = [
        f"t_end {_fmt(float(res.times[-1]))}",
        f"front_{res.alien} {_fmt(float(xf))}",
        f"min_value {res.min_value:.6e}",
        f"max_value {res.max_value:.6e}",
    ]
    return Outcome(EXIT_OK, "pass", float(xf), path, lines)


def cmd_speed(p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    sc, res = _simulation(p, opt)
    est = pde.run_speed(res, fit_start_frac=opt.get("fit_start_frac", 0.4))
    q = derive(p)
    s_min = q.s_lower if sc.tag == "invade-elow" else q.s_upper
    path = _write_run(res, out, opt.get("snapshot_every", 0)) if out is not None else ""
    lines = [f"species {est.species}", f"level {_fmt(est.level)}", f"speed {est.speed:.10g}",
             f"fit_residual {est.residual:.3e}", f"minimal_speed {_fmt(s_min)}"]
    if s_min:
        lines.append(f"relative_error {abs(est.speed - s_min) / s_min:.6e}")
    try:
        tail = pde.tail_classify(res.terminal, p, front_x=float(res.fronts[res.alien][-1]))
        lines.append(f"tail {tail.label} {tail.deviation:.3e}")
    except TripwaveError as exc:
        lines.append(f"# tail not classified: {exc}")
    return Outcome(EXIT_OK, "pass", est.speed, path, lines)


def _profile_states(p: Params, opt: dict):
    q = derive(p)
    scenario = opt.get("scenario", "invade-estar")
    target = opt.get("target", "auto")
    if scenario == "invade-elow":
        left = q.E_lower
        default = q.Ec if q.Ec is not None else q.E_upper
    else:
        left = q.E_upper
        default = q.Ec if (q.Ec is not None and q.beta_lower > 0) else q.E_lower
    table = {"auto": default, "Ec": q.Ec, "ELow": q.E_lower, "EStar": q.E_upper}
    if target not in table:
        raise UsageError(f"unknown target {target!r}")
    if table[target] is None:
        raise HypothesisViolated("coexistence state exists")
    return left, table[target]


def _profile_grid(opt: dict) -> np.ndarray:
    return bvp.default_grid(opt.get("z_left", -150.0), opt.get("z_right", 150.0), opt.get("m", 3001))


def _seed(p, s, left, right, opt):
    init = opt.get("init", "tanh")
    z = _profile_grid(opt)
    if init == "tanh":
        return bvp.tanh_guess(z, s, left, right, opt.get("tanh_width", 5.0), bvp.phase_species_for(p, left))
    return init


def cmd_bvp(p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    if "s" not in opt:
        raise UsageError("--s is required")
    s = opt["s"]
    left, right = _profile_states(p, opt)
    wp = bvp.solve_profile(p, s, left, right, init=_seed(p, s, left, right, opt), z=_profile_grid(opt))
    path = ""
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        path = str(out / "profile.csv")
        wp.to_csv(path)
        (out / "solver.log").write_text(wp.log_text() + "\n")
    lines = [f"s {_fmt(s)}", f"iterations {len(wp.log) - 1}", f"residual {wp.residual_norm:.3e}",
             f"endpoint_mismatch {wp.endpoint_mismatch():.3e}"]
    return Outcome(EXIT_OK, "pass", wp.residual_norm, path, lines)


def cmd_continue(p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    for key in ("s_from", "s_to"):
        if key not in opt:
            raise UsageError(f"{key} is required")
    s0 = opt["s_from"]
    left, right = _profile_states(p, opt)
    seed = bvp.solve_profile(p, s0, left, right, init=_seed(p, s0, left, right, opt), z=_profile_grid(opt))
    cr = bvp.continue_in_speed(p, s0, opt["s_to"], opt.get("n_steps", 50), seed)
    q = derive(p)
    s_min = q.s_lower if opt.get("scenario") == "invade-elow" else q.s_upper
    lines = [f"last_good {_fmt(cr.last_good)}", f"failed_at {_fmt(cr.failed_at)}", f"minimal_speed {_fmt(s_min)}"]
    if cr.failure:
        lines.append(f"# {cr.failure}")
    path = ""
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        path = str(out / "continuation.csv")
        rows = ["s,status"] + [f"{s:.15g},ok" for s in cr.speeds]
        if cr.failed_at is not None:
            rows.append(f"{cr.failed_at:.15g},failed")
        Path(path).write_text("\n".join(rows) + "\n")
    return Outcome(EXIT_OK, "pass", cr.last_good, path, lines)


COMMANDS = {
    "analyze": cmd_analyze,
    "verify-ul": cmd_verify_ul,
    "rect": cmd_rect,
    "lyapunov": cmd_lyapunov,
    "simulate": cmd_simulate,
    "speed": cmd_speed,
    "bvp": cmd_bvp,
    "continue": cmd_continue,
}


def execute(command: str, p: Params, opt: dict, out: Optional[Path]) -> Outcome:
    """Run one subcommand, mapping library failures onto outcomes."""
    try:
        return COMMANDS[command](p, opt, out)
    except HypothesisViolated as exc:
        return Outcome(EXIT_FAIL, "hypothesis-violated", lines=[f"# hypothesis violated: {exc.condition}"])
    except (UsageError, ConfigError, ValueError) as exc:
        return Outcome(EXIT_USAGE, "error", lines=[f"# error: {exc}"])
    except TripwaveError as exc:
        return Outcome(EXIT_FAIL, "fail", lines=[f"# {type(exc).__name__}: {exc}"])


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class Axis:
    key: str
    lo: float
    hi: float
    n: int
    spacing: str

    def values(self) -> list[float]:
        if self.n == 1:
            return [self.lo]
        if self.spacing == "log":
            return list(np.geomspace(self.lo, self.hi, self.n))
        return list(np.linspace(self.lo, self.hi, self.n))


@dataclass
class SweepSpec:
    base: Path
    command: str
    axes: list
    out: Path
    options: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    index: int
    values: tuple
    outcome: str
    headline: float
    path: str


def parse_sweep(text: str, origin: Path = Path(".")) -> SweepSpec:
    """Sweep file: ``base``, ``command``, ``out`` and ``axis = key min max n linear|log``
    lines; any other known key is passed to every point."""
    base = command = out = None
    axes, extra = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (x.strip() for x in body.split("=", 1))
        if key == "base":
            base = (origin / raw) if not Path(raw).is_absolute() else Path(raw)
        elif key == "command":
            if raw not in COMMANDS:
                raise ConfigError(f"line {lineno}: unknown command {raw!r}")
            command = raw
        elif key == "out":
            out = (origin / raw) if not Path(raw).is_absolute() else Path(raw)
        elif key == "axis":
            parts = raw.split()
            if len(parts) != 5 or parts[4] not in ("linear", "log"):
                raise ConfigError(f"line {lineno}: axis needs 'key min max n linear|log'")
            k = parts[0]
            if k not in ALL_KEYS or (k in OPTION_KEYS and OPTION_KEYS[k] != "number"):
                raise ConfigError(f"line {lineno}: {k!r} is not a numeric config key")
            try:
                lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from exc
            if n < 1:
                raise ConfigError(f"line {lineno}: axis needs at least one point")
            if parts[4] == "log" and (lo <= 0 or hi <= 0):
                raise ConfigError(f"line {lineno}: log axis needs positive ends")
            axes.append(Axis(k, lo, hi, n, parts[4]))
        else:
            extra.append(line)
    if base is None or command is None:
        raise ConfigError("sweep needs 'base' and 'command'")
    if len({a.key for a in axes}) != len(axes):
        raise ConfigError("repeated axis key")
    options = parse_config("\n".join(extra))
    return SweepSpec(base, command, axes, out or origin / "sweep_out", options)


def _sweep_point(args) -> tuple:
    index, command, config_text, outdir = args
    values = parse_config(config_text)
    from .config import params_from

    try:
        p = params_from(values)
    except ConfigError as exc:
        return index, "error", math.nan, "", str(exc)
    opt = {k: v for k, v in values.items() if k not in PARAM_KEYS}
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.cfg").write_text(config_text)
    res = execute(command, p, opt, outdir)
    (outdir / "result.txt").write_text("\n".join(res.lines) + "\n")
    return index, res.outcome, res.headline, res.path, ""


def default_jobs() -> int:
    env = os.environ.get("TRIPWAVE_JOBS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"TRIPWAVE_JOBS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ConfigError("TRIPWAVE_JOBS must be positive")
        return n
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, jobs: Optional[int] = None) -> list[RunRecord]:
    """Execute every grid point and write ``summary.csv`` in index order."""
    base_p, base_opt = load_config(spec.base)
    grid = list(itertools.product(*[a.values() for a in spec.axes])) if spec.axes else [()]
    tasks = []
    for i, vals in enumerate(grid):
        merged = dict(base_opt)
        merged.update(spec.options)
        p = base_p
        for a, v in zip(spec.axes, vals):
            if a.key in PARAM_KEYS:
                p = p.replace(**{a.key: float(v)})
            else:
                merged[a.key] = float(v)
        text = format_config(Params(**{k: getattr(p, k) for k in PARAM_KEYS}), merged)
        tasks.append((i, spec.command, text, str(spec.out / f"point_{i:04d}")))
    jobs = default_jobs() if jobs is None else jobs
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            results = list(ex.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    records = [RunRecord(i, tuple(float(v) for v in grid[i]), o, h, path) for i, o, h, path, _ in results]
    spec.out.mkdir(parents=True, exist_ok=True)
    with open(spec.out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", *[a.key for a in spec.axes], "outcome", "headline", "path"])
        for r in records:
            w.writerow([r.index, *[f"{v:.15g}" for v in r.values], r.outcome, f"{r.headline:.15g}", r.path])
    return records


# --------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tripwave", description="Three-species invasion waves: analysis, bounds, simulation.",
                     allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, allow_abbrev=False)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path)
        src.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--out", type=Path)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config entry")
        if name in ("verify-ul",):
            sp.add_argument("--case", choices=["estar-super", "estar-critical", "elow-super", "elow-critical"])
        if name in ("analyze", "verify-ul", "bvp"):
            sp.add_argument("--s", type=float)
        if name in ("simulate", "speed", "bvp", "continue"):
            sp.add_argument("--scenario", choices=["invade-estar", "invade-elow"])
    sw = sub.add_parser("sweep", allow_abbrev=False)
    sw.add_argument("--spec", type=Path, required=True)
    sw.add_argument("--jobs", type=int)
    sw.add_argument("--out", type=Path)
    return parser


def _collect(args) -> tuple[Params, dict]:
    if args.config is not None:
        p, opt = load_config(args.config)
    else:
        p, opt = PRESETS[args.preset], {}
    overrides = parse_config("\n".join(args.set))
    for k, v in overrides.items():
        if k in PARAM_KEYS:
            p = p.replace(**{k: v})
        else:
            opt[k] = v
    if overrides:
        from .config import params_from

        p = params_from(p.as_dict())
    for flag in ("case", "s", "scenario"):
        value = getattr(args, flag, None)
        if value is not None:
            opt[flag] = value
    return p, opt


def dispatch(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "sweep":
            spec = parse_sweep(args.spec.read_text() if args.spec.exists() else _missing(args.spec), args.spec.parent)
            if args.out is not None:
                spec.out = args.out
            if args.jobs is not None and args.jobs < 1:
                raise UsageError("--jobs must be positive")
            records = run_sweep(spec, args.jobs)
            for r in records:
                print(f"{r.index} {r.outcome} {_fmt(r.headline)}", file=stdout)
            print(f"# summary: {spec.out / 'summary.csv'}", file=stdout)
            return EXIT_OK
        p, opt = _collect(args)
    except (UsageError, ConfigError) as exc:
        print(f"tripwave: error: {exc}", file=stderr)
        return EXIT_USAGE
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
    res = execute(args.command, p, opt, args.out)
    for line in res.lines:
        print(line, file=stderr if res.code == EXIT_USAGE else stdout)
    return res.code


def _missing(path: Path):
    raise ConfigError(f"cannot read sweep spec {path}")


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
