"""Plain-text ``key = value`` configuration files.

One assignment per line, ``#`` starts a comment, whitespace is ignored.
Numeric values must be plain decimal literals (an exponent is allowed);
a handful of keys take words instead.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Union

from .errors import ConfigError, InvalidParams
from .model import PARAM_KEYS, Params, validate

NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
WORD = re.compile(r"^[A-Za-z][A-Za-z0-9_'\-]*$")

# option keys beyond the model parameters, with their value kind
OPTION_KEYS = {
    # simulation
    "scenario": "word",
    "amplitude": "number",
    "width": "number",
    "x_min": "number",
    "x_max": "number",
    "dx": "number",
    "cfl_factor": "number",
    "t_end": "number",
    "sample_every": "int",
    "level_frac": "number",
    "fit_start_frac": "number",
    "snapshot_every": "int",
    # analytic bounds and rectangles
    "s": "number",
    "case": "word",
    "tol": "number",
    "n_points": "int",
    "theta": "number",
    "eps": "number",
    "delta3": "number",
    # Lyapunov check
    "n_starts": "int",
    "seed": "int",
    "kinetic_dt": "number",
    "lyap_t_end": "number",
    "conv_tol": "number",
    # profiles
    "target": "word",
    "init": "word",
    "z_left": "number",
    "z_right": "number",
    "m": "int",
    "tanh_width": "number",
    "s_from": "number",
    "s_to": "number",
    "n_steps": "int",
}

ALL_KEYS = frozenset(PARAM_KEYS) | frozenset(OPTION_KEYS)


def _convert(key: str, raw: str, lineno: int):
    kind = "number" if key in PARAM_KEYS else OPTION_KEYS[key]
    if kind == "word":
        if not WORD.match(raw):
            raise ConfigError(f"line {lineno}: {key} expects a word, got {raw!r}")
        return raw
    if not NUMBER.match(raw):
        raise ConfigError(f"line {lineno}: {key} expects a decimal literal, got {raw!r}")
    if kind == "int":
        value = float(raw)
        if value != int(value):
            raise ConfigError(f"line {lineno}: {key} expects an integer, got {raw!r}")
        return int(value)
    return float(raw)


def parse_config(text: str, allowed=ALL_KEYS) -> dict:
    """Parse configuration text into a dict; unknown or repeated keys are errors."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _convert(key, raw, lineno)
    return out


def params_from(values: dict) -> Params:
    missing = [k for k in PARAM_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing parameter(s): {', '.join(missing)}")
    p = Params(**{k: values[k] for k in PARAM_KEYS})
    try:
        validate(p)
    except InvalidParams as exc:
        raise ConfigError(f"invalid parameters: {exc.constraint}") from exc
    return p


def load_config(path: Union[str, Path]) -> tuple[Params, dict]:
    """Read a file and split it into parameters and options."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    values = parse_config(text)
    options = {k: v for k, v in values.items() if k not in PARAM_KEYS}
    return params_from(values), options


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def format_config(p: Params, options: dict | None = None) -> str:
    lines = [f"{k} = {_fmt(getattr(p, k))}" for k in PARAM_KEYS]
    for k, v in (options or {}).items():
        lines.append(f"{k} = {_fmt(v)}")
    return "\n".join(lines) + "\n"
