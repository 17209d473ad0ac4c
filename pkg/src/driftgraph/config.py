"""Run configuration: a small TOML-subset reader/writer and the resolved
defaults for every command.

Supported syntax: ``[section]`` tables, ``key = value`` with strings, ints,
floats, booleans and flat arrays.  Every run writes its fully resolved
configuration next to its outputs, so results are reproducible from the
artifact alone.
"""

from __future__ import annotations

import copy


class ConfigError(ValueError):
    """Malformed configuration file or unknown option."""


DEFAULTS: dict = {
    "run": {"seed": 0, "out": "out"},
    "graph": {"file": "", "builtin": "fig1"},
    "discretization": {"n": 64, "horizon": 1.0, "eps": 0.05, "alpha": 1.0, "tau": 0.0},
    "gp": {
        "profile": "test",
        "rate_amplitude": 0.8,
        "rate_cap": 0.0,
        "velocity_range": [0.5, 1.0],
        "t_smooth": 0.02,
        "resample_velocities": True,
    },
    "sensors": {"n_origin": 101, "n_target": 101, "n_init": 101, "n_meas": 101},
    "surrogate": {"kind": "oracle", "path": "", "n_oracle": 64},
    "coupling": {
        "n_times": 64,
        "n_beta": 10,
        "length_scale": 0.2,
        "lr": 2e-2,
        "iterations": 1500,
        "clip_norm": 1.0,
        "lr_decay": 1.0,
        "weight_decay": 0.0,
        "grad_tol": 1e-6,
        "compute_reference": True,
    },
    "inverse": {
        "noise": 0.01,
        "measurement_weight": 1.0,
        "init_n_beta": 10,
        "init_length_scale": 0.2,
        "lr": 5e-2,
        "iterations": 6000,
        "clip_norm": 5.0,
        "lr_decay": 0.9995,
    },
    "generate": {"n_instances": 8, "profile": "train"},
    "errors": {"noise_levels": [0.1, 0.05, 0.01], "n_runs": 3},
}


def _parse_scalar(text: str):
    text = text.strip()
    if not text:
        raise ConfigError("empty value")
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse value {text!r}") from exc


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"unterminated array {text!r}")
        inner = text[1:-1].strip()
        return [] if not inner else [_parse_scalar(p) for p in inner.split(",")]
    return _parse_scalar(text)


def parse_toml(text: str) -> dict:
    out: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: bad section header {line!r}")
            section = line[1:-1].strip()
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = line.split("=", 1)
        out[section][key.strip()] = _parse_value(value)
    return out


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, list):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_toml(cfg: dict) -> str:
    lines = []
    for section in sorted(cfg):
        lines.append(f"[{section}]")
        for key in sorted(cfg[section]):
            lines.append(f"{key} = {_format_value(cfg[section][key])}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str | None) -> dict:
    """Defaults overridden by the file's sections; unknown keys rejected."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            user = parse_toml(fh.read())
        for section, table in user.items():
            if section not in cfg:
                raise ConfigError(f"unknown section [{section}]")
            for key, value in table.items():
                if key not in cfg[section]:
                    raise ConfigError(f"unknown option {key!r} in [{section}]")
                cfg[section][key] = value
    return cfg


def write_config(path, cfg: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_toml(cfg))
