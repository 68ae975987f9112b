"""Run defaults and ``key=value`` config files."""
from __future__ import annotations

DEFAULTS: dict[str, object] = {
    "example": 1,
    "seed": 0,
    "n_fine": 128,
    "n": 12,
    "L": 5,
    "M": 5,
    "delta": 1e-2,
    "alpha": 3e-7,
    "C0": 0.1,
    "nu_x": 1.0,
    "nu_y": 0.0,
    "c_lower_floor": 0.05,
    "max_iters": 500,
    "grad_tol": 1e-8,
    "theta_power": 3.0,
}


def load_config(path) -> dict[str, object]:
    """Parse ``key=value`` lines; values take the type of the matching default."""
    out: dict[str, object] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in DEFAULTS:
                raise ValueError(f"{path}:{lineno}: unknown or malformed entry {raw.strip()!r}")
            kind = type(DEFAULTS[key])
            out[key] = kind(float(value)) if kind is int else kind(value)
    return out


def resolve(overrides: dict | None = None, config_file=None) -> dict[str, object]:
    """Defaults, then the config file, then explicit (non-None) overrides."""
    cfg = dict(DEFAULTS)
    if config_file:
        cfg.update(load_config(config_file))
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    return cfg
