"""Run configuration: flat dotted-key text files, JSON accepted as an alternative.

A config is a mapping from dotted section keys to scalars; the text form
is one ``key = value`` pair per line with ``#`` comments, the JSON form a
flat object with the same keys.  Parsing, serializing, and re-parsing is
an identity on the typed configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace

from .errors import InputError


def _parse_modes(text: str):
    text = text.strip()
    if not text:
        return ()
    out = []
    for item in text.split(";"):
        n, c = item.split(":")
        out.append((int(n), float(c)))
    return tuple(out)


def _format_modes(modes) -> str:
    return ";".join(f"{n}:{c!r}" for n, c in modes)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise InputError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    """Typed run configuration; ``None`` marks an omitted optional key."""

    gamma: float = None
    zeta0: float = None
    J: float = None
    S0: float = None
    E0: float | None = None
    u0: float | None = None
    resolution: int = 2001
    kappa0: float | None = None
    kappaL: float | None = None
    d: float | None = None
    L: float | None = None
    n_x1: int = 401
    m: int = 16
    sigma: float = 0.0
    s_modes: tuple = ()
    e_modes: tuple = ()
    w_modes: tuple = ()
    tol_eps: float = 1e-6
    tol_outer: float = 1e-9
    tol_root: float = 1e-12
    theta: float = 1.0
    eps0: float = 0.1
    eps_cap: int = 20
    max_outer: int = 100
    sigma_cap: float | None = None
    out_dir: str = "out"
    override_certificate: bool = False
    emit_fields: bool = True
    emit_traces: bool = True

    def validate(self) -> "RunConfig":
        for name in ("gamma", "zeta0", "J", "S0"):
            if getattr(self, name) is None:
                raise InputError(f"missing required key gas.{name}")
        inlet = [k for k in ("u0", "kappa0") if getattr(self, k) is not None]
        exit_ = [k for k in ("L", "kappaL") if getattr(self, k) is not None]
        if self.d is not None:
            if inlet or exit_:
                raise InputError("window.d excludes u0/kappa0 and L/kappaL")
        else:
            if len(inlet) != 1:
                raise InputError("provide exactly one of background.u0 and window.kappa0")
            if len(exit_) != 1:
                raise InputError("provide exactly one of domain.L and window.kappaL")
        return self


_KEYMAP = {
    "gas.gamma": ("gamma", float),
    "gas.zeta0": ("zeta0", float),
    "gas.J": ("J", float),
    "gas.S0": ("S0", float),
    "gas.E0": ("E0", float),
    "background.u0": ("u0", float),
    "background.resolution": ("resolution", int),
    "window.kappa0": ("kappa0", float),
    "window.kappaL": ("kappaL", float),
    "window.d": ("d", float),
    "domain.L": ("L", float),
    "grid.n_x1": ("n_x1", int),
    "grid.m": ("m", int),
    "boundary.sigma": ("sigma", float),
    "boundary.s_modes": ("s_modes", _parse_modes),
    "boundary.e_modes": ("e_modes", _parse_modes),
    "boundary.w_modes": ("w_modes", _parse_modes),
    "tol.eps": ("tol_eps", float),
    "tol.outer": ("tol_outer", float),
    "tol.root": ("tol_root", float),
    "damping.theta": ("theta", float),
    "solver.eps0": ("eps0", float),
    "solver.eps_cap": ("eps_cap", int),
    "solver.max_outer": ("max_outer", int),
    "solver.sigma_cap": ("sigma_cap", float),
    "output.dir": ("out_dir", str),
    "flags.override_certificate": ("override_certificate", _parse_bool),
    "flags.emit_fields": ("emit_fields", _parse_bool),
    "flags.emit_traces": ("emit_traces", _parse_bool),
}

_FIELD_TO_KEY = {attr: key for key, (attr, _) in _KEYMAP.items()}
_DEFAULTS = RunConfig()


def config_from_mapping(raw: dict) -> RunConfig:
    kw = {}
    for key, value in raw.items():
        if key not in _KEYMAP:
            raise InputError(f"unknown config key {key!r}")
        attr, conv = _KEYMAP[key]
        if conv is _parse_modes and not isinstance(value, str):
            kw[attr] = tuple((int(n), float(c)) for n, c in value)
        elif conv is _parse_bool and isinstance(value, bool):
            kw[attr] = value
        else:
            kw[attr] = conv(value)
    return RunConfig(**kw).validate()


def parse_config(text: str) -> RunConfig:
    """Parse the flat key-value form or, if the text is a JSON object, that."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise InputError("JSON config must be an object of dotted keys")
        return config_from_mapping({k: v for k, v in raw.items()})
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        raw[key.strip()] = value.strip()
    return config_from_mapping(raw)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical flat text form (sorted keys, omitted optionals skipped)."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        default = getattr(_DEFAULTS, f.name)
        if value is None and default is None:
            continue
        key = _FIELD_TO_KEY[f.name]
        if isinstance(value, tuple):
            text = _format_modes(value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(sorted(lines)) + "\n"


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **kw).validate()
