"""Run configuration: packaged defaults, an optional ``key = value`` file, and the environment."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

DEFAULTS_PATH = Path(__file__).with_name("data") / "defaults.cfg"
CACHE_ENV = "ZML_CACHE"
SECTION = "zml"


@dataclass(frozen=True)
class RunConfig:
    p4_a0: float
    p4_a1: float
    p4_a2: float
    p4_a3: float
    e2_envelope: float
    e2_envelope_top: float
    p4_a4: float | None = None
    xi: float = 0.5
    threads: int = 1
    cache: str | None = None
    spectral: str | None = None
    output: str = "csv"
    seed: int = 0
    tol_zeta: float = 1e-10
    tol_moment: float = 1e-7
    tol_kernel: float = 1e-10
    tol_psi: float = 1e-8
    tol_spectral: float = 1e-8
    tol_z2: float = 1e-2

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0 < self.xi <= 0.5:
            raise ValueError("xi must lie in (0, 1/2]")
        if not self.e2_envelope > 0:
            raise ValueError("e2_envelope must be positive")
        if self.output not in ("csv", "json"):
            raise ValueError("output must be csv or json")
        for name, value in self.tolerances.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.p4_a4 is not None:
            from .moments import A4
            if abs(self.p4_a4 - A4) > 1e-15:
                raise ValueError(f"p4_a4 must equal 1/(2 pi^2) = {A4!r}")

    @property
    def tolerances(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name.startswith("tol_")}

    @property
    def p4_lower(self) -> tuple[float, float, float, float]:
        return (self.p4_a0, self.p4_a1, self.p4_a2, self.p4_a3)

    def polynomial(self):
        from .moments import MomentPolynomial
        return MomentPolynomial.from_lower(self.p4_lower)


def _read(path) -> dict[str, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path) as fh:
        parser.read_string(f"[{SECTION}]\n" + fh.read(), source=str(path))
    return dict(parser[SECTION])


def _coerce(values: dict[str, str]) -> dict:
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, raw in values.items():
        if key not in types:
            raise ValueError(f"unknown configuration key {key!r}")
        t = types[key]
        if t == "int":
            out[key] = int(raw)
        elif t.startswith("float"):
            out[key] = float(raw) if raw else None
        elif t == "str":
            out[key] = raw
        else:
            out[key] = raw or None
    return out


def load_config(path=None, environ=None, **overrides) -> RunConfig:
    """Packaged defaults, then ``path``, then $ZML_CACHE, then keyword overrides."""
    environ = os.environ if environ is None else environ
    values = _coerce(_read(DEFAULTS_PATH))
    if path is not None:
        values.update(_coerce(_read(path)))
    if environ.get(CACHE_ENV):
        values["cache"] = environ[CACHE_ENV]
    cfg = RunConfig(**values)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg


def default_polynomial():
    return load_config(environ={}).polynomial()


def default_envelope() -> float:
    return load_config(environ={}).e2_envelope
