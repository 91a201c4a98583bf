"""Flat ``section.key = value`` configuration files.

Lines starting with ``#`` are comments.  Every key is declared in ``KEYS``
with a parser and a default; ``REQUIRED`` is the sentinel for keys without
one.  Any problem raises ``ConfigError`` naming the offending key, which the
CLI turns into exit status 1.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from ..eigsolve import SolverError, SolverOptions
from ..energy import LOCAL_FORMS, TAIL_MODELS, EnergyError, OperatorParams
from ..geometry import (
    Annulus,
    Ball,
    GeometryError,
    Lattice,
    Polarizer,
    Rectangle,
    Shape,
    random_blob,
)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


REQUIRED = object()

EXPERIMENTS = (
    "eig",
    "polarize-set",
    "polarize-fn",
    "schwarz",
    "annulus-sweep",
    "fk-polarization",
    "fk-classical",
    "validate",
)


# --- value parsers -----------------------------------------------------------


def _float(text: str) -> float:
    return float(text)


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _candidates(text: str) -> int | None:
    if text.lower() == "all":
        return None
    k = int(text)
    if k < 1:
        raise ValueError("must be >= 1 or 'all'")
    return k


def _auto_float(text: str) -> float | None:
    return None if text.lower() == "auto" else float(text)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


def _polarizers(text: str) -> tuple[str, ...]:
    # dimension is only known once the shape is parsed; validate the syntax now
    items = tuple(t.strip() for t in text.split(";") if t.strip())
    for item in items:
        if not re.fullmatch(r"-?(e1|e2|d\+|d-)\s*<\s*\S+", item):
            raise ValueError(f"bad polarizer {item!r} (expected e.g. 'e1<0.5')")
        float(item.split("<")[1])
    return items


_TOKEN = re.compile(r"\s*(?:(union|minus)\b|([a-z]+)\s*\(([^()]*)\))\s*")


def parse_shape(text: str) -> Shape:
    """Parse ``ball(...) union rect(...) minus ball(...)`` (left to right)."""
    pos, shape, pending = 0, None, None
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse shape near {text[pos:]!r}")
        pos = m.end()
        if m.group(1):
            if shape is None or pending is not None:
                raise ValueError(f"misplaced {m.group(1)!r}")
            pending = m.group(1)
            continue
        part = _primitive(m.group(2), _floats(m.group(3)))
        if shape is None:
            shape = part
        elif pending is None:
            raise ValueError("two shapes without union/minus between them")
        else:
            shape = shape.union(part) if pending == "union" else shape.minus(part)
            pending = None
    if shape is None or pending is not None:
        raise ValueError("incomplete shape expression")
    return shape


def _primitive(name: str, args: tuple[float, ...]) -> Shape:
    n = len(args)
    if name == "ball" and n in (2, 3):
        return Ball(tuple(args[:-1]), args[-1])
    if name == "annulus" and n == 4:
        return Annulus(args[0], args[1], (args[2], args[3]))
    if name == "rect" and n in (2, 4):
        half = n // 2
        return Rectangle(tuple(args[:half]), tuple(args[half:]))
    if name == "blob" and 1 <= n <= 3:
        seed, *rest = args
        kw = dict(zip(("count", "radius"), rest))
        if "count" in kw:
            kw["count"] = int(kw["count"])
        return random_blob(int(seed), **kw)
    raise ValueError(f"unknown shape {name}() with {n} arguments")


def _shapes(text: str) -> tuple[Shape, ...]:
    return tuple(parse_shape(t) for t in text.split(";") if t.strip())


# --- declared keys -------------------------------------------------------------

KEYS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "lattice.h": (_positive, None),
    "lattice.padding": (_auto_float, None),
    "lattice.half_extent": (_int, None),
    "lattice.extent": (_ints, None),
    "lattice.origin": (_floats, None),
    "domain.shape": (parse_shape, None),
    "domain.shapes": (_shapes, None),
    "operator.p": (_float, 2.0),
    "operator.s": (_float, 0.5),
    "operator.a": (_float, 1.0),
    "operator.b": (_float, 1.0),
    "operator.tail": (_bool, True),
    "operator.tail_model": (_choice(*TAIL_MODELS), "lattice"),
    "operator.local_form": (_choice(*LOCAL_FORMS), "edge"),
    "solver.method": (_choice("auto", "p2", "descent"), "auto"),
    "solver.tol_rel": (_auto_float, None),
    "solver.max_iter": (_int, 5000),
    "solver.step_init": (_positive, 1.0),
    "solver.backtrack_factor": (_float, 0.5),
    "polarize.polarizers": (_polarizers, None),
    "polarize.function": (_choice("eigenfunction", "depth"), "eigenfunction"),
    "polarize.cold_check": (_bool, True),
    "annulus.R": (_positive, 1.0),
    "annulus.r": (_positive, 0.3),
    "annulus.t": (_floats, None),
    "annulus.mirror_check": (_bool, True),
    "schwarz.input": (_choice("eigenfunction", "bump", "mirrored-bump"), "eigenfunction"),
    "schwarz.mirror": (_polarizers, None),
    "schwarz.center": (_floats, None),
    "schwarz.bump_center": (_floats, None),
    "schwarz.bump_radius": (_positive, None),
    "schwarz.budget": (_int, 50),
    "schwarz.candidates": (_candidates, 16),
    "schwarz.max_ratio": (_auto_float, None),
    "check.tol": (_auto_float, None),
    "check.margin_min": (_float, 1e-3),
    "check.descent_agreement": (_positive, 1e-4),
    "validate.set_cases": (_int, 200),
    "validate.chain_cases": (_int, 60),
    "validate.general_cases": (_int, 20),
    "validate.gradient_cases": (_int, 6),
    "validate.oracle_cases": (_int, 5),
    "run.seed": (_int, 0),
    "run.workers": (_int, 1),
}


@dataclass
class ExperimentConfig:
    """Typed view of a parsed config file."""

    values: dict[str, Any]
    source: str = "<memory>"

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def require(self, *keys: str) -> None:
        for key in keys:
            if self.values.get(key) is None:
                raise ConfigError(key, "required for this experiment")

    @property
    def seed(self) -> int:
        return self.values["run.seed"]

    def params(self) -> OperatorParams:
        v = self.values
        try:
            return OperatorParams(
                v["operator.p"], v["operator.s"], v["operator.a"], v["operator.b"],
                v["operator.tail"], v["operator.local_form"], v["operator.tail_model"],
            )
        except EnergyError as exc:
            raise ConfigError("operator", str(exc)) from exc

    def solver_options(self) -> SolverOptions:
        v = self.values
        try:
            return SolverOptions(
                tol_rel=v["solver.tol_rel"],
                max_iter=v["solver.max_iter"],
                step_init=v["solver.step_init"],
                backtrack_factor=v["solver.backtrack_factor"],
                seed=v["run.seed"],
            )
        except SolverError as exc:
            raise ConfigError("solver", str(exc)) from exc

    def method(self) -> str:
        m = self.values["solver.method"]
        if m == "auto":
            return "p2" if self.values["operator.p"] == 2.0 else "descent"
        if m == "p2" and self.values["operator.p"] != 2.0:
            raise ConfigError("solver.method", "p2 requires operator.p = 2")
        return m

    def lattice_for(self, shape: Shape) -> Lattice:
        """Explicit box if configured, else an origin-centered box around ``shape``."""
        v = self.values
        h = v["lattice.h"]
        try:
            if v["lattice.extent"] is not None:
                extent = v["lattice.extent"]
                origin = v["lattice.origin"]
                if origin is None:
                    origin = tuple(-(n - 1) * h / 2 for n in extent)
                if len(origin) != len(extent):
                    raise ConfigError("lattice.origin", "must have one entry per axis")
                return Lattice(h, extent, origin)
            if v["lattice.half_extent"] is not None:
                return Lattice.centered(h, v["lattice.half_extent"], dim=len(shape.bounds()[0]))
            return Lattice.for_shape(shape, h, v["lattice.padding"])
        except GeometryError as exc:
            raise ConfigError("lattice", str(exc)) from exc

    def polarizers(self, dim: int) -> list[Polarizer]:
        items = self.values["polarize.polarizers"]
        if not items:
            raise ConfigError("polarize.polarizers", "required for this experiment")
        try:
            return [Polarizer.parse(t, dim) for t in items]
        except GeometryError as exc:
            raise ConfigError("polarize.polarizers", str(exc)) from exc

    def tolerance(self, lam: float, method: str) -> float:
        """Absolute slack for asserted inequalities: 10 * tol_rel * lambda unless set."""
        if self.values["check.tol"] is not None:
            return self.values["check.tol"]
        return 10.0 * self.solver_options().tol_for(method) * abs(lam)

    def echo(self) -> dict[str, str]:
        """Canonical text form of every key, for the JSON report."""
        out = {}
        for key in sorted(self.values):
            val = self.values[key]
            if isinstance(val, Shape):
                val = val.describe()
            elif isinstance(val, tuple) and val and isinstance(val[0], Shape):
                val = "; ".join(s.describe() for s in val)
            elif isinstance(val, tuple):
                val = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in val)
            out[key] = "" if val is None else (repr(val) if isinstance(val, float) else str(val))
        return out


def parse_config_text(text: str, source: str = "<memory>", overrides: dict[str, str] | None = None) -> ExperimentConfig:
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'section.key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        if key in raw:
            raise ConfigError(key, f"duplicate key (line {raw[key][1]} and {lineno})")
        raw[key] = (value, lineno)
    for key, value in (overrides or {}).items():
        raw[key] = (value, 0)

    values: dict[str, Any] = {}
    for key, (parser, default) in KEYS.items():
        if key in raw:
            text_value = raw[key][0]
            try:
                values[key] = parser(text_value)
            except (ValueError, GeometryError) as exc:
                raise ConfigError(key, f"cannot parse {text_value!r}: {exc}") from exc
        elif default is REQUIRED:
            raise ConfigError(key, "missing required key")
        else:
            values[key] = default
    if values["run.workers"] < 1:
        raise ConfigError("run.workers", "must be >= 1")
    return ExperimentConfig(values, source)


def parse_config(path: str | Path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc}") from exc
    return parse_config_text(text, str(path), overrides)
