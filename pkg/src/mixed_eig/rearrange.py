"""Grid functions and their rearrangements.

Polarization acts on the zero extension of a function: a node whose mirror
falls off the box pairs with an exterior zero.  Schwarz symmetrization is
done by rank-fill, which permutes the value multiset exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    DomainMask,
    GeometryError,
    Lattice,
    Polarizer,
    Reflection,
    _polarize_flat,
    nodes_by_distance,
    polarize_mask,
    reflection_map,
)


class RearrangeError(ValueError):
    pass


class GridFunction:
    """Real values on the lattice box, zero outside ``support_mask``."""

    __slots__ = ("lattice", "support_mask", "values")

    def __init__(self, support_mask: DomainMask, values):
        values = np.array(values, dtype=float).reshape(support_mask.lattice.extent)
        if np.any(values[~support_mask.inside] != 0):
            raise RearrangeError("grid function is nonzero outside its support mask")
        self.lattice: Lattice = support_mask.lattice
        self.support_mask = support_mask
        self.values = values

    def __repr__(self):
        return f"GridFunction(support={self.support_mask.count}, max={self.values.max():.4g})"

    def scaled(self, c: float) -> "GridFunction":
        return GridFunction(self.support_mask, c * self.values)

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    @classmethod
    def from_function(cls, mask: DomainMask, fn) -> "GridFunction":
        """Sample ``fn(coords)`` on the mask nodes."""
        vals = np.where(mask.inside, fn(mask.lattice.node_coords()), 0.0)
        return cls(mask, vals)

    # --- portable I/O ---

    def to_text(self) -> str:
        """Header comment with the lattice, then one ``i [j] value`` line per support node."""
        lat = self.lattice
        lines = [f"# h={lat.h!r} extent={','.join(map(str, lat.extent))} "
                 f"origin={','.join(repr(o) for o in lat.origin)}"]
        for flat in self.support_mask.flat_indices():
            idx = np.unravel_index(flat, lat.extent)
            lines.append(" ".join(str(int(i)) for i in idx) + f" {float(self.values.flat[flat])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GridFunction":
        lines = text.strip().splitlines()
        header = dict(kv.split("=") for kv in lines[0].lstrip("# ").split())
        lat = Lattice(
            float(header["h"]),
            tuple(int(v) for v in header["extent"].split(",")),
            tuple(float(v) for v in header["origin"].split(",")),
        )
        inside = np.zeros(lat.extent, dtype=bool)
        vals = np.zeros(lat.extent)
        for line in lines[1:]:
            *idx, v = line.split()
            key = tuple(int(i) for i in idx)
            inside[key] = True
            vals[key] = float(v)
        return cls(DomainMask(lat, inside), vals)

    def write_binary(self, path: str | Path) -> None:
        """Flat little-endian float64 values in row-major box order."""
        Path(path).write_bytes(self.values.astype("<f8").tobytes())

    @classmethod
    def read_binary(cls, path: str | Path, support_mask: DomainMask) -> "GridFunction":
        vals = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
        return cls(support_mask, vals.reshape(support_mask.lattice.extent))


def lp_distance(u: GridFunction, v: GridFunction, p: float) -> float:
    diff = np.abs(u.values - v.values)
    return float((u.lattice.cell_volume * np.sum(diff**p)) ** (1.0 / p))


def polarize_function(u: GridFunction, H: Polarizer, refl: Reflection | None = None) -> GridFunction:
    """max(u, u o sigma) on H, min(u, u o sigma) off the closure of H, u on the hyperplane."""
    refl = refl or reflection_map(u.lattice, H)
    try:
        out = _polarize_flat(u.values.ravel(), refl, "polarize_function")
        support = polarize_mask(u.support_mask, H, refl)
    except GeometryError as exc:
        raise RearrangeError(str(exc)) from exc
    out = out.reshape(u.lattice.extent)
    if not u.is_nonnegative():
        support = DomainMask(u.lattice, support.inside | (out != 0))
    return GridFunction(support, out)


def schwarz_symmetrize(u: GridFunction, center) -> GridFunction:
    """Rank-fill: largest values on the nodes nearest ``center``.

    Ties in distance are broken by node index (C order).  The support mask of
    the result is the equally sized ball of nodes around ``center``.
    """
    if not u.is_nonnegative():
        raise RearrangeError("Schwarz symmetrization needs a nonnegative function")
    lat = u.lattice
    order = nodes_by_distance(lat, lat.fractional_index(center))
    vals = np.zeros(lat.size)
    vals[order] = np.sort(u.values.ravel())[::-1]
    inside = np.zeros(lat.size, dtype=bool)
    inside[order[: u.support_mask.count]] = True
    return GridFunction(DomainMask(lat, inside.reshape(lat.extent)), vals.reshape(lat.extent))


def candidate_pool(lattice: Lattice, center) -> list[Polarizer]:
    """Lattice-compatible polarizers whose closure contains ``center``.

    Axis normals step the offset by h/2, diagonal normals by h/sqrt(2),
    starting on the hyperplane through ``center``.
    """
    center = np.asarray(center, dtype=float)
    names = ["e1", "-e1"] if lattice.dim == 1 else ["e1", "-e1", "e2", "-e2", "d+", "-d+", "d-", "-d-"]
    span = max(lattice.extent)
    pool = []
    for name in names:
        step = lattice.h / 2 if name.lstrip("-")[0] == "e" else lattice.h / math.sqrt(2)
        base = Polarizer(name, 0.0, lattice.dim)
        a0 = float(center @ base.normal)
        for m in range(0, 2 * span):
            pool.append(Polarizer(name, a0 + m * step, lattice.dim))
    return pool


def best_polarization(u: GridFunction, candidates, target: GridFunction, p: float, refl_for):
    """(distance, polarizer, result) minimizing the distance to ``target``, or None."""
    best = None
    for H in candidates:
        refl = refl_for(H)
        if refl is None:
            continue
        try:
            trial = polarize_function(u, H, refl)
        except RearrangeError:
            continue
        dist = lp_distance(trial, target, p)
        if best is None or dist < best[0]:
            best = (dist, H, trial)
    return best


@dataclass
class PolarizationPath:
    functions: list[GridFunction]
    distances: list[float]
    polarizers: list[Polarizer]
    target: GridFunction


def iterate_polarizations(
    u: GridFunction,
    center,
    budget: int,
    rng_seed: int,
    candidates: int | None = 16,
    p: float = 2.0,
) -> PolarizationPath:
    """Greedy best-of-K polarization toward the Schwarz rearrangement.

    Each step samples ``candidates`` polarizers with ``center`` in their
    closure (the ones through ``center`` always, the rest at random) and
    keeps the one giving the smallest L^p distance to the rearrangement
    (ties go to the earliest candidate).  If no sample improves, the whole
    candidate pool is scanned in order; the loop stops after ``budget``
    steps or when nothing in the pool strictly improves.  ``candidates=None``
    scans the full pool at every step.
    """
    target = schwarz_symmetrize(u, center)
    pool = candidate_pool(u.lattice, center)
    through = [H for H in pool if np.isclose(H.signed_distance(np.asarray(center, dtype=float)), 0)]
    rng = np.random.default_rng(rng_seed)
    maps: dict[Polarizer, Reflection | None] = {}

    def refl_for(H):
        if H not in maps:
            try:
                maps[H] = reflection_map(u.lattice, H)
            except GeometryError:
                maps[H] = None
        return maps[H]

    current = u
    functions, distances, used = [u], [lp_distance(u, target, p)], []
    for _ in range(budget):
        if distances[-1] == 0.0:
            break
        if candidates is None:
            picks = pool
        else:
            extra = max(candidates - len(through), 0)
            picks = list(through) + [pool[i] for i in rng.integers(0, len(pool), size=extra)]
        best = best_polarization(current, picks, target, p, refl_for)
        if best is None or not best[0] < distances[-1]:
            best = best_polarization(current, pool, target, p, refl_for)
        if best is None or not best[0] < distances[-1]:
            break
        distances.append(best[0])
        used.append(best[1])
        functions.append(best[2])
        current = best[2]
    return PolarizationPath(functions, distances, used, target)
