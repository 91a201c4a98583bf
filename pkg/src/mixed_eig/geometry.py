"""Lattice geometry, domain masks, shapes and polarizers.

Everything lives on a uniform box of nodes ``origin + h * index``.  A domain
is a boolean array over that box; values off the box are zero by convention,
so a reflection that maps a node out of the box maps it onto an exterior
(empty) node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage


class GeometryError(ValueError):
    """Raised for shapes or reflections that do not fit the lattice box."""


# index-space tolerance for lattice compatibility of reflections
_INDEX_TOL = 1e-7


@dataclass(frozen=True)
class Lattice:
    """Uniform node box in 1-D or 2-D."""

    h: float
    extent: tuple[int, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        if not self.h > 0:
            raise GeometryError(f"spacing must be positive, got {self.h}")
        if len(self.extent) not in (1, 2) or len(self.origin) != len(self.extent):
            raise GeometryError("lattice must be 1-D or 2-D with matching origin")
        if min(self.extent) < 1:
            raise GeometryError(f"extent must be >= 1 per axis, got {self.extent}")
        object.__setattr__(self, "extent", tuple(int(n) for n in self.extent))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dim(self) -> int:
        return len(self.extent)

    @property
    def size(self) -> int:
        return int(np.prod(self.extent))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @classmethod
    def centered(cls, h: float, half_extent: int | Sequence[int], dim: int = 2) -> "Lattice":
        """Box of ``2n+1`` nodes per axis with node 0 of the world frame in the middle."""
        if np.isscalar(half_extent):
            half_extent = (int(half_extent),) * dim
        half = tuple(int(n) for n in half_extent)
        return cls(h, tuple(2 * n + 1 for n in half), tuple(-n * h for n in half))

    @classmethod
    def for_shape(cls, shape: "Shape", h: float, padding: float | None = None) -> "Lattice":
        """Origin-centered box hosting ``shape`` with ``padding`` on every side.

        The default padding is ``max(diam, 8h)``.
        """
        lo, hi = shape.bounds()
        if padding is None:
            diam = float(np.max(np.asarray(hi) - np.asarray(lo)))
            padding = max(diam, 8 * h)
        reach = max(np.max(np.abs(lo)), np.max(np.abs(hi))) + padding
        n = int(math.ceil(reach / h - 1e-9))
        return cls.centered(h, n, dim=len(lo))

    def coords(self, index) -> np.ndarray:
        """World coordinates of integer node index/indices (last axis = dim)."""
        index = np.asarray(index)
        return np.asarray(self.origin) + self.h * index

    def node_coords(self) -> np.ndarray:
        """Array of shape ``extent + (dim,)`` with every node's coordinates."""
        grids = np.meshgrid(*[np.arange(n) for n in self.extent], indexing="ij")
        return self.coords(np.stack(grids, axis=-1))

    def node_indices(self) -> np.ndarray:
        """Integer indices of all nodes in C order, shape ``(size, dim)``."""
        grids = np.meshgrid(*[np.arange(n) for n in self.extent], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def fractional_index(self, point) -> np.ndarray:
        return (np.asarray(point, dtype=float) - np.asarray(self.origin)) / self.h

    def center_node(self) -> tuple[int, ...]:
        """Node nearest the box center (lower one on even extents)."""
        return tuple((n - 1) // 2 for n in self.extent)

    def boundary_layer(self) -> np.ndarray:
        """Boolean array marking the outermost layer of nodes."""
        edge = np.zeros(self.extent, dtype=bool)
        for k in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[k] = 0
            edge[tuple(sl)] = True
            sl[k] = -1
            edge[tuple(sl)] = True
        return edge


class DomainMask:
    """A discrete domain: a boolean ``inside`` array over a lattice box."""

    __slots__ = ("lattice", "inside")

    def __init__(self, lattice: Lattice, inside):
        inside = np.asarray(inside, dtype=bool)
        if inside.shape != lattice.extent:
            raise GeometryError(f"mask shape {inside.shape} != lattice extent {lattice.extent}")
        inside.setflags(write=False)
        self.lattice = lattice
        self.inside = inside

    def __eq__(self, other):
        if not isinstance(other, DomainMask):
            return NotImplemented
        return self.lattice == other.lattice and np.array_equal(self.inside, other.inside)

    def __hash__(self):
        return hash((self.lattice, self.inside.tobytes()))

    def __repr__(self):
        return f"DomainMask(nodes={self.count}, extent={self.lattice.extent})"

    @property
    def count(self) -> int:
        return int(self.inside.sum())

    def is_empty(self) -> bool:
        return not self.inside.any()

    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.inside.ravel())

    def is_connected(self) -> bool:
        """4-neighbor (2-neighbor in 1-D) connectivity; the empty mask counts as connected."""
        if self.is_empty():
            return True
        _, n = ndimage.label(self.inside)
        return n == 1

    def touches_boundary(self) -> bool:
        return bool((self.inside & self.lattice.boundary_layer()).any())

    def to_text(self) -> str:
        """Rows of 0/1; first array axis runs down the rows."""
        grid = np.atleast_2d(self.inside.astype(np.uint8))
        return "\n".join("".join(str(v) for v in row) for row in grid) + "\n"

    @classmethod
    def from_text(cls, lattice: Lattice, text: str) -> "DomainMask":
        rows = [r.strip() for r in text.strip().splitlines() if r.strip()]
        grid = np.array([[c == "1" for c in r] for r in rows], dtype=bool)
        return cls(lattice, grid.reshape(lattice.extent))


def mask_measure(m: DomainMask) -> float:
    return m.count * m.lattice.cell_volume


# --- shapes -----------------------------------------------------------------


class Shape:
    """Open planar (or 1-D) region tested at node coordinates."""

    def contains(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError

    def union(self, other: "Shape") -> "Shape":
        return Union((self, other))

    def minus(self, other: "Shape") -> "Shape":
        return Difference(self, other)


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("ball radius must be positive")

    def contains(self, x):
        d2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1)
        return d2 < self.radius**2

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def describe(self):
        return f"ball({', '.join(map(_fmt, self.center))}, {_fmt(self.radius)})"


@dataclass(frozen=True)
class Annulus(Shape):
    """``B_R(0)`` minus the closed ball ``B_r(hole_center)``."""

    R: float
    r: float
    hole_center: tuple[float, ...]

    def __post_init__(self):
        if not (0 < self.r < self.R):
            raise GeometryError(f"annulus needs 0 < r < R, got r={self.r}, R={self.R}")

    def contains(self, x):
        outer = np.sum(x**2, axis=-1) < self.R**2
        hole = np.sum((x - np.asarray(self.hole_center)) ** 2, axis=-1) <= self.r**2
        return outer & ~hole

    def bounds(self):
        d = len(self.hole_center)
        return np.full(d, -self.R), np.full(d, self.R)

    def hole_contained(self) -> bool:
        return float(np.linalg.norm(self.hole_center)) + self.r < self.R

    def describe(self):
        return f"annulus({_fmt(self.R)}, {_fmt(self.r)}, {', '.join(map(_fmt, self.hole_center))})"


@dataclass(frozen=True)
class Rectangle(Shape):
    corner1: tuple[float, ...]
    corner2: tuple[float, ...]

    def contains(self, x):
        lo = np.minimum(self.corner1, self.corner2)
        hi = np.maximum(self.corner1, self.corner2)
        return np.all((x > lo) & (x < hi), axis=-1)

    def bounds(self):
        return np.minimum(self.corner1, self.corner2).astype(float), np.maximum(
            self.corner1, self.corner2
        ).astype(float)

    def describe(self):
        return f"rect({', '.join(map(_fmt, self.corner1 + self.corner2))})"


@dataclass(frozen=True)
class Union(Shape):
    parts: tuple[Shape, ...] = field(default_factory=tuple)

    def contains(self, x):
        out = np.zeros(x.shape[:-1], dtype=bool)
        for part in self.parts:
            out |= part.contains(x)
        return out

    def bounds(self):
        los, his = zip(*(p.bounds() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)

    def describe(self):
        return " union ".join(p.describe() for p in self.parts)


@dataclass(frozen=True)
class Difference(Shape):
    base: Shape
    removed: Shape

    def contains(self, x):
        return self.base.contains(x) & ~self.removed.contains(x)

    def bounds(self):
        return self.base.bounds()

    def describe(self):
        return f"{self.base.describe()} minus {self.removed.describe()}"


def random_blob(seed: int, count: int = 5, radius: float = 0.35, dim: int = 2) -> Shape:
    """Union of ``count`` balls, each centered inside the previous one (so connected)."""
    rng = np.random.default_rng(seed)
    centers = [np.zeros(dim)]
    for _ in range(count - 1):
        step = rng.normal(size=dim)
        step *= 0.8 * radius * rng.uniform(0.4, 1.0) / np.linalg.norm(step)
        centers.append(centers[-1] + step)
    centers = np.asarray(centers)
    centers -= centers.mean(axis=0)
    # round so the textual description reproduces the shape exactly
    return Union(tuple(Ball(tuple(round(float(v), 6) for v in c), radius) for c in centers))


def build_mask(lattice: Lattice, shape: Shape, padding: float = 0.0) -> DomainMask:
    """Cell-center classification: node is inside iff its coordinate is in the open shape."""
    lo, hi = shape.bounds()
    if len(lo) != lattice.dim:
        raise GeometryError(f"shape is {len(lo)}-D but lattice is {lattice.dim}-D")
    box_lo = np.asarray(lattice.origin)
    box_hi = box_lo + lattice.h * (np.asarray(lattice.extent) - 1)
    slack = 1e-12 * max(1.0, lattice.h)
    if np.any(lo < box_lo + padding - slack) or np.any(hi > box_hi - padding + slack):
        raise GeometryError(
            f"shape {shape.describe()} with padding {padding} exceeds lattice box "
            f"[{box_lo.tolist()}, {box_hi.tolist()}]"
        )
    return DomainMask(lattice, shape.contains(lattice.node_coords()))


# --- polarizers -------------------------------------------------------------

_SQRT_HALF = math.sqrt(0.5)
_BASE_NORMALS = {
    "e1": {1: (1.0,), 2: (1.0, 0.0)},
    "e2": {2: (0.0, 1.0)},
    "d+": {2: (_SQRT_HALF, _SQRT_HALF)},
    "d-": {2: (_SQRT_HALF, -_SQRT_HALF)},
}


@dataclass(frozen=True)
class Polarizer:
    """Open halfspace ``{x : x . normal < offset}``.

    ``name`` is one of ``e1, -e1, e2, -e2, d+, -d+, d-, -d-`` where
    ``d+ = (e1 + e2)/sqrt 2`` and ``d- = (e1 - e2)/sqrt 2``.
    """

    name: str
    offset: float
    dim: int = 2

    def __post_init__(self):
        base = self.name.removeprefix("-")
        if self.dim not in _BASE_NORMALS.get(base, {}):
            raise GeometryError(f"unknown {self.dim}-D polarizer normal {self.name!r}")

    @property
    def normal(self) -> np.ndarray:
        sign = -1.0 if self.name.startswith("-") else 1.0
        return sign * np.asarray(_BASE_NORMALS[self.name.removeprefix("-")][self.dim])

    @property
    def through_origin(self) -> bool:
        return self.offset == 0.0

    def describe(self) -> str:
        return f"{self.name}<{_fmt(self.offset)}"

    @classmethod
    def parse(cls, text: str, dim: int = 2) -> "Polarizer":
        """Parse ``"e1<0.5"`` style descriptors."""
        try:
            name, off = text.replace(" ", "").split("<")
            return cls(name, float(off), dim)
        except ValueError as exc:
            raise GeometryError(f"bad polarizer descriptor {text!r}") from exc

    def signed_distance(self, x) -> np.ndarray:
        return np.asarray(x) @ self.normal - self.offset


def reflect_point(p, H: Polarizer) -> np.ndarray:
    """sigma_H(x) = x - 2 (x . n - a) n."""
    p = np.asarray(p, dtype=float)
    return p - 2.0 * H.signed_distance(p)[..., None] * H.normal


@dataclass(frozen=True)
class Reflection:
    """Reflection of a lattice box in flat-index form.

    ``target[i]`` is the flat index of the mirror of node ``i`` or ``-1`` if the
    mirror lies outside the box; ``side[i]`` is -1 in H, 0 on the boundary
    hyperplane, +1 in the closed complement's interior.
    """

    target: np.ndarray
    side: np.ndarray


def reflection_map(lattice: Lattice, H: Polarizer) -> Reflection:
    if H.dim != lattice.dim:
        raise GeometryError("polarizer and lattice dimension differ")
    idx = lattice.node_indices()
    x = lattice.coords(idx)
    dist = H.signed_distance(x) / lattice.h
    side = np.where(np.abs(dist) < _INDEX_TOL, 0, np.sign(dist)).astype(np.int8)
    mirror = lattice.fractional_index(reflect_point(x, H))
    rounded = np.rint(mirror)
    if np.max(np.abs(mirror - rounded), initial=0.0) > _INDEX_TOL:
        raise GeometryError(f"polarizer {H.describe()} is not lattice-compatible")
    rounded = rounded.astype(np.int64)
    ext = np.asarray(lattice.extent)
    ok = np.all((rounded >= 0) & (rounded < ext), axis=-1)
    target = np.full(len(idx), -1, dtype=np.int64)
    target[ok] = np.ravel_multi_index(tuple(rounded[ok].T), lattice.extent)
    return Reflection(target, side)


def box_is_symmetric(lattice: Lattice, H: Polarizer) -> bool:
    return bool(np.all(reflection_map(lattice, H).target >= 0))


def _polarize_flat(values: np.ndarray, refl: Reflection, what: str) -> np.ndarray:
    """Two-point rearrangement of flat box values (zero off the box)."""
    tgt, side = refl.target, refl.side
    lost = (side > 0) & (tgt < 0) & (values != 0)
    if lost.any():
        raise GeometryError(f"{what}: reflection carries nonzero nodes outside the lattice box")
    mirror = np.where(tgt >= 0, values[np.maximum(tgt, 0)], 0)
    out = values.copy()
    in_h = side < 0
    out_h = side > 0
    out[in_h] = np.maximum(values[in_h], mirror[in_h])
    out[out_h] = np.minimum(values[out_h], mirror[out_h])
    return out


def polarize_mask(m: DomainMask, H: Polarizer, refl: Reflection | None = None) -> DomainMask:
    """P_H(Omega) = [(Omega u sigma Omega) n H] u [Omega n sigma Omega], node-wise."""
    refl = refl or reflection_map(m.lattice, H)
    out = _polarize_flat(m.inside.ravel(), refl, "polarize_mask")
    return DomainMask(m.lattice, out.reshape(m.lattice.extent))


def reflect_mask(m: DomainMask, H: Polarizer, refl: Reflection | None = None) -> DomainMask:
    refl = refl or reflection_map(m.lattice, H)
    flat = m.inside.ravel()
    if np.any(flat & (refl.target < 0)):
        raise GeometryError("reflect_mask: mirror image leaves the lattice box")
    out = np.zeros_like(flat)
    out[refl.target[flat]] = True
    return DomainMask(m.lattice, out.reshape(m.lattice.extent))


def witness_sets(m: DomainMask, H: Polarizer, refl: Reflection | None = None):
    """Return ``(A_H, B_H)``.

    A_H = sigma(Omega) n Omega^c n H, B_H = Omega n sigma(Omega^c) n H.
    Nodes mirrored off the box count as exterior.
    """
    refl = refl or reflection_map(m.lattice, H)
    flat = m.inside.ravel()
    in_h = refl.side < 0
    mirror_in = np.where(refl.target >= 0, flat[np.maximum(refl.target, 0)], False)
    a = in_h & ~flat & mirror_in
    b = in_h & flat & ~mirror_in
    ext = m.lattice.extent
    return DomainMask(m.lattice, a.reshape(ext)), DomainMask(m.lattice, b.reshape(ext))


def nodes_by_distance(lattice: Lattice, center_index) -> np.ndarray:
    """Flat node indices sorted by distance from ``center_index`` (index units).

    Ties keep C order, i.e. lexicographic on the node index.
    """
    idx = lattice.node_indices().astype(float)
    d2 = np.sum((idx - np.asarray(center_index, dtype=float)) ** 2, axis=-1)
    return np.argsort(d2, kind="stable")


def equal_measure_ball(m: DomainMask) -> DomainMask:
    """The ``|m|`` nodes closest to the box-center node, as a mask."""
    lat = m.lattice
    order = nodes_by_distance(lat, lat.center_node())
    n = m.count
    flat = np.zeros(lat.size, dtype=bool)
    flat[order[:n]] = True
    ball = flat.reshape(lat.extent)
    if n and (ball & lat.boundary_layer()).any():
        raise GeometryError(f"lattice too small to host an equal-measure ball of {n} nodes")
    return DomainMask(lat, ball)


def erosion_depth(m: DomainMask) -> np.ndarray:
    """Taxicab distance (in nodes) from each inside node to the exterior."""
    padded = np.pad(m.inside, 1)
    depth = ndimage.distance_transform_cdt(padded, metric="taxicab")
    inner = tuple(slice(1, -1) for _ in range(m.lattice.dim))
    return depth[inner].astype(float)
