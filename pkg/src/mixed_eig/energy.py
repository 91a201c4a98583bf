"""Discrete energies of grid functions.

The nonlocal part is the lattice double sum

    h^{2d} sum_{i != j} |u_i - u_j|^p / |x_i - x_j|^{d+sp}

split into pairs inside the support set S and an exterior mass per node of
S.  Three exterior models are available:

``lattice``  every lattice point of Z^d outside S (closed-form lattice zeta
             sums); exact zero extension, independent of the box.
``shell``    box points outside S plus the radial bound
             d omega_d rho^{-ps}/(ps) for what lies beyond the box.
``off``      box points outside S only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .geometry import DomainMask, Lattice
from .rearrange import GridFunction

TAIL_MODELS = ("lattice", "shell", "off")
LOCAL_FORMS = ("edge", "euclidean")


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorParams:
    """Exponents and weights of ``-a Delta_p + b (-Delta_p)^s``."""

    p: float = 2.0
    s: float = 0.5
    a: float = 1.0
    b: float = 1.0
    tail_enabled: bool = True
    local_form: str = "edge"
    tail_model: str = "lattice"

    def __post_init__(self):
        if not self.p > 1:
            raise EnergyError(f"p must exceed 1, got {self.p}")
        if not 0 < self.s < 1:
            raise EnergyError(f"s must lie in (0, 1), got {self.s}")
        if self.a < 0 or self.b < 0 or self.a + self.b <= 0:
            raise EnergyError(f"need a, b >= 0 with a + b > 0, got a={self.a}, b={self.b}")
        if self.local_form not in LOCAL_FORMS:
            raise EnergyError(f"local_form must be one of {LOCAL_FORMS}")
        if self.tail_model not in TAIL_MODELS:
            raise EnergyError(f"tail_model must be one of {TAIL_MODELS}")

    @property
    def exterior(self) -> str:
        return self.tail_model if self.tail_enabled else "off"

    def with_p(self, p: float) -> "OperatorParams":
        return OperatorParams(p, self.s, self.a, self.b, self.tail_enabled, self.local_form, self.tail_model)


@dataclass(frozen=True)
class EnergyBreakdown:
    lp_norm_p: float
    local_energy: float
    nonlocal_energy: float
    rayleigh: float


def lattice_zeta(dim: int, alpha: float) -> float:
    """sum over nonzero integer vectors o of |o|^{-alpha}, alpha > dim."""
    if alpha <= dim:
        raise EnergyError("lattice zeta sum diverges for alpha <= dim")
    if dim == 1:
        return 2.0 * float(special.zeta(alpha))
    if dim == 2:
        # sum (m^2 + n^2)^{-t} = 4 zeta(t) beta(t), beta = Dirichlet beta
        t = alpha / 2
        beta = 4.0**-t * (special.zeta(t, 0.25) - special.zeta(t, 0.75))
        return 4.0 * float(special.zeta(t)) * float(beta)
    raise EnergyError("only 1-D and 2-D lattices are supported")


def _unit_sphere_area(dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


@lru_cache(maxsize=32)
def _weight_table(h: float, extent: tuple[int, ...], p: float, s: float) -> np.ndarray:
    """W(o) = h^{2d} |h o|^{-(d+sp)} for nonnegative offsets o; W(0) = 0."""
    d = len(extent)
    grids = np.meshgrid(*[np.arange(n, dtype=float) for n in extent], indexing="ij")
    r2 = sum(g * g for g in grids)
    alpha = d + s * p
    with np.errstate(divide="ignore"):
        table = h ** (d - s * p) * r2 ** (-alpha / 2)
    table[(0,) * d] = 0.0
    table.setflags(write=False)
    return table


def _box_row_sums(table: np.ndarray, idx: np.ndarray, extent: tuple[int, ...]) -> np.ndarray:
    """sum over box nodes j of W(x_i - x_j) for each node index row of ``idx``.

    Separable prefix sums over |offset|; mirror-image windows add the same
    two terms in swapped order, so they agree bit for bit.
    """
    ext = np.asarray(extent)
    lo, hi = idx, ext - 1 - idx
    c0 = np.cumsum(table, axis=0)
    v = c0[lo[:, 0]] + c0[hi[:, 0]] - table[0]
    if table.ndim == 1:
        return v
    c1 = np.cumsum(v, axis=1)
    rows = np.arange(len(idx))
    return c1[rows, lo[:, 1]] + c1[rows, hi[:, 1]] - v[:, 0]


def _accumulate(index: np.ndarray, weights: np.ndarray, n: int) -> np.ndarray:
    """Float bincount (numpy returns ints when there are no weights at all)."""
    return np.bincount(index, weights, minlength=n).astype(float, copy=False)


def _phi(t: np.ndarray, p: float) -> np.ndarray:
    """|t|^{p-2} t with the value 0 at t = 0."""
    if p == 2.0:
        return t
    return np.sign(t) * np.abs(t) ** (p - 1)


def _abs_pow(t: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return t * t
    return np.abs(t) ** p


def shell_kappa(lattice: Lattice, idx: np.ndarray, p: float, s: float) -> np.ndarray:
    """Radial bound d omega_d rho^{-ps}/(ps) on the kernel mass beyond the box.

    ``rho`` is the distance from the node to the box boundary.
    """
    rho_idx = np.min(np.minimum(idx, np.asarray(lattice.extent) - 1 - idx), axis=1)
    if np.any(rho_idx == 0):
        raise EnergyError("support touches the box boundary; shell tail is singular there")
    ps = p * s
    return _unit_sphere_area(lattice.dim) * (lattice.h * rho_idx) ** (-ps) / ps


class NonlocalOnSet:
    """Nonlocal energy of functions supported on a fixed node set S."""

    def __init__(self, lattice: Lattice, flat_nodes: np.ndarray, p: float, s: float, exterior: str):
        if exterior not in TAIL_MODELS:
            raise EnergyError(f"unknown exterior model {exterior!r}")
        self.lattice = lattice
        self.p, self.s = p, s
        self.nodes = np.asarray(flat_nodes, dtype=np.int64)
        d = lattice.dim
        h = lattice.h
        table = _weight_table(h, lattice.extent, p, s)
        self.idx = np.stack(np.unravel_index(self.nodes, lattice.extent), axis=-1)
        n = len(self.nodes)
        self.iu, self.ju = np.triu_indices(n, 1)
        offs = tuple(np.abs(self.idx[self.iu, k] - self.idx[self.ju, k]) for k in range(d))
        self.pair_w = table[offs]
        inner = _accumulate(self.iu, self.pair_w, n) + _accumulate(self.ju, self.pair_w, n)
        self.inner = inner
        if exterior == "lattice":
            total = lattice_zeta(d, d + s * p) * h ** (d - s * p)
            self.exterior_mass = 2.0 * (total - inner)
        else:
            box = _box_row_sums(table, self.idx, lattice.extent)
            self.exterior_mass = 2.0 * (box - inner)
            if exterior == "shell":
                kappa = shell_kappa(lattice, self.idx, p, s)
                self.exterior_mass = self.exterior_mass + 2.0 * h**d * kappa

    def value(self, u_s: np.ndarray) -> float:
        diff = u_s[self.iu] - u_s[self.ju]
        pairs = 2.0 * np.sum(_abs_pow(diff, self.p) * self.pair_w)
        return float(pairs + np.sum(_abs_pow(u_s, self.p) * self.exterior_mass))

    def value_and_grad(self, u_s: np.ndarray) -> tuple[float, np.ndarray]:
        p = self.p
        diff = u_s[self.iu] - u_s[self.ju]
        ad = np.abs(diff)
        adp1 = ad if p == 2.0 else ad ** (p - 1)
        pairs = 2.0 * np.sum(adp1 * ad * self.pair_w)
        q = np.sign(diff) * adp1 * self.pair_w
        n = len(u_s)
        grad = 2.0 * p * (_accumulate(self.iu, q, n) - _accumulate(self.ju, q, n))
        grad += p * _phi(u_s, p) * self.exterior_mass
        val = pairs + np.sum(_abs_pow(u_s, p) * self.exterior_mass)
        return float(val), grad

    def hessian(self, u_s: np.ndarray, eps: float) -> np.ndarray:
        """Hessian of ``value`` with |t|^{p-2} smoothed to (t^2 + eps^2)^{(p-2)/2}."""
        p = self.p
        n = len(u_s)
        diff = u_s[self.iu] - u_s[self.ju]
        w = 2.0 * p * (p - 1) * (diff * diff + eps * eps) ** ((p - 2) / 2) * self.pair_w
        m = np.zeros((n, n))
        m[self.iu, self.ju] = -w
        m[self.ju, self.iu] = -w
        diag = _accumulate(self.iu, w, n) + _accumulate(self.ju, w, n)
        diag += p * (p - 1) * (u_s * u_s + eps * eps) ** ((p - 2) / 2) * self.exterior_mass
        m[np.diag_indices(n)] = diag
        return m

    def p2_matrix(self) -> np.ndarray:
        """Matrix of the quadratic form at p = 2 (only meaningful when p == 2)."""
        n = len(self.nodes)
        m = np.zeros((n, n))
        m[self.iu, self.ju] = -2.0 * self.pair_w
        m[self.ju, self.iu] = -2.0 * self.pair_w
        m[np.diag_indices(n)] = 2.0 * self.inner + self.exterior_mass
        return m


# --- local energy on the full box --------------------------------------------


def _padded(values: np.ndarray) -> np.ndarray:
    return np.pad(values, 1)


def _local_edge(values: np.ndarray, h: float, p: float, want_grad: bool):
    d = values.ndim
    pad = _padded(values)
    scale = h ** (d - p)
    energy = 0.0
    grad = np.zeros_like(values) if want_grad else None
    inner = tuple(slice(1, -1) for _ in range(d))
    for k in range(d):
        delta = np.diff(pad, axis=k)
        energy += np.sum(_abs_pow(delta, p))
        if want_grad:
            q = _phi(delta, p)
            sl_lo = list(inner)
            sl_hi = list(inner)
            sl_lo[k] = slice(0, -1)
            sl_hi[k] = slice(1, None)
            grad += p * (q[tuple(sl_lo)] - q[tuple(sl_hi)])
    if want_grad:
        grad *= scale
    return scale * float(energy), grad


def _local_euclidean(values: np.ndarray, h: float, p: float, want_grad: bool):
    d = values.ndim
    pad = _padded(values)
    base = tuple(slice(0, -1) for _ in range(d))
    diffs = []
    for k in range(d):
        sl = [slice(0, -1)] * d
        sl[k] = slice(1, None)
        diffs.append(pad[tuple(sl)] - pad[base])
    g2 = sum(dk * dk for dk in diffs)
    scale = h ** (d - p)
    energy = scale * float(np.sum(g2 ** (p / 2)))
    if not want_grad:
        return energy, None
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(g2 > 0, p * g2 ** (p / 2 - 1), 0.0)
    gpad = np.zeros_like(pad)
    for k, dk in enumerate(diffs):
        f = w * dk
        sl = [slice(0, -1)] * d
        sl[k] = slice(1, None)
        gpad[tuple(sl)] += f
        gpad[base] -= f
    inner = tuple(slice(1, -1) for _ in range(d))
    return energy, scale * gpad[inner]


def _local(values, h, p, form, want_grad):
    if form == "edge":
        return _local_edge(values, h, p, want_grad)
    if form == "euclidean":
        return _local_euclidean(values, h, p, want_grad)
    raise EnergyError(f"unknown local form {form!r}")


# --- public functionals -------------------------------------------------------


def lp_norm_p(u: GridFunction, p: float) -> float:
    """h^d sum |u_i|^p."""
    return float(u.lattice.cell_volume * np.sum(np.abs(u.values) ** p))


def local_energy(u: GridFunction, p: float, form: str = "edge") -> float:
    """Discrete ||grad u||_p^p of the zero extension."""
    return _local(u.values, u.lattice.h, p, form, False)[0]


def gagliardo_p(u: GridFunction, p: float, s: float, tail: bool = True, tail_model: str = "lattice") -> float:
    """Discrete [u]_{s,p}^p with the chosen exterior model."""
    nl = NonlocalOnSet(u.lattice, u.support_mask.flat_indices(), p, s, tail_model if tail else "off")
    return nl.value(u.values.ravel()[nl.nodes])


def rayleigh_quotient(u: GridFunction, params: OperatorParams) -> EnergyBreakdown:
    norm = lp_norm_p(u, params.p)
    if norm == 0:
        raise EnergyError("Rayleigh quotient of the zero function")
    loc = local_energy(u, params.p, params.local_form) if params.a else 0.0
    nonloc = gagliardo_p(u, params.p, params.s, params.tail_enabled, params.tail_model) if params.b else 0.0
    return EnergyBreakdown(norm, loc, nonloc, (params.a * loc + params.b * nonloc) / norm)


def energy_gradient(u: GridFunction, params: OperatorParams) -> np.ndarray:
    """Gradient of a*local + b*nonlocal with respect to every box value.

    Entries off the support are the one-sided derivatives at zero; a
    Dirichlet solver discards them.
    """
    p, lat = params.p, u.lattice
    grad = np.zeros(lat.size)
    if params.a:
        grad += params.a * _local(u.values, lat.h, p, params.local_form, True)[1].ravel()
    if params.b:
        support = u.support_mask.flat_indices()
        nl = NonlocalOnSet(lat, support, p, params.s, params.exterior)
        u_s = u.values.ravel()[support]
        grad[support] += params.b * nl.value_and_grad(u_s)[1]
        outside = np.flatnonzero(~u.support_mask.inside.ravel())
        if len(outside) and len(support):
            grad[outside] += params.b * _cross_gradient(lat, outside, support, u_s, params)
    return grad.reshape(lat.extent)


def _cross_gradient(lat: Lattice, outside, support, u_s, params, chunk: int = 2048) -> np.ndarray:
    """d/du_j at u_j = 0 for j off the support: -2p sum_i phi(u_i) W_ij."""
    table = _weight_table(lat.h, lat.extent, params.p, params.s)
    idx_s = np.stack(np.unravel_index(support, lat.extent), axis=-1)
    phi_s = _phi(u_s, params.p)
    out = np.empty(len(outside))
    for start in range(0, len(outside), chunk):
        block = outside[start : start + chunk]
        idx_o = np.stack(np.unravel_index(block, lat.extent), axis=-1)
        offs = tuple(np.abs(idx_o[:, None, k] - idx_s[None, :, k]) for k in range(lat.dim))
        out[start : start + chunk] = -2.0 * params.p * (table[offs] @ phi_s)
    return out


class MaskedFunctional:
    """Rayleigh numerator and gradient for functions supported on a fixed mask.

    Vectors are indexed by the mask's inside nodes (C order).
    """

    def __init__(self, mask: DomainMask, params: OperatorParams):
        if mask.is_empty():
            raise EnergyError("empty mask")
        self.mask = mask
        self.params = params
        self.nodes = mask.flat_indices()
        self.lattice = mask.lattice
        self.nonlocal_part = NonlocalOnSet(self.lattice, self.nodes, params.p, params.s, params.exterior) if params.b else None

    def embed(self, u_s: np.ndarray) -> np.ndarray:
        full = np.zeros(self.lattice.size)
        full[self.nodes] = u_s
        return full.reshape(self.lattice.extent)

    def as_grid_function(self, u_s: np.ndarray) -> GridFunction:
        return GridFunction(self.mask, self.embed(u_s))

    def norm_p(self, u_s: np.ndarray) -> float:
        return float(self.lattice.cell_volume * np.sum(np.abs(u_s) ** self.params.p))

    def parts(self, u_s: np.ndarray) -> tuple[float, float]:
        pr = self.params
        loc = _local(self.embed(u_s), self.lattice.h, pr.p, pr.local_form, False)[0] if pr.a else 0.0
        nonloc = self.nonlocal_part.value(u_s) if pr.b else 0.0
        return loc, nonloc

    def numerator(self, u_s: np.ndarray) -> float:
        loc, nonloc = self.parts(u_s)
        return self.params.a * loc + self.params.b * nonloc

    def numerator_and_grad(self, u_s: np.ndarray) -> tuple[float, np.ndarray]:
        pr = self.params
        val = 0.0
        grad = np.zeros_like(u_s)
        if pr.a:
            e, g = _local(self.embed(u_s), self.lattice.h, pr.p, pr.local_form, True)
            val += pr.a * e
            grad += pr.a * g.ravel()[self.nodes]
        if pr.b:
            e, g = self.nonlocal_part.value_and_grad(u_s)
            val += pr.b * e
            grad += pr.b * g
        return val, grad

    def rayleigh(self, u_s: np.ndarray) -> float:
        return self.numerator(u_s) / self.norm_p(u_s)

    def _neighbor_pairs(self):
        """Inside-node index pairs (i, j) joined by a lattice edge, and the
        number of edges from each inside node to the exterior."""
        pos = np.full(self.lattice.size, -1, dtype=np.int64)
        pos[self.nodes] = np.arange(len(self.nodes))
        idx = np.stack(np.unravel_index(self.nodes, self.lattice.extent), axis=-1)
        pairs = []
        for k in range(self.lattice.dim):
            nb = idx.copy()
            nb[:, k] += 1
            ok = np.flatnonzero(nb[:, k] < self.lattice.extent[k])
            j = pos[np.ravel_multi_index(tuple(nb[ok].T), self.lattice.extent)]
            hit = j >= 0
            pairs.append(np.stack([ok[hit], j[hit]], axis=-1))
        pairs = np.concatenate(pairs)
        degree = np.bincount(pairs.ravel(), minlength=len(self.nodes))
        return pairs, 2 * self.lattice.dim - degree

    def hessian(self, u_s: np.ndarray, eps: float) -> np.ndarray:
        """Smoothed Hessian of the numerator (edge form for the local part).

        |t|^{p-2} is replaced by (t^2 + eps^2)^{(p-2)/2}; used only as a
        descent preconditioner, so the euclidean form borrows the edge one.
        """
        pr = self.params
        p = pr.p
        n = len(self.nodes)
        m = np.zeros((n, n))
        if pr.a:
            pairs, boundary = self._neighbor_pairs()
            scale = pr.a * self.lattice.h ** (self.lattice.dim - p) * p * (p - 1)
            i, j = pairs[:, 0], pairs[:, 1]
            diff = u_s[i] - u_s[j]
            w = scale * (diff * diff + eps * eps) ** ((p - 2) / 2)
            np.subtract.at(m, (i, j), w)
            np.subtract.at(m, (j, i), w)
            diag = _accumulate(i, w, n) + _accumulate(j, w, n)
            diag += scale * boundary * (u_s * u_s + eps * eps) ** ((p - 2) / 2)
            m[np.diag_indices(n)] += diag
        if pr.b:
            m += pr.b * self.nonlocal_part.hessian(u_s, eps)
        return m

    def p2_matrix(self) -> np.ndarray:
        """Quadratic-form matrix of the p = 2 numerator on the inside nodes."""
        pr = self.params
        n = len(self.nodes)
        m = np.zeros((n, n))
        if pr.a:
            pairs, boundary = self._neighbor_pairs()
            scale = pr.a * self.lattice.h ** (self.lattice.dim - 2)
            i, j = pairs[:, 0], pairs[:, 1]
            m[i, j] -= scale
            m[j, i] -= scale
            m[np.diag_indices(n)] += scale * 2 * self.lattice.dim
        if pr.b:
            nl = self.nonlocal_part if pr.p == 2.0 else NonlocalOnSet(
                self.lattice, self.nodes, 2.0, pr.s, pr.exterior
            )
            m += pr.b * nl.p2_matrix()
        return m
