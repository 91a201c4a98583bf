"""Randomized property battery behind ``mixed-eig validate``.

Each suite draws its cases from a ``numpy.random.Generator`` and records a
``SuiteResult``: the number of cases, the worst margin seen, and up to
``MAX_EXAMPLES`` counterexamples in JSON-ready form.  The rearrangement
operations are looked up on an ``Ops`` bundle so a test can swap in a
deliberately broken implementation.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .. import geometry as geo
from .. import rearrange as rea
from ..eigsolve import SolverOptions, dense_oracle, solve_descent, solve_p2
from ..energy import EnergyError, OperatorParams, energy_gradient, gagliardo_p, local_energy, lp_norm_p, rayleigh_quotient

MAX_EXAMPLES = 5
CHAIN_RTOL = 1e-12


@dataclass(frozen=True)
class Ops:
    polarize_mask: Callable = geo.polarize_mask
    reflect_mask: Callable = geo.reflect_mask
    witness_sets: Callable = geo.witness_sets
    polarize_function: Callable = rea.polarize_function


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    checks: int = 0
    failures: int = 0
    worst_margin: float = math.inf
    examples: list[dict[str, Any]] = field(default_factory=list)
    notes: dict[str, Any] = field(default_factory=dict)

    def record(self, prop: str, margin: float, example: Callable[[], dict]) -> bool:
        """Log one property evaluation; ``margin < 0`` is a violation."""
        self.checks += 1
        self.worst_margin = min(self.worst_margin, float(margin))
        if margin >= 0:
            return True
        self.failures += 1
        if len(self.examples) < MAX_EXAMPLES:
            self.examples.append({"property": prop, **example()})
        return False

    def flag(self, prop: str, ok: bool, example: Callable[[], dict]) -> bool:
        return self.record(prop, 0.0 if ok else -1.0, example)

    @contextmanager
    def guarded(self, example: Callable[[], dict]):
        """Count an exception raised by the code under test as a violation."""
        try:
            yield
        except (geo.GeometryError, rea.RearrangeError, EnergyError) as exc:
            self.record(f"raised {type(exc).__name__}", -1.0, lambda: {**example(), "error": str(exc)})

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "cases": self.cases,
            "checks": self.checks,
            "failures": self.failures,
            "worst_margin": self.worst_margin,
            "examples": self.examples,
            "notes": self.notes,
        }


# --- random inputs -------------------------------------------------------------

AXIS_NAMES = ("e1", "-e1", "e2", "-e2")
ALL_NAMES = AXIS_NAMES + ("d+", "-d+", "d-", "-d-")


def even_box(h: float, n: int) -> geo.Lattice:
    """n x n nodes placed symmetrically about the origin."""
    half = (n - 1) * h / 2
    return geo.Lattice(h, (n, n), (-half, -half))


def symmetric_polarizers(dim: int = 2) -> list[geo.Polarizer]:
    """Polarizers whose reflection maps an origin-symmetric square box onto itself."""
    names = ("e1", "-e1") if dim == 1 else ALL_NAMES
    return [geo.Polarizer(n, 0.0, dim) for n in names]


def random_polarizer(rng: np.random.Generator, lattice: geo.Lattice) -> geo.Polarizer:
    """Any lattice-compatible polarizer whose hyperplane crosses the box."""
    name = str(rng.choice(ALL_NAMES if lattice.dim == 2 else ("e1", "-e1")))
    span = max(lattice.extent)
    k = int(rng.integers(-span, span + 1))
    base = geo.Polarizer(name, 0.0, lattice.dim)
    step = lattice.h / 2 if name.lstrip("-").startswith("e") else lattice.h / math.sqrt(2)
    # shift so the hyperplane passes through the lattice (box centered anywhere)
    center = np.asarray(lattice.origin) + lattice.h * (np.asarray(lattice.extent) - 1) / 2
    a0 = float(center @ base.normal)
    a0 = round(a0 / step) * step
    return geo.Polarizer(name, a0 + k * step, lattice.dim)


def mirror_region(refl: geo.Reflection, extent) -> np.ndarray:
    """Nodes whose mirror image lies in the box."""
    return (refl.target >= 0).reshape(extent)


def random_mask(rng, lattice: geo.Lattice, allowed: np.ndarray | None = None, interior: bool = False) -> np.ndarray:
    density = rng.uniform(0.1, 0.7)
    inside = rng.random(lattice.extent) < density
    if allowed is not None:
        inside &= allowed
    if interior:
        inside &= ~lattice.boundary_layer()
    return inside


def mask_example(m: geo.DomainMask, H: geo.Polarizer | None = None) -> dict[str, Any]:
    lat = m.lattice
    out = {
        "lattice": {"h": lat.h, "extent": list(lat.extent), "origin": list(lat.origin)},
        "mask": m.to_text().splitlines(),
    }
    if H is not None:
        out["polarizer"] = H.describe()
    return out


def function_example(u: rea.GridFunction, H: geo.Polarizer, **extra) -> dict[str, Any]:
    return {**mask_example(u.support_mask, H), "values": u.to_text().splitlines(), **extra}


# --- set identities ------------------------------------------------------------


def set_formula(inside: np.ndarray, refl: geo.Reflection) -> np.ndarray:
    """[(Omega u sigma Omega) n H] u [Omega n sigma Omega], written out node by node."""
    flat = inside.ravel()
    mirror = np.where(refl.target >= 0, flat[np.maximum(refl.target, 0)], False)
    in_h = refl.side < 0
    on_plane = refl.side == 0
    out = ((flat | mirror) & in_h) | (flat & mirror) | (flat & on_plane)
    return out.reshape(inside.shape)


def set_identities(rng, cases: int, grid: int = 12, ops: Ops = Ops()) -> SuiteResult:
    res = SuiteResult("set_identities")
    lat = even_box(1.0, grid)
    connectivity = {"tested": 0, "counterexamples": 0}
    for case in range(cases):
        H = random_polarizer(rng, lat)
        refl = geo.reflection_map(lat, H)
        allowed = mirror_region(refl, lat.extent)
        inside = random_mask(rng, lat, allowed)
        family = case % 5
        if family == 1:  # sigma-symmetric
            inside = inside | _mirror(inside, refl)
        elif family == 2:  # already polarized
            inside = set_formula(inside, refl)
        elif family == 3:  # inside H only
            inside &= (refl.side < 0).reshape(lat.extent)
        elif family == 4:  # a mirrored polarized set
            inside = _mirror(set_formula(inside, refl), refl)
        m = geo.DomainMask(lat, inside)
        res.cases += 1
        ex = lambda: mask_example(m, H)

        with res.guarded(ex):
            pm = ops.polarize_mask(m, H)
            res.flag("set formula", np.array_equal(pm.inside, set_formula(m.inside, refl)), ex)
            res.flag("measure preserved", pm.count == m.count, ex)
            res.flag("idempotent", ops.polarize_mask(pm, H) == pm, ex)
            sm = ops.reflect_mask(m, H)
            res.flag("P(sigma Omega) = P(Omega)", ops.polarize_mask(sm, H) == pm, ex)
            in_h = (refl.side < 0).reshape(lat.extent)
            crit = not np.any(sm.inside & in_h & ~m.inside)
            res.flag("fixed point iff sigma(Omega) n H in Omega", (pm == m) == crit, ex)
            a, b = ops.witness_sets(m, H)
            res.flag("A empty iff P(Omega) = Omega", a.is_empty() == (pm == m), ex)
            res.flag("B empty iff P(Omega) = sigma(Omega)", b.is_empty() == (pm == sm), ex)
            sub = geo.DomainMask(lat, m.inside & (rng.random(lat.extent) < 0.6))
            psub = ops.polarize_mask(sub, H)
            res.flag("monotone under inclusion", not np.any(psub.inside & ~pm.inside), ex)
            if m.is_connected() and not m.is_empty():
                connectivity["tested"] += 1
                if not geo.DomainMask(lat, pm.inside & in_h).is_connected():
                    connectivity["counterexamples"] += 1
    # the lattice analogue of the continuum connectedness statement is logged, not asserted
    res.notes["connectivity_in_H"] = connectivity
    return res


def _mirror(inside: np.ndarray, refl: geo.Reflection) -> np.ndarray:
    flat = inside.ravel()
    out = np.zeros_like(flat)
    out[refl.target[flat & (refl.target >= 0)]] = True
    return out.reshape(inside.shape)


# --- Polya-Szego chain ---------------------------------------------------------

TAILS = ("lattice", "shell", "off")


def _random_function(rng, lattice: geo.Lattice, inside: np.ndarray) -> rea.GridFunction:
    mask = geo.DomainMask(lattice, inside)
    vals = np.where(inside, rng.uniform(0.0, 1.0, lattice.extent), 0.0)
    if rng.random() < 0.5:
        # smooth bump times noise gives many near-ties between mirror pairs
        x = lattice.node_coords()
        c = rng.uniform(-0.3, 0.3, lattice.dim) * lattice.h * max(lattice.extent)
        bump = np.exp(-np.sum((x - c) ** 2, axis=-1) / (lattice.h * max(lattice.extent) / 3) ** 2)
        vals = np.where(inside, bump * (1 + 0.1 * vals), 0.0)
    return rea.GridFunction(mask, vals)


def chain_case(u: rea.GridFunction, H: geo.Polarizer, p: float, s: float, tail: str, res: SuiteResult, ops: Ops, tag: dict):
    pu = ops.polarize_function(u, H)
    ex = lambda: function_example(u, H, p=p, s=s, tail=tail, **tag)
    n0, n1 = lp_norm_p(u, p), lp_norm_p(pu, p)
    res.record("norm preserved", CHAIN_RTOL * n0 - abs(n1 - n0), ex)
    res.flag("value multiset preserved", np.array_equal(np.sort(u.values, axis=None), np.sort(pu.values, axis=None)), ex)
    l0, l1 = local_energy(u, p, "edge"), local_energy(pu, p, "edge")
    res.record("local energy non-increasing", l0 * (1 + CHAIN_RTOL) - l1, ex)
    g0 = gagliardo_p(u, p, s, tail != "off", tail if tail != "off" else "lattice")
    g1 = gagliardo_p(pu, p, s, tail != "off", tail if tail != "off" else "lattice")
    res.record("Gagliardo seminorm non-increasing", g0 * (1 + CHAIN_RTOL) - g1, ex)
    params = OperatorParams(p, s, 1.0, 1.0, tail != "off", "edge", tail if tail != "off" else "lattice")
    r0, r1 = rayleigh_quotient(u, params).rayleigh, rayleigh_quotient(pu, params).rayleigh
    res.record("Rayleigh non-increasing", r0 * (1 + CHAIN_RTOL) - r1, ex)


def polya_szego_chain(
    rng,
    symmetric_cases: int,
    general_cases: int = 0,
    grid: int = 16,
    p_list=(1.5, 2.0, 3.0),
    s_list=(0.25, 0.5, 0.75),
    ops: Ops = Ops(),
) -> SuiteResult:
    """Norm equality and energy decrease under polarization.

    Symmetric cases use an origin-symmetric square box and the eight
    polarizers through its center, cycling over all three exterior models.
    General cases use arbitrary compatible polarizers with the exact
    lattice exterior model only.
    """
    res = SuiteResult("polya_szego_chain")
    sym = symmetric_polarizers()
    counts = {"symmetric": 0, "general": 0}
    for case in range(symmetric_cases + general_cases):
        p = p_list[case % len(p_list)]
        s = s_list[(case // len(p_list)) % len(s_list)]
        h = float(rng.choice((1.0, 0.5, 1 / 16)))
        lat = even_box(h, grid)
        if case < symmetric_cases:
            H = sym[int(rng.integers(len(sym)))]
            tail = TAILS[(case // (len(p_list) * len(s_list))) % len(TAILS)]
            inside = random_mask(rng, lat, interior=True)
            counts["symmetric"] += 1
        else:
            tail = "lattice"
            inside = np.zeros(lat.extent, dtype=bool)
            while not inside.any():
                H = random_polarizer(rng, lat)
                allowed = mirror_region(geo.reflection_map(lat, H), lat.extent)
                inside = random_mask(rng, lat, allowed, interior=True)
            counts["general"] += 1
        if not inside.any():
            inside[lat.center_node()] = True
        u = _random_function(rng, lat, inside)
        res.cases += 1
        with res.guarded(lambda: function_example(u, H, p=p, s=s, tail=tail, h=h)):
            chain_case(u, H, p, s, tail, res, ops, {"h": h})
    res.notes.update(counts)
    return res


# --- gradient vs central differences --------------------------------------------


def _full_box_energy(lat: geo.Lattice, values: np.ndarray, params: OperatorParams) -> float:
    whole = geo.DomainMask(lat, np.ones(lat.extent, dtype=bool))
    gf = rea.GridFunction(whole, values)
    loc = local_energy(gf, params.p, params.local_form) if params.a else 0.0
    nonloc = gagliardo_p(gf, params.p, params.s, params.tail_enabled, params.tail_model) if params.b else 0.0
    return params.a * loc + params.b * nonloc


def gradient_check(rng, cases: int, grid: int = 8, p_list=(1.5, 2.0, 3.0), eps: float = 1e-6, rtol: float = 1e-5) -> SuiteResult:
    """Full-box gradient (support and off-support entries) against central differences.

    Values on the support are a shuffled grid with spacing 1e-2 above 0.5, so
    every difference that enters a |.|^p term is at least 1e-2 away from the
    kink except the exactly-zero off-support pairs.
    """
    res = SuiteResult("gradient_check")
    worst = 0.0
    for case in range(cases):
        p = p_list[case % len(p_list)]
        s = float(rng.choice((0.25, 0.5, 0.75)))
        a = float(rng.choice((0.0, 1.0, 2.5)))
        params = OperatorParams(p, s, a, float(rng.uniform(0.5, 2.0)), True, "edge", "lattice")
        h = float(rng.choice((1.0, 0.25)))
        lat = even_box(h, grid)
        inside = random_mask(rng, lat, interior=True)
        if not inside.any():
            inside[lat.center_node()] = True
        n = int(inside.sum())
        vals = np.zeros(lat.extent)
        vals[inside] = 0.5 + 1e-2 * rng.permutation(n)
        u = rea.GridFunction(geo.DomainMask(lat, inside), vals)
        g = energy_gradient(u, params).ravel()
        fd = np.empty(lat.size)
        for k in range(lat.size):
            up, dn = vals.copy().ravel(), vals.copy().ravel()
            up[k] += eps
            dn[k] -= eps
            fd[k] = (
                _full_box_energy(lat, up.reshape(lat.extent), params)
                - _full_box_energy(lat, dn.reshape(lat.extent), params)
            ) / (2 * eps)
        err = float(np.max(np.abs(fd - g)) / np.max(np.abs(g)))
        worst = max(worst, err)
        res.cases += 1
        res.record(
            "gradient matches central differences",
            rtol - err,
            lambda: {**mask_example(u.support_mask), "p": p, "s": s, "error": err},
        )
    res.notes["max_relative_error"] = worst
    return res


# --- p = 2 oracle agreement --------------------------------------------------------


def random_domain(rng, max_nodes: int = 400) -> geo.DomainMask:
    """Connected random blob on a lattice fine enough to look smooth."""
    while True:
        h = float(rng.choice((1 / 6, 1 / 8, 1 / 10, 1 / 12, 1 / 14)))
        shape = geo.random_blob(int(rng.integers(1 << 30)), count=int(rng.integers(2, 6)), radius=float(rng.uniform(0.3, 0.6)))
        lat = geo.Lattice.for_shape(shape, h, padding=3 * h)
        m = geo.build_mask(lat, shape)
        if 1 <= m.count <= max_nodes and m.is_connected():
            return m


def p2_oracle(rng, cases: int, max_nodes: int = 400, rtol_p2: float = 1e-10, rtol_descent: float = 1e-5) -> SuiteResult:
    res = SuiteResult("p2_oracle")
    worst = {"p2": 0.0, "descent": 0.0}
    positivity, nodes = [], []
    for _ in range(cases):
        m = random_domain(rng, max_nodes)
        nodes.append(m.count)
        params = OperatorParams(2.0, float(rng.choice((0.25, 0.5, 0.75))), float(rng.choice((0.0, 1.0))), 1.0)
        ref = dense_oracle(m, params)
        r2 = solve_p2(m, params)
        rd = solve_descent(m, params, SolverOptions())
        e2 = abs(r2.lam - ref) / ref
        ed = abs(rd.lam - ref) / ref
        worst["p2"] = max(worst["p2"], e2)
        worst["descent"] = max(worst["descent"], ed)
        res.cases += 1
        ex = lambda: {**mask_example(m), "s": params.s, "a": params.a, "oracle": ref, "p2": r2.lam, "descent": rd.lam}
        res.record("solve_p2 matches dense eigh", rtol_p2 - e2, ex)
        res.record("descent matches dense eigh", rtol_descent - ed, ex)
        res.flag("solvers converged", r2.converged and rd.converged, ex)
        for r in (r2, rd):
            positivity.append(r.interior_min)
            res.flag("positive eigenfunction", r.interior_min > 0, ex)
    res.notes["max_relative_error"] = worst
    res.notes["min_interior_min"] = min(positivity) if positivity else None
    res.notes["nodes"] = [min(nodes), max(nodes)] if nodes else None
    return res
