import math

import numpy as np
import pytest

from conftest import brute_gagliardo, line, mask_1d
from mixed_eig.geometry import Ball, DomainMask, Lattice, Polarizer, build_mask, reflection_map
from mixed_eig.energy import (
    EnergyError,
    MaskedFunctional,
    NonlocalOnSet,
    OperatorParams,
    energy_gradient,
    gagliardo_p,
    lattice_zeta,
    local_energy,
    lp_norm_p,
    rayleigh_quotient,
    shell_kappa,
)
from mixed_eig.rearrange import GridFunction, polarize_function


def random_function(rng, lat, lo=0.2, hi=1.5):
    inside = np.zeros(lat.extent, bool)
    core = tuple(slice(2, n - 2) for n in lat.extent)
    inside[core] = rng.random(inside[core].shape) < 0.6
    return GridFunction(DomainMask(lat, inside), np.where(inside, rng.uniform(lo, hi, lat.extent), 0.0))


# --- norms and local energy ---


def test_lp_norm_examples():
    lat = line(2)
    assert lp_norm_p(GridFunction(mask_1d(lat, [0]), [0, 0, 1, 0, 0]), 3.0) == 1.0
    lat = line(2, h=0.5)
    assert lp_norm_p(GridFunction(mask_1d(lat, [0, 0.5]), [0, 0, 1, 1, 0]), 2.0) == 1.0


def test_local_energy_examples():
    lat = line(1)
    delta = GridFunction(mask_1d(lat, [0]), [0, 1, 0])
    assert local_energy(delta, 2.0) == 2.0
    assert local_energy(GridFunction(mask_1d(lat, [0]), [0, 0, 0]), 2.0) == 0.0


def test_edge_and_euclidean_agree_at_p2(rng):
    lat = Lattice.centered(0.25, 6)
    for _ in range(5):
        u = random_function(rng, lat)
        assert math.isclose(local_energy(u, 2.0, "edge"), local_energy(u, 2.0, "euclidean"), rel_tol=1e-13)
    assert local_energy(u, 3.0, "edge") != local_energy(u, 3.0, "euclidean")


def test_local_energy_is_h_scaled():
    # indicator of (0, 1): two unit jumps, each over one edge, so 2 * h^{1-p} at p = 2
    for h in (0.1, 0.05):
        lat = Lattice(h, (int(round(1 / h)) + 3,), (-h,))
        x = lat.node_coords()[..., 0]
        inside = (x > 0) & (x < 1)
        u = GridFunction(DomainMask(lat, inside), np.where(inside, 1.0, 0.0))
        assert math.isclose(local_energy(u, 2.0), 2.0 / h, rel_tol=1e-12)


# --- Gagliardo seminorm ---


def test_gagliardo_two_node_example():
    lat = Lattice(1.0, (2,), (0.0,))
    u = GridFunction(DomainMask(lat, [True, False]), [1.0, 0.0])
    assert gagliardo_p(u, 2.0, 0.5, tail=False) == 2.0
    assert gagliardo_p(GridFunction(DomainMask(lat, [True, False]), [0.0, 0.0]), 2.0, 0.5) == 0.0


@pytest.mark.parametrize("p,s", [(2.0, 0.5), (1.5, 0.25), (3.0, 0.75)])
def test_gagliardo_matches_double_sum(rng, p, s):
    lat = Lattice.centered(0.5, 3)
    u = random_function(rng, lat)
    assert math.isclose(gagliardo_p(u, p, s, tail=False), brute_gagliardo(u.values, lat, p, s), rel_tol=1e-12)


def test_lattice_zeta_against_direct_sums():
    n = 400
    k = np.arange(1, n + 1, dtype=float)
    for alpha in (1.5, 2.0, 3.25):
        tail = 2 * n ** (1 - alpha) / (alpha - 1)
        assert math.isclose(lattice_zeta(1, alpha), 2 * np.sum(k**-alpha) + tail, rel_tol=1e-4)
    g = np.arange(-n, n + 1, dtype=float)
    r2 = g[:, None] ** 2 + g[None, :] ** 2
    r2[n, n] = np.inf
    r2[r2 > n * n] = np.inf  # disc of radius n, the rest by the radial integral
    for alpha in (2.5, 3.0, 3.5):
        approx = np.sum(r2 ** (-alpha / 2)) + 2 * math.pi * n ** (2 - alpha) / (alpha - 2)
        assert math.isclose(lattice_zeta(2, alpha), approx, rel_tol=1e-3)
    with pytest.raises(EnergyError):
        lattice_zeta(2, 2.0)


def test_lattice_exterior_matches_large_box(rng):
    """The 'lattice' exterior equals the box sum on an ever larger box."""
    small = Lattice.centered(0.5, 3)
    u = random_function(rng, small)
    big_n = 60
    big = Lattice.centered(0.5, big_n)
    vals = np.zeros(big.extent)
    vals[big_n - 3 : big_n + 4, big_n - 3 : big_n + 4] = u.values
    ub = GridFunction(DomainMask(big, vals != 0), vals)
    exact = gagliardo_p(u, 2.0, 0.5, tail_model="lattice")
    boxed = gagliardo_p(ub, 2.0, 0.5, tail_model="off")
    # what is left beyond radius ~ 60 nodes is O(R^{-ps}) relative
    assert boxed < exact and (exact - boxed) / exact < 0.03
    assert math.isclose(gagliardo_p(ub, 2.0, 0.5, tail_model="lattice"), exact, rel_tol=1e-12)


def test_lattice_exterior_independent_of_box(rng):
    u = random_function(rng, Lattice.centered(0.25, 4))
    bigger = Lattice.centered(0.25, 9)
    vals = np.zeros(bigger.extent)
    vals[5:14, 5:14] = u.values
    ub = GridFunction(DomainMask(bigger, vals != 0), vals)
    for p, s in [(2.0, 0.5), (3.0, 0.3)]:
        assert math.isclose(gagliardo_p(u, p, s), gagliardo_p(ub, p, s), rel_tol=1e-12)


def test_shell_tail_symmetric_under_box_reflections():
    lat = Lattice.centered(0.25, 7)
    inside = np.zeros(lat.extent, bool)
    inside[2:-2, 2:-2] = True
    m = DomainMask(lat, inside)
    nl = NonlocalOnSet(lat, m.flat_indices(), 2.0, 0.5, "shell")
    mass = np.zeros(lat.size)
    mass[nl.nodes] = nl.exterior_mass
    kappa = np.zeros(lat.size)
    kappa[nl.nodes] = shell_kappa(lat, nl.idx, 2.0, 0.5)
    for H in ("e1<0", "e2<0", "d+<0", "d-<0"):
        refl = reflection_map(lat, Polarizer.parse(H))
        assert np.array_equal(kappa, kappa[refl.target])
        # box sums accumulate in node order, so mirrored nodes may differ in the last bits
        np.testing.assert_allclose(mass, mass[refl.target], rtol=1e-14)


def test_shell_tail_rejects_boundary_support():
    lat = Lattice.centered(0.25, 3)
    inside = np.zeros(lat.extent, bool)
    inside[0, 3] = True
    with pytest.raises(EnergyError):
        gagliardo_p(GridFunction(DomainMask(lat, inside), inside * 1.0), 2.0, 0.5, tail_model="shell")


# --- Rayleigh quotient ---


def test_rayleigh_single_node():
    # local: two unit edges; nonlocal (no exterior): ordered pairs (0, +-1) and (+-1, 0)
    lat = line(1)
    u = GridFunction(mask_1d(lat, [0]), [0, 1, 0])
    br = rayleigh_quotient(u, OperatorParams(2.0, 0.5, 1, 1, tail_enabled=False))
    assert (br.local_energy, br.nonlocal_energy, br.lp_norm_p, br.rayleigh) == (2.0, 4.0, 1.0, 6.0)


def test_rayleigh_homogeneity_and_weights(rng):
    lat = Lattice.centered(0.25, 5)
    u = random_function(rng, lat)
    for p in (1.5, 2.0, 3.0):
        params = OperatorParams(p, 0.5, 1, 1)
        r = rayleigh_quotient(u, params).rayleigh
        for c in (1e-3, 0.7, 42.0, -2.0):
            assert math.isclose(rayleigh_quotient(u.scaled(c), params).rayleigh, r, rel_tol=1e-12)
        br = rayleigh_quotient(u, params)
        assert rayleigh_quotient(u, OperatorParams(p, 0.5, 1, 0)).rayleigh == br.local_energy / br.lp_norm_p
        assert rayleigh_quotient(u, OperatorParams(p, 0.5, 0, 1)).rayleigh == br.nonlocal_energy / br.lp_norm_p


def test_rayleigh_zero_function():
    lat = line(1)
    with pytest.raises(EnergyError):
        rayleigh_quotient(GridFunction(mask_1d(lat, [0]), [0, 0, 0]), OperatorParams())


def test_params_validation():
    for bad in (dict(p=1.0), dict(s=1.0), dict(a=0, b=0), dict(a=-1), dict(local_form="x"), dict(tail_model="y")):
        with pytest.raises(EnergyError):
            OperatorParams(**bad)


def test_refinement_consistency():
    """Rayleigh values of a fixed smooth bump at h and h/2 (logged trend, loose check)."""
    shape = Ball((0.0, 0.0), 0.5)
    values = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        lat = Lattice.for_shape(shape, h)
        m = build_mask(lat, shape)
        u = GridFunction.from_function(m, lambda x: np.cos(np.pi * np.linalg.norm(x, axis=-1)))
        values.append(rayleigh_quotient(u, OperatorParams(2.0, 0.5, 1, 1)).rayleigh)
    ratios = [b / a for a, b in zip(values, values[1:])]
    print("refinement ratios", ratios)
    assert abs(ratios[1] - 1) < abs(ratios[0] - 1)


# --- polarization inequalities ---


@pytest.mark.parametrize("model", ["lattice", "shell", "off"])
def test_polarization_decreases_energies(rng, model):
    lat = Lattice.centered(0.25, 7)
    for desc in ("e1<0", "-e2<0", "d+<0", "-d-<0", "e1<0.125"):
        H = Polarizer.parse(desc)
        if model != "lattice" and not np.all(reflection_map(lat, H).target >= 0):
            continue
        for p in (1.5, 2.0, 3.0):
            u = random_function(rng, lat)
            pu = polarize_function(u, H)
            assert local_energy(pu, p) <= local_energy(u, p) * (1 + 1e-12)
            assert gagliardo_p(pu, p, 0.5, tail_model=model) <= gagliardo_p(u, p, 0.5, tail_model=model) * (1 + 1e-12)
            assert math.isclose(lp_norm_p(pu, p), lp_norm_p(u, p), rel_tol=1e-12)


# --- gradients ---


def test_gradient_of_zero():
    lat = Lattice.centered(0.25, 4)
    z = GridFunction(DomainMask(lat, np.zeros(lat.extent, bool)), np.zeros(lat.extent))
    assert not energy_gradient(z, OperatorParams(3.0)).any()


def test_gradient_is_twice_matrix_at_p2(rng):
    lat = Lattice.centered(0.25, 5)
    u = random_function(rng, lat)
    params = OperatorParams(2.0, 0.4, 0.7, 1.3)
    fun = MaskedFunctional(u.support_mask, params)
    u_s = u.values.ravel()[fun.nodes]
    g = energy_gradient(u, params).ravel()[fun.nodes]
    np.testing.assert_allclose(g, 2 * fun.p2_matrix() @ u_s, rtol=1e-11, atol=1e-11 * np.abs(g).max())


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("form", ["edge", "euclidean"])
def test_gradient_central_differences(rng, p, form):
    lat = Lattice.centered(0.25, 3)
    mask = DomainMask(lat, np.ones(lat.extent, bool))
    params = OperatorParams(p, 0.5, 1.0, 1.0, local_form=form)
    vals = 0.5 + 0.01 * rng.permutation(lat.size).reshape(lat.extent)
    g = energy_gradient(GridFunction(mask, vals), params)
    eps = 1e-6

    def num(v):
        br = rayleigh_quotient(GridFunction(mask, v), params)
        return (br.local_energy * params.a + br.nonlocal_energy * params.b)

    for flat in rng.choice(lat.size, 8, replace=False):
        e = np.zeros(lat.size)
        e[flat] = eps
        e = e.reshape(lat.extent)
        fd = (num(vals + e) - num(vals - e)) / (2 * eps)
        assert abs(fd - g.flat[flat]) <= 1e-5 * max(abs(fd), 1.0)


def test_masked_functional_matches_public_functions(rng):
    lat = Lattice.centered(0.25, 5)
    u = random_function(rng, lat)
    for p in (1.5, 2.0, 3.0):
        params = OperatorParams(p, 0.5, 1.0, 2.0)
        fun = MaskedFunctional(u.support_mask, params)
        u_s = u.values.ravel()[fun.nodes]
        br = rayleigh_quotient(u, params)
        assert math.isclose(fun.rayleigh(u_s), br.rayleigh, rel_tol=1e-13)
        _, g = fun.numerator_and_grad(u_s)
        np.testing.assert_allclose(g, energy_gradient(u, params).ravel()[fun.nodes], rtol=1e-12, atol=1e-12)
