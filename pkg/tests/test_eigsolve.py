import math

import numpy as np
import pytest

from conftest import line, mask_1d
from mixed_eig.eigsolve import (
    SolverError,
    SolverOptions,
    assemble_p2_matrix,
    dense_oracle,
    solve,
    solve_descent,
    solve_p2,
)
from mixed_eig.energy import OperatorParams, rayleigh_quotient
from mixed_eig.geometry import Annulus, Ball, DomainMask, Lattice, Rectangle, build_mask, random_blob
from mixed_eig.rearrange import GridFunction, lp_distance


def ball_mask(h: float, radius: float = 0.5, center=(0.0, 0.0)) -> DomainMask:
    lat = Lattice.for_shape(Ball((0.0, 0.0), radius), h)
    return build_mask(lat, Ball(center, radius))


def annulus_mask(h: float, t: float = 0.3) -> DomainMask:
    lat = Lattice.for_shape(Annulus(1.0, 0.3, (0.0, 0.0)), h, padding=4 * h)
    return build_mask(lat, Annulus(1.0, 0.3, (t, 0.0)))


P2 = OperatorParams(2.0, 0.5, 1.0, 1.0)


# --- matrix ---


def test_single_node_matrix():
    params = OperatorParams(2.0, 0.5, 1, 1, tail_enabled=False)
    m = mask_1d(line(1), [0])
    assert assemble_p2_matrix(m, params).tolist() == [[6.0]]
    res = solve_p2(m, params)
    assert res.lam == 6.0 and res.eigenfunction.values.tolist() == [0.0, 1.0, 0.0]


def test_matrix_symmetric_and_matches_energy(rng):
    m = ball_mask(1 / 8)
    for params in (P2, OperatorParams(2.0, 0.25, 0.5, 2.0, tail_model="shell"), OperatorParams(2.0, 0.75, 0, 1)):
        mat = assemble_p2_matrix(m, params)
        assert np.array_equal(mat, mat.T)
        for _ in range(10):
            u_s = rng.normal(size=m.count)
            full = np.zeros(m.lattice.size)
            full[m.flat_indices()] = u_s
            br = rayleigh_quotient(GridFunction(m, full.reshape(m.lattice.extent)), params)
            energy = params.a * br.local_energy + params.b * br.nonlocal_energy
            assert math.isclose(u_s @ mat @ u_s, energy, rel_tol=1e-12)


def test_matrix_requires_p2_and_nonempty():
    m = ball_mask(1 / 8)
    with pytest.raises(SolverError):
        assemble_p2_matrix(m, OperatorParams(3.0))
    with pytest.raises(SolverError):
        solve_p2(m, OperatorParams(1.5))
    empty = DomainMask(m.lattice, np.zeros(m.lattice.extent, bool))
    with pytest.raises(SolverError):
        solve_p2(empty, P2)
    with pytest.raises(SolverError):
        solve_descent(empty, OperatorParams(3.0))


def test_options_validation():
    for bad in (dict(tol_rel=0.0), dict(max_iter=0), dict(backtrack_factor=1.0)):
        with pytest.raises(SolverError):
            SolverOptions(**bad)


# --- p = 2 path ---


@pytest.mark.parametrize("shape", [Ball((0.1, 0.0), 0.45), Rectangle((-0.6, -0.3), (0.6, 0.3)), Annulus(0.6, 0.2, (0.1, 0.1))])
def test_p2_matches_dense_oracle(shape):
    lat = Lattice.for_shape(shape, 1 / 12)
    m = build_mask(lat, shape)
    res = solve_p2(m, P2)
    assert res.converged
    assert abs(res.lam - dense_oracle(m, P2)) <= 1e-10 * res.lam
    assert res.residual <= 10 * 1e-8
    assert res.positive
    assert math.isclose(np.sum(res.eigenfunction.values**2) * lat.cell_volume, 1.0, rel_tol=1e-10)


def test_domain_monotonicity():
    lat = Lattice.centered(1 / 12, 16)
    small = build_mask(lat, Ball((0.0, 0.0), 0.4))
    big = build_mask(lat, Ball((0.0, 0.0), 0.55))
    assert not np.any(small.inside & ~big.inside)
    assert solve_p2(small, P2).lam > solve_p2(big, P2).lam


def test_weight_scaling():
    m = ball_mask(1 / 10)
    base = solve_p2(m, OperatorParams(2.0, 0.5, 1.0, 0.5)).lam
    doubled = solve_p2(m, OperatorParams(2.0, 0.5, 2.0, 1.0)).lam
    assert math.isclose(doubled, 2 * base, rel_tol=1e-12)
    u = solve_descent(m, OperatorParams(3.0, 0.5, 1.0, 0.5)).eigenfunction
    # the quotient itself is exactly linear in the weights
    r1 = rayleigh_quotient(u, OperatorParams(3.0, 0.5, 1.0, 0.5)).rayleigh
    r2 = rayleigh_quotient(u, OperatorParams(3.0, 0.5, 2.0, 1.0)).rayleigh
    assert r2 == 2 * r1


def test_translation_invariance():
    lat = Lattice.centered(1 / 8, 16)
    h = lat.h
    a = build_mask(lat, Ball((0.0, 0.0), 0.55))
    b = build_mask(lat, Ball((3 * h, -2 * h), 0.55))
    assert np.array_equal(np.roll(np.roll(a.inside, 3, 0), -2, 1), b.inside)
    assert solve_p2(a, P2).lam == solve_p2(b, P2).lam
    p3 = OperatorParams(3.0, 0.5, 1, 1)
    assert math.isclose(solve_descent(a, p3).lam, solve_descent(b, p3).lam, rel_tol=1e-12)


def test_mirror_invariance():
    lat = Lattice.centered(1 / 12, 16)
    a = build_mask(lat, Annulus(1.0, 0.3, (0.25, 0.0)))
    b = DomainMask(lat, a.inside[::-1])
    assert math.isclose(solve_p2(a, P2).lam, solve_p2(b, P2).lam, rel_tol=1e-12)


# --- descent ---


def test_descent_matches_p2_on_ball():
    m = ball_mask(1 / 16)
    exact = solve_p2(m, P2)
    res = solve_descent(m, P2)
    assert res.converged
    assert abs(res.lam - exact.lam) <= 1e-5 * exact.lam
    assert lp_distance(res.eigenfunction, exact.eigenfunction, 2) < 1e-3


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_single_node_any_p(p):
    params = OperatorParams(p, 0.5, 1, 1)
    m = mask_1d(line(3, h=0.5), [0])
    res = solve_descent(m, params)
    delta = GridFunction(m, np.where(m.inside, 1.0, 0.0))
    assert math.isclose(res.lam, rayleigh_quotient(delta, params).rayleigh, rel_tol=1e-14)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_descent_history_and_residual(p):
    m = annulus_mask(1 / 8)
    res = solve_descent(m, OperatorParams(p, 0.5, 1, 1))
    assert res.converged
    assert all(b < a for a, b in zip(res.history, res.history[1:]))
    assert res.residual <= 1e-4
    assert res.positive
    assert math.isclose(np.sum(res.eigenfunction.values**p) * m.lattice.cell_volume, 1.0, rel_tol=1e-10)
    assert math.isclose(rayleigh_quotient(res.eigenfunction, OperatorParams(p, 0.5, 1, 1)).rayleigh, res.lam, rel_tol=1e-12)


def test_descent_seed_agreement_p3():
    m = annulus_mask(1 / 10)
    params = OperatorParams(3.0, 0.5, 1, 1)
    lams = [solve_descent(m, params, SolverOptions(seed=seed)).lam for seed in (0, 1, 2, 3)]
    assert max(lams) - min(lams) <= 1e-4 * min(lams)


def test_descent_initial_override():
    m = ball_mask(1 / 8)
    params = OperatorParams(1.5, 0.5, 1, 1)
    ref = solve_descent(m, params)
    warm = solve_descent(m, params, initial=ref.eigenfunction.values.ravel()[m.flat_indices()])
    assert warm.iterations < ref.iterations
    assert abs(warm.lam - ref.lam) <= 1e-6 * ref.lam


def test_descent_max_iter_flags_non_convergence():
    res = solve_descent(annulus_mask(1 / 8), OperatorParams(3.0), SolverOptions(max_iter=2))
    assert not res.converged and res.iterations == 2


def test_dispatch():
    m = ball_mask(1 / 8)
    assert solve(m, P2).lam == solve_p2(m, P2).lam
    assert solve(m, OperatorParams(3.0)).lam == solve_descent(m, OperatorParams(3.0)).lam


def test_positivity_on_connected_masks():
    lat = Lattice.centered(1 / 8, 10)
    for seed in range(3):
        m = build_mask(lat, random_blob(seed, 4, 0.3))
        assert m.is_connected()
        for params in (P2, OperatorParams(1.5), OperatorParams(3.0, 0.3, 0, 1)):
            res = solve(m, params)
            assert res.converged and res.interior_min > 0
