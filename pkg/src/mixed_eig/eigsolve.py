"""First Dirichlet eigenpair of the discrete mixed operator.

``solve_p2`` is the linear case: inverse iteration on the dense SPD matrix
of the quadratic form.  ``solve_descent`` minimizes the Rayleigh quotient
for any p > 1 by projected descent; the search direction is the gradient
preconditioned with the (smoothed) Hessian of the numerator at the current
iterate, and the projection is u -> |u| followed by L^p normalization.  At
p = 2 the unit step is exactly one inverse-iteration step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .energy import EnergyError, MaskedFunctional, OperatorParams
from .geometry import DomainMask, erosion_depth
from .rearrange import GridFunction

log = logging.getLogger(__name__)


def hessian_smoothing(p: float) -> float:
    """Smoothing of |t|^{p-2} in the preconditioner, relative to max u."""
    return 1e-3 if p < 2 else 0.1


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tol_rel: float | None = None  # None -> 1e-8 for both methods
    max_iter: int = 5000
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.tol_rel is not None and not self.tol_rel > 0:
            raise SolverError("tol_rel must be positive")
        if self.max_iter < 1:
            raise SolverError("max_iter must be >= 1")
        if not 0 < self.backtrack_factor < 1:
            raise SolverError("backtrack_factor must lie in (0, 1)")

    def tol_for(self, method: str) -> float:
        if self.tol_rel is not None:
            return self.tol_rel
        return 1e-8


@dataclass
class EigenResult:
    lam: float
    eigenfunction: GridFunction
    iterations: int
    residual: float
    converged: bool
    interior_min: float
    local_energy: float = 0.0
    nonlocal_energy: float = 0.0
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def positive(self) -> bool:
        return self.interior_min > 0


def assemble_p2_matrix(mask: DomainMask, params: OperatorParams) -> np.ndarray:
    """Matrix M with u^T M u = a*local + b*nonlocal (p = 2), rows = inside nodes."""
    if params.p != 2.0:
        raise SolverError("assemble_p2_matrix requires p = 2")
    try:
        return MaskedFunctional(mask, params).p2_matrix()
    except EnergyError as exc:
        raise SolverError(str(exc)) from exc


def _normalize(fun: MaskedFunctional, u: np.ndarray) -> np.ndarray:
    return u / fun.norm_p(u) ** (1.0 / fun.params.p)


def _finish(fun: MaskedFunctional, u: np.ndarray, lam, iters, residual, converged, history) -> EigenResult:
    u = _normalize(fun, np.abs(u))
    loc, nonloc = fun.parts(u)
    return EigenResult(
        lam=float(lam),
        eigenfunction=fun.as_grid_function(u),
        iterations=iters,
        residual=float(residual),
        converged=bool(converged),
        interior_min=float(u.min()),
        local_energy=loc,
        nonlocal_energy=nonloc,
        history=history,
    )


def initial_profile(mask: DomainMask, seed: int = 0) -> np.ndarray:
    """Erosion-depth bump on the inside nodes, lightly perturbed by ``seed``."""
    depth = erosion_depth(mask).ravel()[mask.flat_indices()]
    if seed:
        rng = np.random.default_rng(seed)
        depth = depth * (1.0 + 0.25 * rng.uniform(size=depth.shape))
    return depth


def solve_p2(mask: DomainMask, params: OperatorParams, opts: SolverOptions = SolverOptions()) -> EigenResult:
    if params.p != 2.0:
        raise SolverError("solve_p2 requires p = 2")
    if mask.is_empty():
        raise SolverError("empty mask")
    fun = MaskedFunctional(mask, params)
    m = fun.p2_matrix()
    vol = fun.lattice.cell_volume
    try:
        factor = linalg.cho_factor(m, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SolverError(f"p = 2 matrix is not positive definite: {exc}") from exc
    tol = opts.tol_for("p2")
    u = initial_profile(mask, opts.seed)
    u /= np.linalg.norm(u)
    lam, residual, history = np.inf, np.inf, []
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        v = linalg.cho_solve(factor, u, check_finite=False)
        u = v / np.linalg.norm(v)
        mu = m @ u
        lam = float(u @ mu) / vol
        residual = float(np.linalg.norm(mu - lam * vol * u)) / (lam * vol)
        history.append(lam)
        if residual <= tol:
            converged = True
            break
    if u.sum() < 0:
        u = -u
    return _finish(fun, u, lam, it, residual, converged, history)


def _descent_direction(fun: MaskedFunctional, u, g, lam, fixed):
    """Hessian-preconditioned Rayleigh gradient (scaled so p = 2 gives inverse iteration)."""
    p = fun.params.p
    grad_r = g - lam * p * fun.lattice.cell_volume * np.abs(u) ** (p - 1) * np.sign(u)
    precond = fixed or linalg.cho_factor(
        fun.hessian(u, hessian_smoothing(p) * u.max()), lower=True, check_finite=False
    )
    return (p - 1) * linalg.cho_solve(precond, grad_r, check_finite=False)


def solve_descent(
    mask: DomainMask,
    params: OperatorParams,
    opts: SolverOptions = SolverOptions(),
    initial: np.ndarray | None = None,
) -> EigenResult:
    """Normalized projected descent on the Rayleigh quotient.

    ``initial`` (values on the inside nodes, nonnegative) overrides the
    erosion-depth start.  The Rayleigh history is non-increasing: a step is
    taken only if it lowers the quotient.
    """
    if mask.is_empty():
        raise SolverError("empty mask")
    fun = MaskedFunctional(mask, params)
    p = params.p
    fixed = linalg.cho_factor(2.0 * fun.p2_matrix(), lower=True, check_finite=False) if p == 2.0 else None
    tol = opts.tol_for("descent")
    beta = opts.backtrack_factor

    u = initial_profile(mask, opts.seed) if initial is None else np.abs(np.asarray(initial, float))
    u = _normalize(fun, u)
    num, g = fun.numerator_and_grad(u)
    lam = num  # ||u||_p = 1
    history = [lam]
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        direction = _descent_direction(fun, u, g, lam, fixed)
        eta = opts.step_init
        accepted = None
        while eta > 1e-14 * opts.step_init:
            trial = np.abs(u - eta * direction)
            norm = fun.norm_p(trial)
            if norm > 0:
                trial /= norm ** (1.0 / p)
                r = fun.numerator(trial) / fun.norm_p(trial)
                if r < lam:
                    accepted = (trial, r)
                    break
            eta *= beta
        if accepted is None:
            converged = True
            break
        u, new_lam = accepted
        decrease = (lam - new_lam) / new_lam
        lam = new_lam
        history.append(lam)
        num, g = fun.numerator_and_grad(u)
        if decrease < tol:
            converged = True
            break
    # residual: length of the preconditioned gradient step relative to |u|
    residual = np.linalg.norm(_descent_direction(fun, u, g, lam, fixed)) / np.linalg.norm(u)
    if not converged:
        log.warning("descent hit max_iter=%d at lambda=%.10g", opts.max_iter, lam)
    return _finish(fun, u, lam, it, residual, converged, history)


def solve(mask: DomainMask, params: OperatorParams, opts: SolverOptions = SolverOptions(), **kw) -> EigenResult:
    """Dispatch: exact p = 2 path when possible, descent otherwise."""
    if params.p == 2.0 and "initial" not in kw:
        return solve_p2(mask, params, opts)
    return solve_descent(mask, params, opts, **kw)


def dense_oracle(mask: DomainMask, params: OperatorParams) -> float:
    """Smallest eigenvalue of the p = 2 problem by full symmetric eigendecomposition."""
    m = assemble_p2_matrix(mask, params)
    return float(linalg.eigh(m, eigvals_only=True, subset_by_index=[0, 0])[0]) / mask.lattice.cell_volume
