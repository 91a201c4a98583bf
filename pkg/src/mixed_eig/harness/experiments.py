"""Experiment drivers behind the CLI subcommands.

Every driver takes an ``ExperimentConfig`` and returns a ``Report``; nothing
here touches the filesystem.  Solves of independent domains go through
``solve_many``, which uses a process pool when ``run.workers > 1`` and always
returns results in submission order.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from ..eigsolve import EigenResult, SolverOptions, solve_descent, solve_p2
from ..energy import EnergyError, OperatorParams, rayleigh_quotient
from ..rearrange import GridFunction, iterate_polarizations, polarize_function
from . import suites
from .config import ConfigError, ExperimentConfig
from .report import FUNCTION_COLUMNS, SET_COLUMNS, SOLVE_COLUMNS, SUITE_COLUMNS, Check, PlotSpec, Report

log = logging.getLogger(__name__)

# relative slack for inequalities that hold exactly up to summation order
EXACT_RTOL = 1e-12
# residual bound for the descent path (preconditioned step length relative to |u|)
DESCENT_RESIDUAL_MAX = 1e-4


# --- solving -------------------------------------------------------------------


@dataclass(frozen=True)
class SolveTask:
    mask: geo.DomainMask
    params: OperatorParams
    opts: SolverOptions
    method: str
    initial: np.ndarray | None = None


def run_task(task: SolveTask) -> tuple[EigenResult, float]:
    start = time.perf_counter()
    if task.method == "p2" and task.initial is None:
        res = solve_p2(task.mask, task.params, task.opts)
    else:
        res = solve_descent(task.mask, task.params, task.opts, task.initial)
    return res, time.perf_counter() - start


def solve_many(tasks: list[SolveTask], workers: int = 1) -> list[tuple[EigenResult, float]]:
    try:
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
                return list(pool.map(run_task, tasks))
        return [run_task(t) for t in tasks]
    except EnergyError as exc:
        raise ConfigError("operator", str(exc)) from exc


def _task(cfg: ExperimentConfig, mask: geo.DomainMask, initial=None) -> SolveTask:
    if mask.is_empty():
        raise ConfigError("lattice.h", "domain has no inside nodes at this resolution")
    return SolveTask(mask, cfg.params(), cfg.solver_options(), cfg.method(), initial)


def solve_row(experiment: str, case: int, domain: str, label: str, res: EigenResult, mask: geo.DomainMask,
              param=None, metric=None) -> dict:
    return {
        "experiment": experiment,
        "case": case,
        "domain": domain,
        "label": label,
        "param": param,
        "lambda": res.lam,
        "local_energy": res.local_energy,
        "nonlocal_energy": res.nonlocal_energy,
        "iterations": res.iterations,
        "residual": res.residual,
        "converged": res.converged,
        "interior_min": res.interior_min,
        "nodes": mask.count,
        "metric": metric,
    }


def _note_convergence(report: Report, label: str, res: EigenResult) -> None:
    if not res.converged:
        report.unconverged.append(label)


def _positivity(report: Report, case: int, label: str, mask: geo.DomainMask, res: EigenResult) -> None:
    if res.converged and mask.is_connected():
        report.checks.append(Check("positivity", case, 0.0, res.interior_min, 0.0, label, strict=True))


def _residual_check(report: Report, case: int, label: str, cfg: ExperimentConfig, res: EigenResult) -> None:
    method = cfg.method()
    bound = 10 * cfg.solver_options().tol_for("p2") if method == "p2" else DESCENT_RESIDUAL_MAX
    report.checks.append(Check("residual", case, res.residual, bound, 0.0, label))


def _shape(cfg: ExperimentConfig) -> geo.Shape:
    cfg.require("lattice.h", "domain.shape")
    return cfg["domain.shape"]


def _mask(lattice: geo.Lattice, shape: geo.Shape) -> geo.DomainMask:
    try:
        return geo.build_mask(lattice, shape)
    except geo.GeometryError as exc:
        raise ConfigError("domain.shape", str(exc)) from exc


def _new_report(cfg: ExperimentConfig, experiment: str, columns=SOLVE_COLUMNS) -> Report:
    return Report(experiment, columns, cfg.echo())


# --- eig -------------------------------------------------------------------------


def run_eig(cfg: ExperimentConfig) -> Report:
    shape = _shape(cfg)
    mask = _mask(cfg.lattice_for(shape), shape)
    report = _new_report(cfg, "eig")
    (res, secs), = solve_many([_task(cfg, mask)])
    report.add_row(solve_row("eig", 0, shape.describe(), "Omega", res, mask), secs)
    _note_convergence(report, "Omega", res)
    _residual_check(report, 0, "Omega", cfg, res)
    _positivity(report, 0, "Omega", mask, res)
    report.summary = {"connected": mask.is_connected(), "measure": geo.mask_measure(mask), "method": cfg.method()}
    report.files["eigenfunction.txt"] = res.eigenfunction.to_text()
    report.files["eigenfunction.f64"] = res.eigenfunction.values.astype("<f8").tobytes()
    report.files["mask.txt"] = mask.to_text()
    return report


# --- set and function polarization ------------------------------------------------


def _reflection(lattice: geo.Lattice, H: geo.Polarizer) -> geo.Reflection:
    try:
        return geo.reflection_map(lattice, H)
    except geo.GeometryError as exc:
        raise ConfigError("polarize.polarizers", str(exc)) from exc


def run_polarize_set(cfg: ExperimentConfig) -> Report:
    shape = _shape(cfg)
    lat = cfg.lattice_for(shape)
    mask = _mask(lat, shape)
    report = _new_report(cfg, "polarize-set", SET_COLUMNS)
    for case, H in enumerate(cfg.polarizers(lat.dim)):
        refl = _reflection(lat, H)
        try:
            pm = geo.polarize_mask(mask, H, refl)
        except geo.GeometryError as exc:
            raise ConfigError("polarize.polarizers", f"{H.describe()}: {exc}") from exc
        a, b = geo.witness_sets(mask, H, refl)
        try:
            sm = geo.reflect_mask(mask, H, refl)
            equals_reflection = pm == sm
        except geo.GeometryError:
            equals_reflection = None  # mirror image leaves the box; P_H(Omega) lies inside it
        fixed = pm == mask
        report.add_row({
            "case": case, "polarizer": H.describe(), "nodes_in": mask.count, "nodes_out": pm.count,
            "a_nodes": a.count, "b_nodes": b.count, "fixed": fixed, "equals_reflection": equals_reflection,
            "measure_in": geo.mask_measure(mask), "measure_out": geo.mask_measure(pm),
        })
        d = H.describe()
        report.checks.append(Check("measure preserved", case, abs(pm.count - mask.count), 0, 0, d))
        report.checks.append(Check("A empty iff fixed", case, float(a.is_empty() != fixed), 0, 0, d))
        if equals_reflection is not None:
            report.checks.append(Check("B empty iff reflection", case, float(b.is_empty() != equals_reflection), 0, 0, d))
        report.files[f"polarized_{case:02d}.txt"] = pm.to_text()
    report.files["mask.txt"] = mask.to_text()
    return report


def _bump_function(mask: geo.DomainMask) -> GridFunction:
    depth = geo.erosion_depth(mask)
    return GridFunction(mask, depth / max(depth.max(), 1.0))


def run_polarize_fn(cfg: ExperimentConfig) -> Report:
    shape = _shape(cfg)
    lat = cfg.lattice_for(shape)
    mask = _mask(lat, shape)
    params = cfg.params()
    report = _new_report(cfg, "polarize-fn", FUNCTION_COLUMNS)
    if cfg["polarize.function"] == "eigenfunction":
        (res, _), = solve_many([_task(cfg, mask)])
        _note_convergence(report, "Omega", res)
        u = res.eigenfunction
    else:
        u = _bump_function(mask)

    def row(case, label, f):
        e = rayleigh_quotient(f, params)
        report.add_row({"case": case, "polarizer": label, "lp_norm_p": e.lp_norm_p, "local_energy": e.local_energy,
                        "nonlocal_energy": e.nonlocal_energy, "rayleigh": e.rayleigh})
        return e

    base = row(0, "identity", u)
    report.files["function_00.txt"] = u.to_text()
    for case, H in enumerate(cfg.polarizers(lat.dim), start=1):
        refl = _reflection(lat, H)
        try:
            pu = polarize_function(u, H, refl)
        except ValueError as exc:
            raise ConfigError("polarize.polarizers", f"{H.describe()}: {exc}") from exc
        e = row(case, H.describe(), pu)
        d = H.describe()
        report.checks.append(Check("norm preserved", case, abs(e.lp_norm_p - base.lp_norm_p), 0.0, EXACT_RTOL * base.lp_norm_p, d))
        report.checks.append(Check("local energy non-increasing", case, e.local_energy, base.local_energy, EXACT_RTOL * base.local_energy, d))
        report.checks.append(Check("nonlocal energy non-increasing", case, e.nonlocal_energy, base.nonlocal_energy, EXACT_RTOL * base.nonlocal_energy, d))
        report.checks.append(Check("Rayleigh non-increasing", case, e.rayleigh, base.rayleigh, EXACT_RTOL * base.rayleigh, d))
        report.files[f"function_{case:02d}.txt"] = pu.to_text()
    return report


# --- Faber-Krahn under polarization -----------------------------------------------


def run_fk_polarization(cfg: ExperimentConfig) -> Report:
    """lambda(P_H Omega) <= lambda(Omega) for each configured polarizer.

    For the descent tier the solve on P_H(Omega) starts from the polarized
    eigenfunction of Omega; a cold-start solve is run alongside as a
    cross-check when ``polarize.cold_check`` is on.
    """
    shape = _shape(cfg)
    lat = cfg.lattice_for(shape)
    mask = _mask(lat, shape)
    method = cfg.method()
    report = _new_report(cfg, "fk-polarization")
    name = shape.describe()
    (base, secs), = solve_many([_task(cfg, mask)])
    report.add_row(solve_row("fk-polarization", 0, name, "Omega", base, mask), secs)
    _note_convergence(report, "Omega", base)
    _positivity(report, 0, "Omega", mask, base)
    tol = cfg.tolerance(base.lam, method)
    margin_min = cfg["check.margin_min"]
    cache: dict[geo.DomainMask, EigenResult] = {mask: base}
    cases = []
    gaps = []
    for case, H in enumerate(cfg.polarizers(lat.dim), start=1):
        d = H.describe()
        refl = _reflection(lat, H)
        try:
            pm = geo.polarize_mask(mask, H, refl)
        except geo.GeometryError as exc:
            raise ConfigError("polarize.polarizers", f"{d}: {exc}") from exc
        a, b = geo.witness_sets(mask, H, refl)
        cold = None
        if pm in cache:
            res, secs = cache[pm], 0.0
        else:
            initial = None
            if method == "descent":
                warm = polarize_function(base.eigenfunction, H, refl)
                initial = warm.values.ravel()[pm.flat_indices()]
            (res, secs), = solve_many([_task(cfg, pm, initial)])
            cache[pm] = res
            if method == "descent" and cfg["polarize.cold_check"]:
                (cold, _), = solve_many([_task(cfg, pm)])
        gap = (base.lam - res.lam) / base.lam
        gaps.append(gap)
        report.add_row(solve_row("fk-polarization", case, name, d, res, pm, metric=gap), secs)
        _note_convergence(report, d, res)
        _positivity(report, case, d, pm, res)
        report.checks.append(Check("FK under polarization", case, res.lam, base.lam, tol, d))
        strict = not a.is_empty() and not b.is_empty()
        if pm == mask:
            report.checks.append(Check("fixed domain has zero gap", case, abs(gap), 0.0, 0.0, d))
        elif strict:
            report.checks.append(Check("strict gap", case, margin_min, gap, 0.0, d))
        if cold is not None:
            _note_convergence(report, f"{d} (cold)", cold)
            report.checks.append(Check("warm/cold agreement", case, abs(cold.lam - res.lam) / res.lam,
                                       cfg["check.descent_agreement"], 0.0, d))
        cases.append({
            "polarizer": d, "a_empty": a.is_empty(), "b_empty": b.is_empty(), "strict_hypothesis": strict,
            "fixed": pm == mask, "lambda_omega": base.lam, "lambda_polarized": res.lam, "gap_rel": gap,
            "lambda_cold": None if cold is None else cold.lam, "connected": pm.is_connected(),
        })
    report.summary = {"domain": name, "method": method, "tol": tol, "cases": cases}
    report.plot = PlotSpec(list(range(1, len(gaps) + 1)), gaps, "polarizer index", "relative gap",
                           "lambda(Omega) - lambda(P_H Omega), relative")
    return report


# --- annulus sweep ------------------------------------------------------------------


def run_annulus_sweep(cfg: ExperimentConfig) -> Report:
    cfg.require("lattice.h", "annulus.t")
    R, r, ts, h = cfg["annulus.R"], cfg["annulus.r"], list(cfg["annulus.t"]), cfg["lattice.h"]
    if not r < R:
        raise ConfigError("annulus.r", f"need 0 < r < R, got r={r}, R={R}")
    if 2 * r / h < 3:
        raise ConfigError("annulus.r", f"hole spans {2 * r / h:.2f} cells; need at least 3 (refine lattice.h)")
    if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
        raise ConfigError("annulus.t", "t values must be strictly increasing")
    if ts[0] < 0 or ts[-1] >= R - r:
        raise ConfigError("annulus.t", f"t must lie in [0, R - r) = [0, {R - r!r}); the hole escapes the ball")
    lat = cfg.lattice_for(geo.Ball((0.0, 0.0), R))
    shapes = [geo.Annulus(R, r, (t, 0.0)) for t in ts]
    masks = [_mask(lat, s) for s in shapes]
    tasks = [_task(cfg, m) for m in masks]
    mirror = cfg["annulus.mirror_check"] and ts[-1] > 0
    if mirror:
        mirror_mask = _mask(lat, geo.Annulus(R, r, (-ts[-1], 0.0)))
        tasks.append(_task(cfg, mirror_mask))
    results = solve_many(tasks, cfg["run.workers"])
    method = cfg.method()
    margin_min = cfg["check.margin_min"]
    report = _new_report(cfg, "annulus-sweep")
    lams = []
    for case, (t, shape, m, (res, secs)) in enumerate(zip(ts, shapes, masks, results)):
        label = f"t={t!r}"
        report.add_row(solve_row("annulus-sweep", case, shape.describe(), label, res, m, param=t), secs)
        _note_convergence(report, label, res)
        _positivity(report, case, label, m, res)
        lams.append(res.lam)
    steps = []
    for k in range(len(lams) - 1):
        drop = lams[k] - lams[k + 1]
        need = max(margin_min * lams[k], cfg.tolerance(lams[k], method))
        report.checks.append(Check("strictly decreasing", k + 1, need, drop, 0.0,
                                   f"t={ts[k]!r} -> t={ts[k + 1]!r}", strict=True))
        steps.append({"from": ts[k], "to": ts[k + 1], "drop": drop, "drop_rel": drop / lams[k], "required": need})
    if ts[0] == 0.0 and len(lams) > 1:
        report.checks.append(Check("maximal at t=0", 0, max(lams[1:]), lams[0], 0.0, "concentric annulus"))
    summary = {"R": R, "r": r, "method": method, "steps": steps, "nodes": [m.count for m in masks]}
    if mirror:
        mres, secs = results[-1]
        label = f"t={-ts[-1]!r} (mirror)"
        report.add_row(solve_row("annulus-sweep", len(ts), geo.Annulus(R, r, (-ts[-1], 0.0)).describe(), label,
                                 mres, mirror_mask, param=-ts[-1]), secs)
        _note_convergence(report, label, mres)
        slack = EXACT_RTOL * lams[-1] if method == "p2" else cfg.tolerance(lams[-1], method)
        report.checks.append(Check("mirror invariance", len(ts), abs(mres.lam - lams[-1]), 0.0, slack, label))
        summary["mirror_difference"] = mres.lam - lams[-1]
    report.summary = summary
    report.plot = PlotSpec(ts, lams, "hole offset t", "lambda", f"annulus R={R:g}, r={r:g}")
    return report


# --- classical Faber-Krahn -------------------------------------------------------------


def translation_congruent(a: geo.DomainMask, b: geo.DomainMask) -> bool:
    """True when the two node sets differ by a lattice translation."""
    if a.count != b.count:
        return False
    if a.count == 0:
        return True

    def crop(m):
        idx = np.argwhere(m.inside)
        lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
        return m.inside[tuple(slice(l, u) for l, u in zip(lo, hi))]

    ca, cb = crop(a), crop(b)
    return ca.shape == cb.shape and np.array_equal(ca, cb)


def run_fk_classical(cfg: ExperimentConfig) -> Report:
    cfg.require("lattice.h")
    shapes = cfg["domain.shapes"] or ((cfg["domain.shape"],) if cfg["domain.shape"] is not None else None)
    if not shapes:
        raise ConfigError("domain.shapes", "required for this experiment")
    method = cfg.method()
    margin_min = cfg["check.margin_min"]
    masks, balls, tasks = [], [], []
    for shape in shapes:
        lat = cfg.lattice_for(shape)
        m = _mask(lat, shape)
        try:
            ball = geo.equal_measure_ball(m)
        except geo.GeometryError as exc:
            raise ConfigError("lattice.padding", f"{shape.describe()}: {exc}") from exc
        masks.append(m)
        balls.append(ball)
        tasks += [_task(cfg, m), _task(cfg, ball)]
    results = solve_many(tasks, cfg["run.workers"])
    report = _new_report(cfg, "fk-classical")
    cases = []
    for case, (shape, m, ball) in enumerate(zip(shapes, masks, balls)):
        (res, secs), (bres, bsecs) = results[2 * case], results[2 * case + 1]
        name = shape.describe()
        gap = (res.lam - bres.lam) / bres.lam
        congruent = translation_congruent(m, ball)
        report.add_row(solve_row("fk-classical", case, name, "Omega", res, m, metric=gap), secs)
        report.add_row(solve_row("fk-classical", case, name, "ball", bres, ball), bsecs)
        for label, r, mm in (("Omega", res, m), ("ball", bres, ball)):
            _note_convergence(report, f"{name}: {label}", r)
            _positivity(report, case, f"{name}: {label}", mm, r)
        report.checks.append(Check("ball minimizes", case, bres.lam, res.lam, cfg.tolerance(res.lam, method), name))
        if congruent:
            report.checks.append(Check("rigidity: zero gap for the ball", case, abs(gap), 0.0, 0.0, name))
        else:
            report.checks.append(Check("strict gap", case, margin_min, gap, 0.0, name))
        cases.append({"domain": name, "lambda": res.lam, "lambda_ball": bres.lam, "gap_rel": gap,
                      "ball_congruent": congruent, "connected": m.is_connected(), "nodes": m.count})
    report.summary = {"method": method, "cases": cases}
    report.plot = PlotSpec(list(range(len(cases))), [c["gap_rel"] for c in cases], "domain index",
                           "relative gap", "lambda(Omega) / lambda(ball) - 1")
    return report


# --- Schwarz by iterated polarization ----------------------------------------------------


def bump(lattice: geo.Lattice, center, radius: float) -> GridFunction:
    """(1 - |x - c|^2 / rho^2)^2 on the open ball of radius rho."""
    x = lattice.node_coords()
    q = np.sum((x - np.asarray(center, dtype=float)) ** 2, axis=-1) / radius**2
    inside = q < 1
    return GridFunction(geo.DomainMask(lattice, inside), np.where(inside, (1 - q) ** 2, 0.0))


def reflect_function(u: GridFunction, H: geo.Polarizer, refl: geo.Reflection) -> GridFunction:
    """u o sigma_H; the support must stay inside the box."""
    flat = u.values.ravel()
    nz = flat != 0
    if np.any(nz & (refl.target < 0)):
        raise ConfigError("schwarz.mirror", f"{H.describe()} carries the bump off the lattice box")
    out = np.zeros_like(flat)
    out[refl.target[nz]] = flat[nz]
    vals = out.reshape(u.lattice.extent)
    return GridFunction(geo.DomainMask(u.lattice, vals != 0), vals)


def run_schwarz(cfg: ExperimentConfig) -> Report:
    cfg.require("lattice.h")
    params = cfg.params()
    report = _new_report(cfg, "schwarz")
    if cfg["schwarz.input"] == "eigenfunction":
        shape = _shape(cfg)
        lat = cfg.lattice_for(shape)
        mask = _mask(lat, shape)
        (res, _), = solve_many([_task(cfg, mask)])
        _note_convergence(report, "Omega", res)
        u, name = res.eigenfunction, shape.describe()
    else:
        mirrored = cfg["schwarz.input"] == "mirrored-bump"
        cfg.require("schwarz.bump_radius", "schwarz.mirror" if mirrored else "schwarz.bump_center")
        rho = cfg["schwarz.bump_radius"]
        c = cfg["schwarz.center"] if mirrored else cfg["schwarz.bump_center"]
        c = tuple(c or (0.0, 0.0))
        lat = cfg.lattice_for(geo.Ball(c, rho))
        box_lo = np.asarray(lat.origin)
        box_hi = box_lo + lat.h * (np.asarray(lat.extent) - 1)
        if np.any(np.asarray(c) - rho < box_lo) or np.any(np.asarray(c) + rho > box_hi):
            raise ConfigError("schwarz.bump_radius", "bump does not fit the lattice box")
        u, name = bump(lat, c, rho), f"bump({', '.join(map(repr, c))}, {rho!r})"
        if mirrored:
            for text in cfg["schwarz.mirror"]:
                H = geo.Polarizer.parse(text, lat.dim)
                u = reflect_function(u, H, _reflection(lat, H))
                name += f" reflected in {H.describe()}"
    center = cfg["schwarz.center"] or (0.0,) * lat.dim
    if len(center) != lat.dim:
        raise ConfigError("schwarz.center", f"need {lat.dim} coordinates")
    path = iterate_polarizations(u, center, cfg["schwarz.budget"], cfg.seed, cfg["schwarz.candidates"], params.p)
    ray = []
    for k, (f, dist) in enumerate(zip(path.functions, path.distances)):
        e = rayleigh_quotient(f, params)
        ray.append(e.rayleigh)
        label = "input" if k == 0 else path.polarizers[k - 1].describe()
        report.add_row({"experiment": "schwarz", "case": k, "domain": name, "label": label, "param": k,
                        "lambda": e.rayleigh, "local_energy": e.local_energy, "nonlocal_energy": e.nonlocal_energy,
                        "iterations": k, "residual": None, "converged": None, "interior_min": None,
                        "nodes": f.support_mask.count, "metric": dist})
    for k in range(1, len(ray)):
        report.checks.append(Check("distance non-increasing", k, path.distances[k], path.distances[k - 1], 0.0))
        report.checks.append(Check("Rayleigh non-increasing", k, ray[k], ray[k - 1], EXACT_RTOL * ray[k - 1]))
    if cfg["schwarz.max_ratio"] is not None:
        report.checks.append(Check("distance reduction", len(ray) - 1, path.distances[-1],
                                   cfg["schwarz.max_ratio"] * path.distances[0], 0.0))
    star = path.target.support_mask
    (sres, secs), = solve_many([_task(cfg, star)])
    _note_convergence(report, "Omega*", sres)
    method = cfg.method()
    report.checks.append(Check("final Rayleigh above lambda(Omega*)", len(ray) - 1, sres.lam, ray[-1],
                               cfg.tolerance(sres.lam, method)))
    report.add_row(solve_row("schwarz", len(ray), name, "Omega*", sres, star), secs)
    d0 = path.distances[0]
    report.summary = {
        "steps": len(path.polarizers),
        "initial_distance": d0,
        "final_distance": path.distances[-1],
        "final_ratio": path.distances[-1] / d0 if d0 else 0.0,
        "lambda_star": sres.lam,
        "final_rayleigh": ray[-1],
        "polarizers": [H.describe() for H in path.polarizers],
    }
    report.plot = PlotSpec(list(range(len(path.distances))), path.distances, "iteration", "L^p distance to u*",
                           "iterated polarization", logy=d0 > 0 and path.distances[-1] > 0)
    return report


# --- validate ----------------------------------------------------------------------


def run_validate(cfg: ExperimentConfig, ops: suites.Ops = suites.Ops()) -> Report:
    rng = np.random.default_rng(cfg.seed)
    report = _new_report(cfg, "validate", SUITE_COLUMNS)
    battery = [
        lambda: suites.set_identities(rng, cfg["validate.set_cases"], ops=ops),
        lambda: suites.polya_szego_chain(rng, cfg["validate.chain_cases"], cfg["validate.general_cases"], ops=ops),
        lambda: suites.gradient_check(rng, cfg["validate.gradient_cases"]),
        lambda: suites.p2_oracle(rng, cfg["validate.oracle_cases"]),
    ]
    results = {}
    for k, run in enumerate(battery):
        start = time.perf_counter()
        res = run()
        report.add_row({"suite": res.name, "cases": res.cases, "failures": res.failures,
                        "worst_margin": res.worst_margin}, time.perf_counter() - start)
        report.checks.append(Check(f"{res.name}: no violations", k, res.failures, 0, 0))
        results[res.name] = res.as_dict()
    report.summary = {"suites": results}
    return report


EXPERIMENT_RUNNERS = {
    "eig": run_eig,
    "polarize-set": run_polarize_set,
    "polarize-fn": run_polarize_fn,
    "schwarz": run_schwarz,
    "annulus-sweep": run_annulus_sweep,
    "fk-polarization": run_fk_polarization,
    "fk-classical": run_fk_classical,
    "validate": run_validate,
}
