"""Linear solve, error norms and the convergence-study driver.

Studies sweep a mesh schedule (span halving or single-span steps) over
degrees and refinement strategies; every datapoint builds the hierarchy,
classifies elements, constructs the surrogate boundary, optionally
refines one band of functions along it, assembles, solves and reports
relative L2/H1 errors over the surrogate domain.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg

from .geometry import (
    BoxOuter,
    CircleBoundary,
    PolylineBoundary,
    SurrogateBoundary,
    TrueDomain,
    build_surrogate,
    classify_elements,
    load_polyline,
)
from .sbm import (
    Assembler,
    AssembledSystem,
    NitscheConfig,
    ShiftConfig,
    _gauss01,
    _TableCache,
    mark_surrogate_functions,
)
from .solutions import ManufacturedSolution, get_solution
from .thb import HierarchicalSpace


class SolverError(RuntimeError):
    pass


def solve(system: AssembledSystem) -> np.ndarray:
    """Direct sparse solve with a relative-residual guarantee of 1e-10."""
    a, b = system.matrix, system.rhs
    if a.shape[0] != a.shape[1] or a.shape[0] != b.size:
        raise SolverError("system dimensions are inconsistent")
    import warnings
    with np.errstate(all="ignore"), warnings.catch_warnings():
        # singularity and format conversion are handled explicitly below
        warnings.simplefilter("ignore", scipy.sparse.linalg.MatrixRankWarning)
        warnings.simplefilter("ignore", scipy.sparse.SparseEfficiencyWarning)
        u = scipy.sparse.linalg.spsolve(a.tocsc(), b)
    bnorm = np.linalg.norm(b)
    resid = np.linalg.norm(a @ u - b)
    if not np.all(np.isfinite(u)) or resid > 1e-10 * max(bnorm, 1e-30):
        diag = np.abs(a.diagonal())
        raise SolverError(
            f"linear solve failed: residual {resid:.3e} vs rhs norm {bnorm:.3e}; "
            f"diagonal range [{diag.min():.3e}, {diag.max():.3e}] "
            "(disconnected surrogate domain or missing boundary data?)")
    return u


def compute_errors(hier: HierarchicalSpace, surrogate: SurrogateBoundary,
                   system: AssembledSystem, coeffs: np.ndarray,
                   solution: ManufacturedSolution) -> tuple[float, float]:
    """Relative L2 and H1 errors integrated over the surrogate domain.

    Quadrature per element uses (q+1)^2 Gauss points with q the highest
    active degree on the element; the denominators use the same rule.
    """
    cache = _TableCache()
    num_l2 = den_l2 = num_g = den_g = 0.0
    for e in surrogate.inside_elements:
        funcs, C = hier.element_contributions(e)
        u_e = coeffs[[system.index[f] for f in funcs]]
        c_loc = C.T @ u_e
        n1 = hier.quadrature_degree(e) + 1
        xi, w = _gauss01(n1)
        lvl = hier.levels[e.level]
        tx = cache.tables(lvl.kv_x, e.ex, tuple(xi), 1)
        ty = cache.tables(lvl.kv_y, e.ey, tuple(xi), 1)
        hx, hy = e.widths
        xs, ys = e.x0 + hx * xi, e.y0 + hy * xi
        wx, wy = w * hx, w * hy
        px, py = lvl.degrees
        c = c_loc.reshape(px + 1, py + 1)
        vx, dx = tx[0], tx[1]
        vy, dy = ty[0], ty[1]
        uh = vx.T @ c @ vy
        uhx = dx.T @ c @ vy
        uhy = vx.T @ c @ dy
        shape = (xs.size, ys.size)
        uex = np.broadcast_to(np.asarray(solution.u(xs[:, None], ys[None, :]),
                                         dtype=float), shape)
        gx, gy = solution.grad(xs[:, None], ys[None, :])
        gx = np.broadcast_to(np.asarray(gx, dtype=float), shape)
        gy = np.broadcast_to(np.asarray(gy, dtype=float), shape)
        w2 = wx[:, None] * wy[None, :]
        num_l2 += float(np.sum(w2 * (uh - uex) ** 2))
        den_l2 += float(np.sum(w2 * uex ** 2))
        num_g += float(np.sum(w2 * ((uhx - gx) ** 2 + (uhy - gy) ** 2)))
        den_g += float(np.sum(w2 * (gx ** 2 + gy ** 2)))
    err_l2 = np.sqrt(num_l2 / den_l2)
    err_h1 = np.sqrt((num_l2 + num_g) / (den_l2 + den_g))
    return float(err_l2), float(err_h1)


@dataclass
class StudyRecord:
    """One convergence datapoint."""

    run_id: str
    geometry: str
    bc_case: str
    strategy: str
    degree: int
    n_spans: int
    h_char: float
    dofs: int
    err_l2_rel: float
    err_h1_rel: float
    wall_time_s: float


CSV_HEADER = ("run_id,geometry,bc_case,strategy,degree,n_spans,"
              "h_char,dofs,err_l2_rel,err_h1_rel,wall_time_s")


def record_to_csv_line(r: StudyRecord) -> str:
    return (f"{r.run_id},{r.geometry},{r.bc_case},{r.strategy},{r.degree},{r.n_spans},"
            f"{r.h_char:.17e},{r.dofs},{r.err_l2_rel:.17e},{r.err_h1_rel:.17e},"
            f"{r.wall_time_s:.17e}")


def write_csv(path, records: list[StudyRecord]) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(record_to_csv_line(r) + "\n")


def schedule_spans(mode: str, start: int, stop: int) -> list[int]:
    """Mesh schedule: 'halve' doubles the span count, 'step' adds one span."""
    if start < 1 or stop < start:
        raise ValueError("invalid span range")
    if mode == "halve":
        out = []
        n = start
        while n <= stop:
            out.append(n)
            n *= 2
        return out
    if mode == "step":
        return list(range(start, stop + 1))
    raise ValueError(f"unknown schedule mode {mode!r}")


def make_domain(cfg) -> TrueDomain:
    g = cfg.geometry
    if g == "square":
        return TrueDomain(BoxOuter(cfg.outer_bc))
    if g == "circle_hole":
        return TrueDomain(BoxOuter(cfg.outer_bc),
                          [CircleBoundary(cfg.center, cfg.radius, cfg.hole_bc)])
    if g == "annulus":
        return TrueDomain(CircleBoundary(cfg.center, cfg.r_outer, cfg.outer_bc, role="outer"),
                          [CircleBoundary(cfg.center, cfg.r_inner, cfg.hole_bc)])
    if g == "polyline_hole":
        return TrueDomain(BoxOuter(cfg.outer_bc),
                          [PolylineBoundary(load_polyline(cfg.polyline_file), cfg.hole_bc)])
    raise ValueError(f"unknown geometry {g!r}")


def bc_case_label(cfg) -> str:
    if cfg.geometry == "square":
        return f"outer-{cfg.outer_bc[0].upper()}"
    return f"outer-{cfg.outer_bc[0].upper()}-hole-{cfg.hole_bc[0].upper()}"


def run_single(cfg, degree: int, strategy: str, n_spans: int) -> StudyRecord:
    """One datapoint: build, classify, refine along the boundary, solve."""
    t0 = time.perf_counter()
    domain = make_domain(cfg)
    hier = HierarchicalSpace.uniform(degree, n_spans)
    classes = classify_elements(hier, domain)
    surrogate = build_surrogate(hier, classes, domain)
    if strategy != "none" and cfg.refine_target != "none" and domain.immersed_boundaries:
        for _ in range(cfg.refine_levels):
            marked = mark_surrogate_functions(hier, surrogate, cfg.refine_target)
            hier.refine(marked, strategy)
            classes = classify_elements(hier, domain)
            surrogate = build_surrogate(hier, classes, domain)
    shift = ShiftConfig(dirichlet_order=cfg.dirichlet_order,
                        neumann_order=cfg.neumann_order,
                        enhanced_dirichlet=cfg.enhanced_dirichlet,
                        neumann_rule=cfg.neumann_rule)
    nitsche = NitscheConfig(theta=cfg.theta, alpha=cfg.alpha)
    solution = get_solution(cfg.solution)
    system = Assembler(hier, surrogate, domain, solution, shift, nitsche).assemble()
    u = solve(system)
    err_l2, err_h1 = compute_errors(hier, surrogate, system, u, solution)
    h_char = max(max(e.widths) for e in surrogate.inside_elements)
    run_id = f"{cfg.geometry}-{bc_case_label(cfg)}-{strategy}-p{degree}-n{n_spans}"
    return StudyRecord(run_id, cfg.geometry, bc_case_label(cfg), strategy, degree,
                       n_spans, h_char, system.num_dofs, err_l2, err_h1,
                       time.perf_counter() - t0)


def _run_point(args):
    cfg, degree, strategy, n = args
    try:
        return run_single(cfg, degree, strategy, n)
    except Exception as exc:  # record the failure, let the study continue
        return (f"{cfg.geometry}-{strategy}-p{degree}-n{n}", repr(exc))


def run_study(cfg) -> tuple[list[StudyRecord], list[tuple[str, str]]]:
    """Full schedule over degrees x strategies; returns (records, failures).

    Records come back in schedule order regardless of worker count, so
    CSV output is deterministic for a fixed configuration.
    """
    spans = schedule_spans(cfg.schedule_mode, cfg.span_start, cfg.span_end)
    points = [(cfg, d, s, n) for d in cfg.degrees for s in cfg.strategies for n in spans]
    threads = max(1, int(cfg.threads))
    if threads == 1:
        results = [_run_point(pt) for pt in points]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_point, points, chunksize=1))
    records = [r for r in results if isinstance(r, StudyRecord)]
    failures = [r for r in results if not isinstance(r, StudyRecord)]
    if cfg.out_csv:
        write_csv(cfg.out_csv, records)
    return records, failures


def fit_slope(hs, errs, last: int = 3) -> float:
    """Least-squares slope of log(err) vs log(h) over the last datapoints."""
    hs = np.asarray(hs, dtype=float)[-last:]
    errs = np.asarray(errs, dtype=float)[-last:]
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
