"""Taylor shift operators and Nitsche-type assembly on the surrogate domain.

Boundary data lives on the true boundary; the weak form integrates over
the surrogate domain and its boundary, transporting trial values and
gradients from surrogate to true boundary with truncated Taylor
expansions.  The standard operator truncates by total derivative order;
the enhanced operator keeps all mixed partials up to the basis degree in
each direction, which reproduces tensor-product polynomials exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .geometry import DIRICHLET, NEUMANN, SurrogateBoundary, TrueDomain
from .solutions import ManufacturedSolution
from .splines import ders_on_span
from .thb import Element, HierarchicalSpace

_FACT = np.array([math.factorial(k) for k in range(12)], dtype=float)


@dataclass
class ShiftConfig:
    """Shift-operator selection.

    Orders default to each basis function's own degree (Dirichlet) and
    degree-1 (Neumann gradient shift).  The automatic Neumann rule uses
    the enhanced operator for boundary functions of degree <= 2 and the
    classical one above; Dirichlet defaults to enhanced everywhere.
    """

    dirichlet_order: int | None = None
    neumann_order: int | None = None
    enhanced_dirichlet: bool = True
    neumann_rule: str = "automatic"  # automatic | force_standard | force_enhanced

    def __post_init__(self):
        if self.neumann_rule not in ("automatic", "force_standard", "force_enhanced"):
            raise ValueError(f"unknown neumann_rule {self.neumann_rule!r}")

    def neumann_enhanced(self, degree: int) -> bool:
        if self.neumann_rule == "force_enhanced":
            return True
        if self.neumann_rule == "force_standard":
            return False
        return degree <= 2


@dataclass
class NitscheConfig:
    """Nitsche variant: theta=-1, alpha=0 is the penalty-free default."""

    theta: float = -1.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.theta not in (-1.0, 1.0):
            raise ValueError("theta must be -1 or +1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


def directional_term(alpha: tuple[int, int], deriv_value: float, d, enhanced: bool = False) -> float:
    """One multi-index term of a Taylor shift.

    Standard form: (|alpha|! / alpha!) * deriv * d^alpha, to be divided by
    |alpha|! by the caller; enhanced form: deriv * d^alpha / alpha!.
    """
    a, b = alpha
    mono = d[0] ** a * d[1] ** b
    if enhanced:
        return deriv_value * mono / (_FACT[a] * _FACT[b])
    i = a + b
    return _FACT[i] / (_FACT[a] * _FACT[b]) * deriv_value * mono


def shift_value_standard(derivs: np.ndarray, d, m: int) -> float:
    """Taylor shift of order m by total degree: sum_{a+b<=m} D[a,b] d^a d^b / (a! b!)."""
    s = 0.0
    for a in range(m + 1):
        for b in range(m + 1 - a):
            s += derivs[a, b] * d[0] ** a * d[1] ** b / (_FACT[a] * _FACT[b])
    return s


def shift_value_enhanced(derivs: np.ndarray, d, px: int, py: int) -> float:
    """Tensor-truncated Taylor shift: all mixed orders a<=px, b<=py.

    Exact for tensor-product polynomials of per-direction degree (px, py).
    """
    wa = np.array([d[0] ** a / _FACT[a] for a in range(px + 1)])
    wb = np.array([d[1] ** b / _FACT[b] for b in range(py + 1)])
    return float(wa @ derivs[: px + 1, : py + 1] @ wb)


def shift_gradient_standard(derivs: np.ndarray, d, m: int) -> np.ndarray:
    """Componentwise order-m shift of the gradient."""
    gx = 0.0
    gy = 0.0
    for a in range(m + 1):
        for b in range(m + 1 - a):
            w = d[0] ** a * d[1] ** b / (_FACT[a] * _FACT[b])
            gx += derivs[a + 1, b] * w
            gy += derivs[a, b + 1] * w
    return np.array([gx, gy])


def shift_gradient_enhanced(derivs: np.ndarray, d, px: int, py: int) -> np.ndarray:
    """Tensor-truncated shift of the gradient.

    Each component keeps the mixed orders admissible for the
    differentiated function: a <= px-1, b <= py for the x-component and
    a <= px, b <= py-1 for the y-component.
    """
    wa = np.array([d[0] ** a / _FACT[a] for a in range(px + 1)])
    wb = np.array([d[1] ** b / _FACT[b] for b in range(py + 1)])
    gx = wa[:px] @ derivs[1: px + 1, : py + 1] @ wb if px >= 1 else derivs[1, 0] * 0.0
    gy = wa @ derivs[: px + 1, 1: py + 1] @ wb[:py] if py >= 1 else 0.0
    return np.array([float(gx), float(gy)])


def mark_surrogate_functions(hier: HierarchicalSpace, surrogate: SurrogateBoundary,
                             which: str = "both") -> list[int]:
    """Active finest-level functions whose support meets the surrogate boundary.

    ``which`` selects the Dirichlet portion ('D'), the Neumann portion
    ('N') or both.  Feeding the result into ``HierarchicalSpace.refine``
    realizes a-priori refinement along the surrogate boundary.
    """
    want = {"D": {DIRICHLET}, "N": {NEUMANN}, "both": {DIRICHLET, NEUMANN}}[which]
    segs = [s for s in surrogate.segments if s.tag in want]

    def touches(flat, support):
        ax, bx, ay, by = support
        tol = 1e-12
        for s in segs:
            lo = np.minimum(s.p0, s.p1)
            hi = np.maximum(s.p0, s.p1)
            # overlap of the segment with the closed support rectangle,
            # requiring positive length (corner contact does not count)
            ox0, ox1 = max(ax, lo[0]), min(bx, hi[0])
            oy0, oy1 = max(ay, lo[1]), min(by, hi[1])
            if ox0 <= ox1 + tol and oy0 <= oy1 + tol:
                if (ox1 - ox0) + (oy1 - oy0) > tol:
                    return True
        return False

    return hier.mark_functions(touches)


@dataclass
class AssembledSystem:
    """Sparse linear system over the active functions seen by the surrogate domain."""

    matrix: scipy.sparse.csr_matrix
    rhs: np.ndarray
    dof_map: list[tuple[int, int]]  # (level, flat) per matrix row/column
    index: dict[tuple[int, int], int]

    @property
    def num_dofs(self) -> int:
        return len(self.dof_map)


class _TableCache:
    """Per-run cache of 1D basis derivative tables on reference spans."""

    def __init__(self):
        self.store: dict = {}

    def tables(self, kv, span: int, xi01: tuple, kmax: int) -> np.ndarray:
        """T[k, r, q]: k-th derivative of local function r at x0 + h*xi01[q]."""
        p = kv.degree
        i = kv.span_knot_index(span)
        x0, x1 = kv.knots[i], kv.knots[i + 1]
        h = x1 - x0
        window = tuple(np.round((kv.knots[max(i - p, 0): i + p + 2] - x0) / h, 12).tolist())
        key = (p, window, xi01, kmax)
        norm = self.store.get(key)
        if norm is None:
            pts = x0 + h * np.asarray(xi01)
            real = np.stack([ders_on_span(kv, span, x, kmax) for x in pts], axis=-1)
            norm = real * (h ** np.arange(kmax + 1))[:, None, None]
            self.store[key] = norm
        return norm / (h ** np.arange(kmax + 1))[:, None, None]


def _gauss01(n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1.0) / 2.0, w / 2.0


class Assembler:
    """Builds the SBM-Nitsche system for the Poisson problem.

    The volume term integrates over the surrogate domain; Dirichlet and
    Neumann surrogate terms are applied segment by segment, with the
    trial function (and its gradient) shifted to the true boundary.
    Body-fitted edges run through the same path with zero shift.
    """

    def __init__(self, hier: HierarchicalSpace, surrogate: SurrogateBoundary,
                 domain: TrueDomain, solution: ManufacturedSolution,
                 shift: ShiftConfig | None = None, nitsche: NitscheConfig | None = None):
        self.hier = hier
        self.surrogate = surrogate
        self.domain = domain
        self.solution = solution
        self.shift = shift or ShiftConfig()
        self.nitsche = nitsche or NitscheConfig()
        self.cache = _TableCache()
        dofs: set[tuple[int, int]] = set()
        for e in surrogate.inside_elements:
            funcs, _ = hier.element_contributions(e)
            dofs.update(funcs)
        self.dof_map = sorted(dofs)
        self.index = {f: i for i, f in enumerate(self.dof_map)}

    # -- volume ------------------------------------------------------------

    def _element_quadrature(self, e: Element, kmax_x: int, kmax_y: int):
        n1 = self.hier.quadrature_degree(e) + 1
        xi, w = _gauss01(n1)
        lvl = self.hier.levels[e.level]
        tx = self.cache.tables(lvl.kv_x, e.ex, tuple(xi), kmax_x)
        ty = self.cache.tables(lvl.kv_y, e.ey, tuple(xi), kmax_y)
        hx, hy = e.widths
        xs = e.x0 + hx * xi
        ys = e.y0 + hy * xi
        return xs, ys, w * hx, w * hy, tx, ty

    def assemble(self) -> AssembledSystem:
        n = len(self.dof_map)
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        b = np.zeros(n)
        for e in self.surrogate.inside_elements:
            funcs, C = self.hier.element_contributions(e)
            if not funcs:
                raise RuntimeError("surrogate element carries no active function")
            gidx = np.array([self.index[f] for f in funcs])
            xs, ys, wx, wy, tx, ty = self._element_quadrature(e, 1, 1)
            vx, dx = tx[0], tx[1]
            vy, dy = ty[0], ty[1]
            kxd = (dx * wx) @ dx.T
            mx = (vx * wx) @ vx.T
            kyd = (dy * wy) @ dy.T
            my = (vy * wy) @ vy.T
            a_loc = np.kron(kxd, my) + np.kron(mx, kyd)
            a_e = C @ a_loc @ C.T
            rows.append(np.repeat(gidx, gidx.size))
            cols.append(np.tile(gidx, gidx.size))
            vals.append(a_e.reshape(-1))
            fgrid = np.broadcast_to(
                np.asarray(self.solution.f(xs[:, None], ys[None, :]), dtype=float),
                (xs.size, ys.size))
            b_loc = (vx * wx) @ fgrid @ (vy * wy).T
            b[gidx] += C @ b_loc.reshape(-1)

        tangent_warnings = 0
        for seg in self.surrogate.segments + self.surrogate.fitted_segments:
            tangent_warnings += self._segment_terms(seg, rows, cols, vals, b)
        if tangent_warnings:
            warnings.warn(f"{tangent_warnings} boundary quadrature points have "
                          "surrogate/true normal alignment below 0.1 (near-tangent)")
        mat = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
        return AssembledSystem(mat, b, self.dof_map, self.index)

    # -- boundary ------------------------------------------------------------

    def _segment_terms(self, seg, rows, cols, vals, b) -> int:
        hier = self.hier
        e = seg.owner
        lvl = hier.levels[e.level]
        px, py = lvl.degrees
        funcs, C = hier.element_contributions(e)
        if not funcs:
            raise RuntimeError("boundary segment with no active functions")
        gidx = np.array([self.index[f] for f in funcs])
        nf = gidx.size
        degs = [hier.levels[l].degrees for l, _ in funcs]
        hx, hy = e.widths

        vertical = abs(seg.p0[0] - seg.p1[0]) < 1e-14
        if vertical:
            xi_x = (0.0,) if abs(seg.p0[0] - e.x0) < 1e-12 else (1.0,)
            tx = self.cache.tables(lvl.kv_x, e.ex, xi_x, px)[:, :, 0]
            h_perp = hx
        else:
            xi_y = (0.0,) if abs(seg.p0[1] - e.y0) < 1e-12 else (1.0,)
            ty = self.cache.tables(lvl.kv_y, e.ey, xi_y, py)[:, :, 0]
            h_perp = hy

        theta, alpha = self.nitsche.theta, self.nitsche.alpha
        a_seg = np.zeros((nf, nf))
        b_seg = np.zeros(nf)
        n_tilde = seg.normal
        warn = 0
        for q in range(len(seg.qpts)):
            xq, yq = seg.qpts[q]
            w = seg.qweights[q]
            if vertical:
                xi_yq = ((yq - e.y0) / hy,)
                ty = self.cache.tables(lvl.kv_y, e.ey, xi_yq, py)[:, :, 0]
            else:
                xi_xq = ((xq - e.x0) / hx,)
                tx = self.cache.tables(lvl.kv_x, e.ex, xi_xq, px)[:, :, 0]
            # full mixed-derivative tables, one per active function
            tabs = np.einsum("ar,frs,bs->fab", tx, C.reshape(nf, px + 1, py + 1), ty)
            vals_f = tabs[:, 0, 0]
            grads = np.stack([tabs[:, 1, 0], tabs[:, 0, 1]], axis=1)
            gn = grads @ n_tilde

            d = seg.qdist[q]
            x_true = seg.qproj[q]
            n_true = seg.qnormal[q]
            if seg.tag == DIRICHLET:
                shifted = np.empty(nf)
                for j in range(nf):
                    pxf, pyf = degs[j]
                    if self.shift.enhanced_dirichlet:
                        shifted[j] = shift_value_enhanced(tabs[j], d, pxf, pyf)
                    else:
                        m = min(pxf, pyf) if self.shift.dirichlet_order is None \
                            else min(self.shift.dirichlet_order, min(pxf, pyf))
                        shifted[j] = shift_value_standard(tabs[j], d, m)
                u_d = float(self.solution.u(x_true[0], x_true[1]))
                a_seg += w * (-np.outer(vals_f, gn)
                              - theta * np.outer(gn, shifted)
                              + (alpha / h_perp) * np.outer(vals_f, shifted))
                b_seg += w * (-theta * u_d * gn + (alpha / h_perp) * u_d * vals_f)
            else:  # Neumann
                nfac = float(n_tilde @ n_true)
                if nfac < 0.1:
                    warn += 1
                sgrad_n = np.empty(nf)
                for j in range(nf):
                    pxf, pyf = degs[j]
                    if self.shift.neumann_enhanced(max(pxf, pyf)):
                        g = shift_gradient_enhanced(tabs[j], d, pxf, pyf)
                    else:
                        m = min(pxf, pyf) - 1 if self.shift.neumann_order is None \
                            else min(self.shift.neumann_order, min(pxf, pyf) - 1)
                        g = shift_gradient_standard(tabs[j], d, max(m, 0))
                    sgrad_n[j] = g @ n_true
                t_n = float(self.solution.flux(x_true[0], x_true[1], n_true))
                a_seg += w * (-np.outer(vals_f, gn) + nfac * np.outer(vals_f, sgrad_n))
                b_seg += w * t_n * nfac * vals_f
        rows.append(np.repeat(gidx, nf))
        cols.append(np.tile(gidx, nf))
        vals.append(a_seg.reshape(-1))
        b[gidx] += b_seg
        return warn


def assemble(hier: HierarchicalSpace, surrogate: SurrogateBoundary, domain: TrueDomain,
             solution: ManufacturedSolution, shift: ShiftConfig | None = None,
             nitsche: NitscheConfig | None = None) -> AssembledSystem:
    return Assembler(hier, surrogate, domain, solution, shift, nitsche).assemble()
