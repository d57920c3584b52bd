"""Truncated hierarchical B-spline spaces with local h-, p- and k-refinement.

A hierarchy is a nested sequence of tensor-product spline levels together
with refinement domains, active-function sets and truncation expansions.
Functions are marked (not elements); the refinement domain of the next
level is the union of the marked supports.  Deactivated functions are
replaced by all their children, and every surviving function is truncated
by zeroing the expansion coefficients of children living inside the new
refinement domain, which restores the partition of unity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .splines import (
    KnotVector,
    children_range,
    ders_on_span,
    h_refine,
    p_refine,
    tensor_two_scale,
    two_scale_matrix,
    uniform_open_knots,
)

STRATEGIES = ("h", "p", "k")


@dataclass(frozen=True)
class Level:
    """One tensor-product spline space of the hierarchy."""

    index: int
    kv_x: KnotVector
    kv_y: KnotVector
    strategy_from_parent: str  # 'root' | 'h' | 'p' | 'k'

    @property
    def degrees(self) -> tuple[int, int]:
        return self.kv_x.degree, self.kv_y.degree

    @property
    def num_funcs(self) -> tuple[int, int]:
        return self.kv_x.num_funcs, self.kv_y.num_funcs

    @property
    def num_spans(self) -> tuple[int, int]:
        return self.kv_x.num_spans, self.kv_y.num_spans

    def flat(self, ix: int, iy: int) -> int:
        return ix * self.kv_y.num_funcs + iy

    def unflat(self, flat: int) -> tuple[int, int]:
        ny = self.kv_y.num_funcs
        return flat // ny, flat % ny


@dataclass(frozen=True)
class Element:
    """Active knot-span box of one level."""

    level: int
    ex: int
    ey: int
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def widths(self) -> tuple[float, float]:
        return self.x1 - self.x0, self.y1 - self.y0

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


class _RectMask:
    """Boolean span mask with O(1) all-true rectangle queries."""

    def __init__(self, mask: np.ndarray):
        self.mask = mask
        holes = (~mask).astype(np.int64)
        acc = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
        acc[1:, 1:] = holes.cumsum(0).cumsum(1)
        self._acc = acc

    def all_true(self, x0: int, x1: int, y0: int, y1: int) -> bool:
        a = self._acc
        return (a[x1, y1] - a[x0, y1] - a[x1, y0] + a[x0, y0]) == 0

    def all_true_grid(self, xr0, xr1, yr0, yr1) -> np.ndarray:
        """Vectorized query: result[i, j] for ranges (xr0[i],xr1[i])x(yr0[j],yr1[j])."""
        a = self._acc
        nx0, nx1 = np.asarray(xr0)[:, None], np.asarray(xr1)[:, None]
        ny0, ny1 = np.asarray(yr0)[None, :], np.asarray(yr1)[None, :]
        holes = a[nx1, ny1] - a[nx0, ny1] - a[nx1, ny0] + a[nx0, ny0]
        return holes == 0


class HierarchicalSpace:
    """THB-spline space over a rectangular background domain.

    Construction (``refine``) is single-threaded and mutating; once built,
    the space is treated as immutable and may be evaluated concurrently.
    """

    def __init__(self, kv_x: KnotVector, kv_y: KnotVector):
        root = Level(0, kv_x, kv_y, "root")
        self.levels: list[Level] = [root]
        nall = kv_x.num_funcs * kv_y.num_funcs
        self.active: list[set[int]] = [set(range(nall))]
        mx, my = root.num_spans
        # refinement domain of level l, expressed on level-l spans (level 0: everything)
        self.omega_own: list[np.ndarray] = [np.ones((mx, my), dtype=bool)]
        # refinement domain of level l+1, expressed on level-l spans
        self.omega_next: list[np.ndarray | None] = [None]
        self.twoscale: list[scipy.sparse.csr_matrix] = []
        # span index maps to the parent level, per direction
        self._parent_span: list[tuple[np.ndarray, np.ndarray] | None] = [None]
        # reps[(l, flat)][m] = (cols, vals): expansion on level m >= l
        self.reps: dict[tuple[int, int], dict[int, tuple[np.ndarray, np.ndarray]]] = {}
        for flat in self.active[0]:
            self.reps[(0, flat)] = {0: (np.array([flat]), np.array([1.0]))}
        self._elements: list[Element] | None = None
        self._contrib_cache: dict[tuple[int, int, int], tuple] = {}

    # -- constructors ------------------------------------------------------

    @classmethod
    def uniform(cls, degree: int, num_spans: int,
                domain=((0.0, 1.0), (0.0, 1.0))) -> "HierarchicalSpace":
        (ax, bx), (ay, by) = domain
        return cls(uniform_open_knots(degree, num_spans, ax, bx),
                   uniform_open_knots(degree, num_spans, ay, by))

    # -- basic queries -----------------------------------------------------

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> int:
        return len(self.levels) - 1

    @property
    def domain(self) -> tuple[tuple[float, float], tuple[float, float]]:
        kx, ky = self.levels[0].kv_x, self.levels[0].kv_y
        return (kx.start, kx.end), (ky.start, ky.end)

    def num_active_functions(self) -> int:
        return sum(len(a) for a in self.active)

    def active_sorted(self, level: int) -> list[int]:
        return sorted(self.active[level])

    def all_active(self) -> list[tuple[int, int]]:
        """All active functions as (level, flat), deterministically ordered."""
        out = []
        for l in range(self.num_levels):
            out.extend((l, f) for f in sorted(self.active[l]))
        return out

    def support_span_range(self, level: int, flat: int):
        lvl = self.levels[level]
        ix, iy = lvl.unflat(flat)
        sx = lvl.kv_x.support_span_range(ix)
        sy = lvl.kv_y.support_span_range(iy)
        return sx, sy

    def support_box(self, level: int, flat: int):
        lvl = self.levels[level]
        ix, iy = lvl.unflat(flat)
        ax, bx = lvl.kv_x.support(ix)
        ay, by = lvl.kv_y.support(iy)
        return ax, bx, ay, by

    def function_degree(self, level: int) -> int:
        return max(self.levels[level].degrees)

    # -- marking -----------------------------------------------------------

    def mark_functions(self, predicate) -> list[int]:
        """Marked active finest-level functions, per a predicate.

        ``predicate(flat, support_box)`` is evaluated on every active
        function of the finest level; the returned flat indices define the
        refinement domain as the union of their supports.
        """
        lf = self.finest
        marked = []
        for flat in self.active_sorted(lf):
            if predicate(flat, self.support_box(lf, flat)):
                marked.append(flat)
        return marked

    def mark_in_boxes(self, boxes) -> list[int]:
        """Marks active finest-level functions with support inside one of the boxes."""
        def contained(flat, support):
            ax, bx, ay, by = support
            tol = 1e-12
            return any(ax >= x0 - tol and bx <= x1 + tol and ay >= y0 - tol and by <= y1 + tol
                       for (x0, x1, y0, y1) in boxes)
        return self.mark_functions(contained)

    # -- refinement --------------------------------------------------------

    def refine(self, marked, strategy: str) -> "HierarchicalSpace":
        """Refine the finest level on the union of the marked supports.

        Adds one level built with the given strategy ('h': bisect spans,
        'p': elevate degree, 'k': elevate then bisect), deactivates the
        functions whose support lies in the new refinement domain,
        activates all their children and truncates the survivors.
        """
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        marked = sorted(set(marked))
        if not marked:
            return self
        lf = self.finest
        lvl = self.levels[lf]
        for flat in marked:
            if flat not in self.active[lf]:
                raise ValueError(f"marked function {flat} is not active on level {lf}")

        mx, my = lvl.num_spans
        omega = np.zeros((mx, my), dtype=bool)
        for flat in marked:
            (sx0, sx1), (sy0, sy1) = self.support_span_range(lf, flat)
            omega[sx0:sx1, sy0:sy1] = True
        if not np.all(self.omega_own[lf][omega]):
            raise ValueError("refinement domain is not nested in the current domain")

        # new level
        if strategy == "h":
            kx, ky = h_refine(lvl.kv_x), h_refine(lvl.kv_y)
            lam_x = two_scale_matrix(lvl.kv_x, kx)
            lam_y = two_scale_matrix(lvl.kv_y, ky)
        elif strategy == "p":
            kx, ky = p_refine(lvl.kv_x), p_refine(lvl.kv_y)
            lam_x = two_scale_matrix(lvl.kv_x, kx)
            lam_y = two_scale_matrix(lvl.kv_y, ky)
        else:  # k: degree elevation first, then knot insertion
            mid_x, mid_y = p_refine(lvl.kv_x), p_refine(lvl.kv_y)
            kx, ky = h_refine(mid_x), h_refine(mid_y)
            lam_x = _compose(two_scale_matrix(lvl.kv_x, mid_x), two_scale_matrix(mid_x, kx))
            lam_y = _compose(two_scale_matrix(lvl.kv_y, mid_y), two_scale_matrix(mid_y, ky))
        new = Level(lf + 1, kx, ky, strategy)
        if strategy == "p":
            assert np.allclose(kx.breakpoints, lvl.kv_x.breakpoints)
            assert np.allclose(ky.breakpoints, lvl.kv_y.breakpoints)
        if strategy == "h":
            assert new.degrees == lvl.degrees
        lam2d = tensor_two_scale(lam_x, lam_y).matrix

        px_map = _span_parent_map(kx, lvl.kv_x)
        py_map = _span_parent_map(ky, lvl.kv_y)
        omega_fine = omega[np.ix_(px_map, py_map)]

        # deactivation: active finest-level functions with support in omega
        omega_rect = _RectMask(omega)
        deact = []
        for flat in self.active_sorted(lf):
            (sx0, sx1), (sy0, sy1) = self.support_span_range(lf, flat)
            if omega_rect.all_true(sx0, sx1, sy0, sy1):
                deact.append(flat)

        # activation: every child of a deactivated function
        nx_f, ny_f = new.num_funcs
        child_of_deact = np.zeros((nx_f, ny_f), dtype=bool)
        crx = {ix: children_range(lvl.kv_x, kx, ix) for ix in range(lvl.kv_x.num_funcs)}
        cry = {iy: children_range(lvl.kv_y, ky, iy) for iy in range(lvl.kv_y.num_funcs)}
        for flat in deact:
            ix, iy = lvl.unflat(flat)
            (jx0, jx1), (jy0, jy1) = crx[ix], cry[iy]
            child_of_deact[jx0:jx1, jy0:jy1] = True

        # every fine function with support inside omega must have a
        # deactivated parent, otherwise the hierarchy is inconsistent
        fine_rect = _RectMask(omega_fine)
        fx0 = np.array([kx.support_span_range(i)[0] for i in range(nx_f)])
        fx1 = np.array([kx.support_span_range(i)[1] for i in range(nx_f)])
        fy0 = np.array([ky.support_span_range(i)[0] for i in range(ny_f)])
        fy1 = np.array([ky.support_span_range(i)[1] for i in range(ny_f)])
        inside = fine_rect.all_true_grid(fx0, fx1, fy0, fy1)
        if not np.array_equal(child_of_deact, inside):
            raise RuntimeError("refinement domain activates a function without a "
                               "deactivated parent; domain shape unsupported")

        inside_flat = inside.reshape(-1)  # flat = ix * ny + iy ordering

        # commit the new level
        self.levels.append(new)
        self.twoscale.append(lam2d)
        self._parent_span.append((px_map, py_map))
        self.omega_next[lf] = omega
        self.omega_next.append(None)
        self.omega_own.append(omega_fine)

        for flat in deact:
            self.active[lf].discard(flat)
            del self.reps[(lf, flat)]
        activated = [int(f) for f in np.flatnonzero(inside_flat)]
        self.active.append(set(activated))
        n_new = nx_f * ny_f
        for flat in activated:
            self.reps[(lf + 1, flat)] = {lf + 1: (np.array([flat]), np.array([1.0]))}

        # truncation: extend every surviving expansion to the new level and
        # drop the children living inside the refinement domain
        for (l, flat), rep in self.reps.items():
            if l == lf + 1:
                continue
            cols, vals = rep[lf]
            row = scipy.sparse.csr_matrix(
                (vals, (np.zeros_like(cols), cols)),
                shape=(1, lam2d.shape[0])) @ lam2d
            row = row.tocoo()
            keep = ~inside_flat[row.col]
            cols_new = row.col[keep].astype(np.int64)
            vals_new = row.data[keep]
            order = np.argsort(cols_new)
            rep[lf + 1] = (cols_new[order], vals_new[order])

        self._elements = None
        self._contrib_cache.clear()
        return self

    # -- elements ----------------------------------------------------------

    def active_elements(self) -> list[Element]:
        if self._elements is None:
            out = []
            for l, lvl in enumerate(self.levels):
                own = self.omega_own[l]
                nxt = self.omega_next[l]
                act = own if nxt is None else (own & ~nxt)
                bx, by = lvl.kv_x.breakpoints, lvl.kv_y.breakpoints
                for ex, ey in np.argwhere(act):
                    out.append(Element(l, int(ex), int(ey),
                                       bx[ex], bx[ex + 1], by[ey], by[ey + 1]))
            self._elements = out
        return self._elements

    def num_active_elements(self) -> int:
        return len(self.active_elements())

    def element_at(self, x: float, y: float) -> Element:
        """Active element containing a point (right-closed at domain edges)."""
        (ax, bx), (ay, by) = self.domain
        if not (ax - 1e-12 <= x <= bx + 1e-12 and ay - 1e-12 <= y <= by + 1e-12):
            raise ValueError(f"point ({x}, {y}) outside background domain")
        for l in range(self.finest, -1, -1):
            lvl = self.levels[l]
            ex = lvl.kv_x.find_span(x)
            ey = lvl.kv_y.find_span(y)
            if self.omega_own[l][ex, ey]:
                bxv, byv = lvl.kv_x.breakpoints, lvl.kv_y.breakpoints
                return Element(l, ex, ey, bxv[ex], bxv[ex + 1], byv[ey], byv[ey + 1])
        raise RuntimeError("unreachable: level 0 covers the domain")

    def ancestor_span(self, elem: Element, level: int) -> tuple[int, int]:
        """Span indices of the level-`level` element containing `elem`."""
        ex, ey = elem.ex, elem.ey
        for l in range(elem.level, level, -1):
            pm = self._parent_span[l]
            ex, ey = int(pm[0][ex]), int(pm[1][ey])
        return ex, ey

    # -- basis evaluation ---------------------------------------------------

    def element_contributions(self, elem: Element):
        """Active functions alive on an element and their local expansions.

        Returns ``(funcs, coeffs)`` where ``funcs`` is a list of (level, flat)
        pairs and ``coeffs`` is (n_funcs, (px+1)*(py+1)): each row expresses
        one active function on the element in terms of the local tensor
        basis of the element's level (x-major ordering).
        """
        key = (elem.level, elem.ex, elem.ey)
        hit = self._contrib_cache.get(key)
        if hit is not None:
            return hit
        lvl = self.levels[elem.level]
        px, py = lvl.degrees
        ny = lvl.kv_y.num_funcs
        i0 = lvl.kv_x.span_knot_index(elem.ex) - px
        j0 = lvl.kv_y.span_knot_index(elem.ey) - py
        local_flat = np.array([(i0 + r) * ny + (j0 + s)
                               for r in range(px + 1) for s in range(py + 1)])
        funcs: list[tuple[int, int]] = []
        rows: list[np.ndarray] = []
        for l in range(elem.level + 1):
            ll = self.levels[l]
            axs, ays = self.ancestor_span(elem, l)
            a0 = ll.kv_x.span_knot_index(axs) - ll.degrees[0]
            b0 = ll.kv_y.span_knot_index(ays) - ll.degrees[1]
            act = self.active[l]
            for ix in range(a0, a0 + ll.degrees[0] + 1):
                for iy in range(b0, b0 + ll.degrees[1] + 1):
                    flat = ix * ll.kv_y.num_funcs + iy
                    if flat not in act:
                        continue
                    cols, vals = self.reps[(l, flat)][elem.level]
                    pos = np.searchsorted(cols, local_flat)
                    pos = np.clip(pos, 0, cols.size - 1)
                    row = np.where(cols[pos] == local_flat, vals[pos], 0.0) \
                        if cols.size else np.zeros(local_flat.size)
                    if l == elem.level or np.abs(row).max() > 1e-14:
                        funcs.append((l, flat))
                        rows.append(row)
        coeffs = np.vstack(rows) if rows else np.zeros((0, local_flat.size))
        result = (funcs, coeffs)
        self._contrib_cache[key] = result
        return result

    def quadrature_degree(self, elem: Element) -> int:
        """Highest polynomial degree of the active functions on an element."""
        funcs, _ = self.element_contributions(elem)
        return max(self.function_degree(l) for l, _ in funcs)

    def local_tables(self, elem: Element, xs: np.ndarray, ys: np.ndarray, kx: int, ky: int):
        """1D derivative tables of the element's local basis at given points.

        Returns (tx, ty): tx[k, r, q] is the k-th x-derivative of local
        function r at xs[q]; likewise ty.  All points must lie in the
        closed element; the element's polynomial piece is used.
        """
        lvl = self.levels[elem.level]
        tx = np.stack([ders_on_span(lvl.kv_x, elem.ex, x, kx) for x in xs], axis=-1)
        ty = np.stack([ders_on_span(lvl.kv_y, elem.ey, y, ky) for y in ys], axis=-1)
        return tx, ty

    def eval_active(self, x: float, y: float, max_order: int = 0):
        """Values/partials of active functions supported at a point.

        Returns a dict mapping (level, flat) to a table ``t`` of shape
        (max_order+1, max_order+1) with ``t[a, b]`` the mixed partial
        d^{a+b}/dx^a dy^b.  Functions not listed are zero at the point.
        """
        elem = self.element_at(x, y)
        funcs, coeffs = self.element_contributions(elem)
        lvl = self.levels[elem.level]
        px, py = lvl.degrees
        tx, ty = self.local_tables(elem, np.array([x]), np.array([y]), max_order, max_order)
        nx_t, ny_t = tx[:, :, 0], ty[:, :, 0]  # (k+1, p+1) each
        out = {}
        for (lf, flat), row in zip(funcs, coeffs):
            c = row.reshape(px + 1, py + 1)
            out[(lf, flat)] = nx_t @ c @ ny_t.T
        return out

    # -- reporting -----------------------------------------------------------

    def dump(self) -> str:
        """Deterministic plain-text dump of the hierarchy for golden tests."""
        lines = [f"levels: {self.num_levels}"]
        for l, lvl in enumerate(self.levels):
            kx, ky = lvl.kv_x, lvl.kv_y
            lines.append(f"level {l}: strategy={lvl.strategy_from_parent} "
                         f"degrees=({kx.degree},{ky.degree}) "
                         f"spans=({kx.num_spans},{ky.num_spans}) "
                         f"funcs=({kx.num_funcs},{ky.num_funcs})")
            lines.append("  knots_x: " + " ".join(f"{t:.12g}" for t in kx.knots))
            lines.append("  knots_y: " + " ".join(f"{t:.12g}" for t in ky.knots))
        for l in range(self.num_levels):
            idx = self.active_sorted(l)
            lines.append(f"active level {l} ({len(idx)}): " + " ".join(map(str, idx)))
        lines.append(f"elements: {self.num_active_elements()}")
        for l in range(self.num_levels):
            for flat in self.active_sorted(l):
                rep = self.reps[(l, flat)]
                for m in sorted(rep):
                    if m == l:
                        continue
                    cols, vals = rep[m]
                    ent = " ".join(f"{c}:{v:.12g}" for c, v in zip(cols, vals)
                                   if abs(v) > 1e-14)
                    lines.append(f"expand ({l},{flat}) @L{m}: {ent}")
        return "\n".join(lines) + "\n"


def _compose(a, b):
    from .splines import TwoScaleMap
    return TwoScaleMap((a.matrix @ b.matrix).tocsr())


def _span_parent_map(fine: KnotVector, coarse: KnotVector) -> np.ndarray:
    """For each fine span, the coarse span containing it."""
    mids = 0.5 * (fine.breakpoints[:-1] + fine.breakpoints[1:])
    return np.clip(np.searchsorted(coarse.breakpoints, mids) - 1, 0, coarse.num_spans - 1)
