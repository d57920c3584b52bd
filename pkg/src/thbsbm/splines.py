"""Univariate and tensor-product B-spline bases and two-scale refinement maps.

Evaluation follows the Cox-de Boor recursion; derivatives use the standard
triangular-table algorithm (The NURBS Book, A2.3).  Refinement coefficients
(knot insertion and degree elevation alike) are obtained by solving a small
collocation system per coarse function and memoized under a canonical,
translation/scale-invariant key.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

KNOT_TOL = 1e-12  # absolute tolerance for multiplicity counting


class KnotVector:
    """Open knot vector together with a spline degree.

    The basis is the standard normalized B-spline basis: non-negative,
    locally supported on ``[knots[i], knots[i+p+1]]`` and a partition of
    unity.  Spans are half-open except the last one, which is closed.
    """

    def __init__(self, knots, degree: int):
        knots = np.asarray(knots, dtype=float)
        if degree < 0:
            raise ValueError("degree must be non-negative")
        if knots.ndim != 1:
            raise ValueError("knots must be a 1D sequence")
        if knots.size < 2 * (degree + 1):
            raise ValueError("need at least 2*(degree+1) knots")
        if np.any(np.diff(knots) < -KNOT_TOL):
            raise ValueError("knots must be non-decreasing")
        p = degree
        if not (np.all(np.abs(knots[: p + 1] - knots[0]) <= KNOT_TOL)
                and (knots.size == p + 1 or knots[p + 1] > knots[p] + KNOT_TOL)):
            raise ValueError("first knot must be repeated exactly degree+1 times")
        if not (np.all(np.abs(knots[-(p + 1):] - knots[-1]) <= KNOT_TOL)
                and knots[-(p + 2)] < knots[-1] - KNOT_TOL):
            raise ValueError("last knot must be repeated exactly degree+1 times")
        self.knots = knots
        self.degree = degree
        self.breakpoints, mult = unique_knots(knots)
        if np.any(mult > p + 1):
            raise ValueError("interior knot multiplicity exceeds degree+1")
        if self.breakpoints.size < 2:
            raise ValueError("knot vector has no nonzero span")
        # knot-array index of the span starting at each breakpoint
        self._span_of_break = np.searchsorted(knots, self.breakpoints + KNOT_TOL) - 1
        self._span_of_break[-1] = 0  # unused sentinel; last breakpoint opens no span

    @property
    def num_funcs(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def num_spans(self) -> int:
        return self.breakpoints.size - 1

    @property
    def start(self) -> float:
        return float(self.knots[0])

    @property
    def end(self) -> float:
        return float(self.knots[-1])

    def span_knot_index(self, span: int) -> int:
        """Knot-array index i of nonempty span number ``span``: [knots[i], knots[i+1])."""
        return int(self._span_of_break[span])

    def span_bounds(self, span: int) -> tuple[float, float]:
        return float(self.breakpoints[span]), float(self.breakpoints[span + 1])

    def find_span(self, x: float) -> int:
        """Nonempty-span number containing x (last span is closed on the right)."""
        if x < self.start - KNOT_TOL or x > self.end + KNOT_TOL:
            raise ValueError(f"parameter {x} outside knot interval [{self.start}, {self.end}]")
        s = int(np.searchsorted(self.breakpoints, x, side="right")) - 1
        return min(max(s, 0), self.num_spans - 1)

    def support(self, i: int) -> tuple[float, float]:
        if not 0 <= i < self.num_funcs:
            raise ValueError(f"function index {i} out of range [0, {self.num_funcs})")
        return float(self.knots[i]), float(self.knots[i + self.degree + 1])

    def support_span_range(self, i: int) -> tuple[int, int]:
        """Half-open range of nonempty-span numbers covered by function i."""
        a, b = self.support(i)
        s0 = int(np.searchsorted(self.breakpoints, a + KNOT_TOL)) - 1
        s1 = int(np.searchsorted(self.breakpoints, b - KNOT_TOL))
        return max(s0, 0), min(s1, self.num_spans)

    def local_knots(self, i: int) -> np.ndarray:
        return self.knots[i: i + self.degree + 2].copy()

    def __eq__(self, other) -> bool:
        return (isinstance(other, KnotVector) and self.degree == other.degree
                and self.knots.size == other.knots.size
                and bool(np.all(np.abs(self.knots - other.knots) <= KNOT_TOL)))

    def __repr__(self) -> str:
        return f"KnotVector(p={self.degree}, n={self.num_funcs}, [{self.start}, {self.end}])"


def unique_knots(knots) -> tuple[np.ndarray, np.ndarray]:
    """Distinct knot values and multiplicities, merging within KNOT_TOL."""
    knots = np.asarray(knots, dtype=float)
    values = [knots[0]]
    counts = [1]
    for t in knots[1:]:
        if t - values[-1] <= KNOT_TOL:
            counts[-1] += 1
        else:
            values.append(t)
            counts.append(1)
    return np.array(values), np.array(counts, dtype=int)


def uniform_open_knots(degree: int, num_spans: int, a: float = 0.0, b: float = 1.0) -> KnotVector:
    """Open knot vector with ``num_spans`` equal spans on [a, b]."""
    interior = a + (b - a) * np.arange(1, num_spans) / num_spans
    knots = np.concatenate([np.full(degree + 1, a), interior, np.full(degree + 1, b)])
    return KnotVector(knots, degree)


def ders_on_span(kv: KnotVector, span: int, x: float, max_order: int) -> np.ndarray:
    """Derivative table of the degree+1 basis functions alive on a span.

    Returns ``D`` of shape (max_order+1, degree+1) with ``D[k, r]`` the k-th
    derivative of function ``first + r`` at x, where
    ``first = kv.span_knot_index(span) - degree``.  The polynomial piece of
    the given span is used, so x may sit on the span's boundary.
    """
    p = kv.degree
    knots = kv.knots
    i = kv.span_knot_index(span)
    n = min(max_order, p)
    ndu = np.empty((p + 1, p + 1))
    ndu[0, 0] = 1.0
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    for j in range(1, p + 1):
        left[j] = x - knots[i + 1 - j]
        right[j] = knots[i + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    ders = np.zeros((max_order + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[0, 0] = 1.0
        for k in range(1, n + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fact = float(p)
    for k in range(1, n + 1):
        ders[k, :] *= fact
        fact *= p - k
    return ders


def eval_basis(kv: KnotVector, i: int, x: float) -> float:
    """Value of basis function N_{i,p} at x."""
    if not 0 <= i < kv.num_funcs:
        raise ValueError(f"function index {i} out of range [0, {kv.num_funcs})")
    span = kv.find_span(x)
    first = kv.span_knot_index(span) - kv.degree
    r = i - first
    if r < 0 or r > kv.degree:
        return 0.0
    return float(ders_on_span(kv, span, x, 0)[0, r])


def eval_derivatives(kv: KnotVector, i: int, x: float, max_order: int) -> np.ndarray:
    """Derivatives d^m N_{i,p}/dx^m at x for m = 0..max_order."""
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    if not 0 <= i < kv.num_funcs:
        raise ValueError(f"function index {i} out of range [0, {kv.num_funcs})")
    span = kv.find_span(x)
    first = kv.span_knot_index(span) - kv.degree
    r = i - first
    if r < 0 or r > kv.degree:
        return np.zeros(max_order + 1)
    return ders_on_span(kv, span, x, max_order)[:, r].copy()


def h_refine(kv: KnotVector) -> KnotVector:
    """Bisect every nonzero knot span (new knots carry multiplicity 1)."""
    mids = 0.5 * (kv.breakpoints[:-1] + kv.breakpoints[1:])
    return KnotVector(np.sort(np.concatenate([kv.knots, mids])), kv.degree)


def p_refine(kv: KnotVector) -> KnotVector:
    """Elevate the degree by one, preserving interior continuity.

    Every distinct knot's multiplicity grows by one, so the mesh
    (distinct knots) is unchanged.
    """
    values, counts = unique_knots(kv.knots)
    return KnotVector(np.repeat(values, counts + 1), kv.degree + 1)


@dataclass(frozen=True)
class LocalBasisFunction:
    """Single B-spline basis function given by its degree+2 local knots."""

    local_knots: tuple
    degree: int

    def __post_init__(self):
        if len(self.local_knots) != self.degree + 2:
            raise ValueError("a degree-p function needs exactly p+2 local knots")

    @property
    def support(self) -> tuple[float, float]:
        return self.local_knots[0], self.local_knots[-1]

    def __call__(self, x: float) -> float:
        return _cox_de_boor(self.local_knots, 0, self.degree, x)

    def greville(self) -> float:
        return float(np.mean(self.local_knots[1:-1])) if self.degree > 0 \
            else 0.5 * (self.local_knots[0] + self.local_knots[1])


def _cox_de_boor(t, j, q, x):
    # half-open convention; evaluation points used here are strictly interior
    if q == 0:
        return 1.0 if t[j] <= x < t[j + 1] else 0.0
    val = 0.0
    den_l = t[j + q] - t[j]
    if den_l > KNOT_TOL:
        val += (x - t[j]) / den_l * _cox_de_boor(t, j, q - 1, x)
    den_r = t[j + q + 1] - t[j + 1]
    if den_r > KNOT_TOL:
        val += (t[j + q + 1] - x) / den_r * _cox_de_boor(t, j + 1, q - 1, x)
    return val


@dataclass(frozen=True)
class CanonicalKey:
    """Translation/scale-invariant fingerprint of a local basis function.

    Functions with the same key (and the same refinement rule applied to
    them) share their two-scale coefficient list, which makes the
    collocation solve memoizable on uniform grids.
    """

    degree: int
    normalized_knots: tuple

    @classmethod
    def of(cls, local_knots, degree: int, origin: float | None = None,
           scale: float | None = None) -> "CanonicalKey":
        t = np.asarray(local_knots, dtype=float)
        if origin is None:
            origin = t[0]
        if scale is None:
            d = np.diff(t)
            pos = d[d > KNOT_TOL]
            scale = float(pos.min()) if pos.size else 1.0
        normalized = np.round((t - origin) / scale, 12)
        return cls(degree, tuple(normalized.tolist()))


_COEFF_CACHE: dict = {}


def two_scale_coeffs(parent: LocalBasisFunction, children: list[LocalBasisFunction]) -> np.ndarray:
    """Coefficients expressing a coarse function as a sum of fine ones.

    Solves ``parent(x_s) = sum_j lam_j * child_j(x_s)`` at as many interior
    sample points as there are children.  Requires the children to span the
    parent on its support (true whenever they enumerate all fine-level
    functions with contained support).
    """
    a, b = parent.support
    for ch in children:
        if ch.support[0] < a - KNOT_TOL or ch.support[1] > b + KNOT_TOL:
            raise ValueError("child support not contained in parent support")
    t = np.asarray(parent.local_knots)
    d = np.diff(t)
    pos = d[d > KNOT_TOL]
    scale = float(pos.min())
    pkey = CanonicalKey.of(parent.local_knots, parent.degree)
    ckeys = tuple(CanonicalKey.of(ch.local_knots, ch.degree, origin=t[0], scale=scale)
                  for ch in children)
    key = (pkey, ckeys)
    hit = _COEFF_CACHE.get(key)
    if hit is not None:
        return hit.copy()

    n = len(children)
    # Greville abscissae of the children: interior, roughly uniform, and
    # diagonally dominant by Schoenberg-Whitney, hence well conditioned.
    eps = 1e-9 * (b - a)
    samples = np.array([min(max(ch.greville(), a + eps), b - eps) for ch in children])
    lam = _solve_collocation(parent, children, samples)
    if lam is None:
        samples = a + (b - a) * (np.arange(n) + 1.0) / (n + 1.0)
        lam = _solve_collocation(parent, children, samples)
    if lam is None:
        raise RuntimeError("two-scale collocation system is singular; "
                           "child set does not span the parent")
    _COEFF_CACHE[key] = lam
    return lam.copy()


def _solve_collocation(parent, children, samples):
    m = np.array([[ch(x) for ch in children] for x in samples])
    rhs = np.array([parent(x) for x in samples])
    try:
        lam = np.linalg.solve(m, rhs)
        lam += np.linalg.solve(m, rhs - m @ lam)  # one refinement step
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(lam)):
        return None
    # reject bad solves so the fallback sampling can kick in
    resid = np.abs(m @ lam - rhs).max()
    if resid > 1e-11:
        return None
    return lam


@dataclass
class TwoScaleMap:
    """Sparse map Lambda with ``N_coarse = Lambda @ N_fine`` (row per parent)."""

    matrix: scipy.sparse.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def children_range(coarse: KnotVector, fine: KnotVector, i: int) -> tuple[int, int]:
    """Half-open fine-function index range with support inside parent i's support."""
    a, b = coarse.support(i)
    pf = fine.degree
    j0 = int(np.searchsorted(fine.knots, a - KNOT_TOL, side="left"))
    while j0 < fine.num_funcs and fine.knots[j0] < a - KNOT_TOL:
        j0 += 1
    j1 = j0
    while j1 < fine.num_funcs and fine.knots[j1 + pf + 1] <= b + KNOT_TOL:
        j1 += 1
    return j0, j1


def two_scale_matrix(coarse: KnotVector, fine: KnotVector) -> TwoScaleMap:
    """Assemble the univariate two-scale map between nested knot vectors."""
    rows, cols, vals = [], [], []
    for i in range(coarse.num_funcs):
        parent = LocalBasisFunction(tuple(coarse.local_knots(i)), coarse.degree)
        j0, j1 = children_range(coarse, fine, i)
        if j1 <= j0:
            raise RuntimeError(f"coarse function {i} has no children; spaces not nested")
        children = [LocalBasisFunction(tuple(fine.local_knots(j)), fine.degree)
                    for j in range(j0, j1)]
        lam = two_scale_coeffs(parent, children)
        for k, j in enumerate(range(j0, j1)):
            rows.append(i)
            cols.append(j)
            vals.append(lam[k])
    mat = scipy.sparse.csr_matrix((vals, (rows, cols)),
                                  shape=(coarse.num_funcs, fine.num_funcs))
    return TwoScaleMap(mat)


def tensor_two_scale(lam_x: TwoScaleMap, lam_y: TwoScaleMap) -> TwoScaleMap:
    """Kronecker product of directional maps; flat index is ix * ny + iy."""
    return TwoScaleMap(scipy.sparse.kron(lam_x.matrix, lam_y.matrix, format="csr"))
