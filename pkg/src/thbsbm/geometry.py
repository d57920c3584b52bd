"""True-domain geometry, element classification and surrogate boundaries.

The physical domain lives inside a rectangular background mesh.  Its outer
boundary is either the background rectangle itself (body-fitted) or an
immersed closed curve; holes are immersed closed curves.  Uncut interior
elements form the surrogate domain; their edges facing cut or exterior
elements form the surrogate boundary, whose quadrature points are mapped
to the true boundary by closest-point projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .thb import Element, HierarchicalSpace

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class CircleBoundary:
    """Closed circular boundary component."""

    def __init__(self, center, radius: float, bc: str, role: str = "hole"):
        if bc not in (DIRICHLET, NEUMANN):
            raise ValueError(f"unknown bc tag {bc!r}")
        if role not in ("hole", "outer"):
            raise ValueError(f"unknown role {role!r}")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.bc = bc
        self.role = role

    def encloses(self, pts: np.ndarray) -> np.ndarray:
        d = pts - self.center
        return d[:, 0] ** 2 + d[:, 1] ** 2 < self.radius ** 2

    def closest(self, pt: np.ndarray):
        """Closest boundary point and the normal pointing away from the disk."""
        v = pt - self.center
        r = np.hypot(v[0], v[1])
        u = np.array([1.0, 0.0]) if r < 1e-14 else v / r
        return self.center + self.radius * u, u

    def distance(self, pt: np.ndarray) -> float:
        return abs(np.hypot(*(pt - self.center)) - self.radius)

    def crosses_box(self, x0, x1, y0, y1, tol: float) -> bool:
        cx, cy = self.center
        dx = max(x0 - cx, 0.0, cx - x1)
        dy = max(y0 - cy, 0.0, cy - y1)
        dmin = np.hypot(dx, dy)
        fx = max(abs(x0 - cx), abs(x1 - cx))
        fy = max(abs(y0 - cy), abs(y1 - cy))
        dmax = np.hypot(fx, fy)
        return dmin <= self.radius + tol and dmax >= self.radius - tol


class PolylineBoundary:
    """Closed polygonal boundary component (last vertex connects to first)."""

    def __init__(self, vertices, bc: str, role: str = "hole"):
        if bc not in (DIRICHLET, NEUMANN):
            raise ValueError(f"unknown bc tag {bc!r}")
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polyline needs at least 3 'x y' vertices")
        if np.hypot(*(v[0] - v[-1])) < 1e-12:
            v = v[:-1]
        self.vertices = v
        self.bc = bc
        self.role = role
        self._a = v
        self._b = np.roll(v, -1, axis=0)
        self._e = self._b - self._a
        self._len2 = np.maximum((self._e ** 2).sum(axis=1), 1e-300)
        area2 = float(np.sum(self._a[:, 0] * self._b[:, 1] - self._b[:, 0] * self._a[:, 1]))
        self._ccw = 1.0 if area2 >= 0 else -1.0
        nrm = np.stack([self._e[:, 1], -self._e[:, 0]], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        # normal pointing away from the enclosed region, any input orientation
        self._normals = self._ccw * nrm

    def encloses(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0][:, None], pts[:, 1][:, None]
        ax, ay = self._a[:, 0][None, :], self._a[:, 1][None, :]
        bx, by = self._b[:, 0][None, :], self._b[:, 1][None, :]
        cond = (ay <= y) != (by <= y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = ax + (y - ay) * (bx - ax) / (by - ay)
        crossings = np.sum(cond & (x < xi), axis=1)
        return (crossings % 2) == 1

    def _foot_all(self, pt: np.ndarray):
        w = pt[None, :] - self._a
        t = np.clip((w * self._e).sum(axis=1) / self._len2, 0.0, 1.0)
        foot = self._a + t[:, None] * self._e
        d2 = ((pt[None, :] - foot) ** 2).sum(axis=1)
        return foot, d2

    def closest(self, pt: np.ndarray):
        """Closest boundary point; equidistant candidates break ties by segment index."""
        foot, d2 = self._foot_all(pt)
        k = int(np.argmin(d2))  # argmin returns the first (smallest index) minimum
        return foot[k], self._normals[k]

    def distance(self, pt: np.ndarray) -> float:
        _, d2 = self._foot_all(pt)
        return float(np.sqrt(d2.min()))

    def crosses_box(self, x0, x1, y0, y1, tol: float) -> bool:
        x0, x1, y0, y1 = x0 - tol, x1 + tol, y0 - tol, y1 + tol
        ax, ay = self._a[:, 0], self._a[:, 1]
        bx, by = self._b[:, 0], self._b[:, 1]
        inside_a = (ax >= x0) & (ax <= x1) & (ay >= y0) & (ay <= y1)
        if np.any(inside_a):
            return True
        # conservative reject, then exact segment/edge crossing tests
        cand = ~((np.maximum(ax, bx) < x0) | (np.minimum(ax, bx) > x1)
                 | (np.maximum(ay, by) < y0) | (np.minimum(ay, by) > y1))
        idx = np.flatnonzero(cand)
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        edges = [(corners[i], corners[(i + 1) % 4]) for i in range(4)]
        for i in idx:
            p, q = self._a[i], self._b[i]
            for (c0, c1) in edges:
                if _segments_intersect(p, q, np.array(c0), np.array(c1)):
                    return True
        return False


def _segments_intersect(p, q, a, b) -> bool:
    def orient(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])
    d1, d2 = orient(a, b, p), orient(a, b, q)
    d3, d4 = orient(p, q, a), orient(p, q, b)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    eps = 1e-14
    for (u, v, w, d) in ((a, b, p, d1), (a, b, q, d2), (p, q, a, d3), (p, q, b, d4)):
        if abs(d) <= eps and min(u[0], v[0]) - eps <= w[0] <= max(u[0], v[0]) + eps \
                and min(u[1], v[1]) - eps <= w[1] <= max(u[1], v[1]) + eps:
            return True
    return False


def load_polyline(path) -> np.ndarray:
    """Reads one 'x y' vertex per line; the loop closes implicitly."""
    pts = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"malformed polyline line: {line!r}")
            pts.append((float(parts[0]), float(parts[1])))
    return np.asarray(pts, dtype=float)


@dataclass
class BoxOuter:
    """Body-fitted outer boundary coinciding with the background rectangle."""

    bc: str = DIRICHLET


class TrueDomain:
    """Physical domain: an outer boundary plus zero or more holes.

    The outer boundary is either body-fitted (``BoxOuter``) or an immersed
    closed curve; holes are always immersed.  ``inside`` follows the
    outer-minus-holes convention.
    """

    def __init__(self, outer, holes=()):
        self.outer = outer
        self.holes = list(holes)
        for h in self.holes:
            if h.role != "hole":
                raise ValueError("hole boundaries must have role='hole'")
        if not isinstance(outer, BoxOuter) and outer.role != "outer":
            raise ValueError("immersed outer boundary must have role='outer'")

    @property
    def immersed_boundaries(self) -> list:
        out = [] if isinstance(self.outer, BoxOuter) else [self.outer]
        return out + self.holes

    @property
    def fitted_bc(self) -> str | None:
        return self.outer.bc if isinstance(self.outer, BoxOuter) else None

    def inside(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if isinstance(self.outer, BoxOuter):
            ok = np.ones(len(pts), dtype=bool)
        else:
            ok = self.outer.encloses(pts)
        for h in self.holes:
            ok &= ~h.encloses(pts)
        return ok

    def closest_point(self, pt):
        """Projection of a surrogate point onto the nearest immersed boundary.

        Returns ``(x, d, n, boundary)`` with ``d = x - pt`` and the outward
        normal of the domain at x.  Ties between boundaries resolve to the
        first one in listing order.
        """
        pt = np.asarray(pt, dtype=float)
        bnds = self.immersed_boundaries
        if not bnds:
            raise ValueError("domain has no immersed boundary to project onto")
        best = None
        for b in bnds:
            x, n_away = b.closest(pt)
            dist = np.hypot(*(x - pt))
            if best is None or dist < best[0] - 1e-14:
                n = n_away if b.role == "outer" else -n_away
                best = (dist, x, n, b)
        _, x, n, b = best
        return x, x - pt, n, b


INSIDE, OUTSIDE, CUT = "inside", "outside", "cut"


@dataclass
class ElementClassification:
    """Per-active-element inside/outside/cut labels."""

    elements: list[Element]
    classes: dict[tuple[int, int, int], str]

    def label(self, elem: Element) -> str:
        return self.classes[(elem.level, elem.ex, elem.ey)]

    def count(self, label: str) -> int:
        return sum(1 for v in self.classes.values() if v == label)


def classify_elements(hier: HierarchicalSpace, domain: TrueDomain) -> ElementClassification:
    """Label every active element against the true domain.

    Cut detection combines corner/edge-sample signs with exact
    circle-ring/box overlap and polyline segment intersection tests;
    tangency within tolerance classifies as cut (conservative).
    """
    elements = hier.active_elements()
    classes = {}
    ts = np.linspace(0.0, 1.0, 7)[1:-1]  # 5 interior samples per edge
    for e in elements:
        pts = [(e.x0, e.y0), (e.x1, e.y0), (e.x1, e.y1), (e.x0, e.y1)]
        for t in ts:
            pts.append((e.x0 + t * (e.x1 - e.x0), e.y0))
            pts.append((e.x0 + t * (e.x1 - e.x0), e.y1))
            pts.append((e.x0, e.y0 + t * (e.y1 - e.y0)))
            pts.append((e.x1, e.y0 + t * (e.y1 - e.y0)))
        flags = domain.inside(np.asarray(pts))
        h_loc = max(e.x1 - e.x0, e.y1 - e.y0)
        tol = 1e-10 * h_loc
        crossed = any(b.crosses_box(e.x0, e.x1, e.y0, e.y1, tol)
                      for b in domain.immersed_boundaries)
        if crossed or (flags.any() and not flags.all()):
            label = CUT
        elif flags.all():
            label = INSIDE
        else:
            label = OUTSIDE
        classes[(e.level, e.ex, e.ey)] = label
    return ElementClassification(elements, classes)


@dataclass
class Segment:
    """One straight piece of the surrogate (or fitted) boundary.

    Quadrature data per point: position on the edge, closest-point
    projection, distance vector, true outward normal and boundary tag.
    """

    owner: Element
    p0: np.ndarray
    p1: np.ndarray
    normal: np.ndarray
    fitted: bool
    qpts: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    qweights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    qproj: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    qdist: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    qnormal: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    tag: str = DIRICHLET

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.p1 - self.p0)))


@dataclass
class SurrogateBoundary:
    """Surrogate domain (uncut interior elements) and its oriented boundary."""

    inside_elements: list[Element]
    segments: list[Segment]        # immersed: projection data populated
    fitted_segments: list[Segment]  # on the body-fitted outer rectangle

    def inside_keys(self) -> set:
        return {(e.level, e.ex, e.ey) for e in self.inside_elements}

    def max_projection_distance(self) -> float:
        ds = [np.hypot(s.qdist[:, 0], s.qdist[:, 1]).max()
              for s in self.segments if len(s.qdist)]
        return max(ds) if ds else 0.0

    def segments_tagged(self, tag: str) -> list[Segment]:
        return [s for s in self.segments if s.tag == tag]


def build_surrogate(hier: HierarchicalSpace, classes: ElementClassification,
                    domain: TrueDomain) -> SurrogateBoundary:
    """Surrogate domain/boundary with per-quadrature-point projection data.

    The surrogate domain is the set of strictly interior (uncut) active
    elements; its boundary consists of the element edges facing cut or
    exterior elements.  Each edge carries ``degree+1`` Gauss points which
    are projected onto the true boundary; edges on the background
    rectangle become body-fitted segments when the outer boundary is
    body-fitted.
    """
    inside = [e for e in classes.elements if classes.label(e) == INSIDE]
    if not inside:
        raise ValueError("surrogate domain is empty: mesh too coarse for the geometry")
    inside_keys = {(e.level, e.ex, e.ey) for e in inside}
    _check_connected(hier, inside, inside_keys)

    (ax, bx), (ay, by) = hier.domain
    segments: list[Segment] = []
    fitted: list[Segment] = []
    for e in inside:
        for side in ("W", "E", "S", "N"):
            for (q0, q1, on_bg) in _side_pieces(hier, inside_keys, e, side, (ax, bx, ay, by)):
                nrm = _SIDE_NORMALS[side]
                seg = Segment(owner=e, p0=q0, p1=q1, normal=nrm, fitted=on_bg)
                if on_bg:
                    if domain.fitted_bc is None:
                        raise ValueError("interior element touches the background edge "
                                         "but the outer boundary is immersed")
                    seg.tag = domain.fitted_bc
                    fitted.append(seg)
                else:
                    segments.append(seg)

    for seg in segments + fitted:
        _attach_quadrature(hier, domain, seg)
    return SurrogateBoundary(inside, segments, fitted)


_SIDE_NORMALS = {
    "W": np.array([-1.0, 0.0]),
    "E": np.array([1.0, 0.0]),
    "S": np.array([0.0, -1.0]),
    "N": np.array([0.0, 1.0]),
}


def _side_pieces(hier, inside_keys, e: Element, side: str, bg):
    """Sub-intervals of one element side facing non-interior material.

    Marches along the side, jumping by whole neighbouring active elements,
    so hanging-node interfaces between levels split correctly.
    """
    ax, bx, ay, by = bg
    horizontal = side in ("S", "N")
    if horizontal:
        fixed = e.y0 if side == "S" else e.y1
        a, b = e.x0, e.x1
        on_bg = abs(fixed - (ay if side == "S" else by)) < 1e-12
    else:
        fixed = e.x0 if side == "W" else e.x1
        a, b = e.y0, e.y1
        on_bg = abs(fixed - (ax if side == "W" else bx)) < 1e-12
    mk = (lambda s: np.array([s, fixed])) if horizontal else (lambda s: np.array([fixed, s]))
    if on_bg:
        yield mk(a), mk(b), True
        return
    sign = 1.0 if side in ("E", "N") else -1.0
    eps = 1e-8 * min(e.x1 - e.x0, e.y1 - e.y0)
    pieces = []
    t = a
    while t < b - eps:
        s = t + eps
        probe = np.array([s, fixed + sign * eps]) if horizontal \
            else np.array([fixed + sign * eps, s])
        nb = hier.element_at(probe[0], probe[1])
        hi = min(b, nb.x1 if horizontal else nb.y1)
        outside_like = (nb.level, nb.ex, nb.ey) not in inside_keys
        pieces.append((t, hi, outside_like))
        t = hi
    # merge adjacent runs with the same status, emit the non-interior ones
    merged = []
    for (lo, hi, st) in pieces:
        if merged and merged[-1][2] == st and abs(merged[-1][1] - lo) < eps:
            merged[-1] = (merged[-1][0], hi, st)
        else:
            merged.append((lo, hi, st))
    for (lo, hi, st) in merged:
        if st:
            yield mk(lo), mk(hi), False


def _attach_quadrature(hier, domain, seg: Segment):
    n_q = hier.quadrature_degree(seg.owner) + 1
    t, w = np.polynomial.legendre.leggauss(n_q)
    mid = 0.5 * (seg.p0 + seg.p1)
    half = 0.5 * (seg.p1 - seg.p0)
    seg.qpts = mid[None, :] + t[:, None] * half[None, :]
    seg.qweights = w * seg.length / 2.0
    if seg.fitted:
        seg.qproj = seg.qpts.copy()
        seg.qdist = np.zeros_like(seg.qpts)
        seg.qnormal = np.tile(seg.normal, (n_q, 1))
        return
    proj = np.empty_like(seg.qpts)
    dist = np.empty_like(seg.qpts)
    nrm = np.empty_like(seg.qpts)
    tags = []
    for i, pt in enumerate(seg.qpts):
        x, d, n, b = domain.closest_point(pt)
        proj[i], dist[i], nrm[i] = x, d, n
        tags.append(b.bc)
    if len(set(tags)) > 1:
        raise ValueError("surrogate segment projects onto boundaries with "
                         f"conflicting tags {sorted(set(tags))}")
    seg.qproj, seg.qdist, seg.qnormal, seg.tag = proj, dist, nrm, tags[0]


def _check_connected(hier, inside, inside_keys):
    if not inside:
        return
    index = {(e.level, e.ex, e.ey): i for i, e in enumerate(inside)}
    seen = {0}
    stack = [inside[0]]
    while stack:
        e = stack.pop()
        eps = 1e-8 * min(e.x1 - e.x0, e.y1 - e.y0)
        for side in ("W", "E", "S", "N"):
            for probe_t in np.linspace(0.1, 0.9, 5):
                if side in ("S", "N"):
                    s = e.x0 + probe_t * (e.x1 - e.x0)
                    q = (s, (e.y0 - eps) if side == "S" else (e.y1 + eps))
                else:
                    s = e.y0 + probe_t * (e.y1 - e.y0)
                    q = ((e.x0 - eps) if side == "W" else (e.x1 + eps), s)
                (axd, bxd), (ayd, byd) = hier.domain
                if not (axd <= q[0] <= bxd and ayd <= q[1] <= byd):
                    continue
                nb = hier.element_at(q[0], q[1])
                key = (nb.level, nb.ex, nb.ey)
                j = index.get(key)
                if j is not None and j not in seen:
                    seen.add(j)
                    stack.append(inside[j])
    if len(seen) != len(inside):
        raise ValueError(f"surrogate domain is disconnected "
                         f"({len(seen)} of {len(inside)} elements reachable): "
                         "mesh too coarse for the geometry")
