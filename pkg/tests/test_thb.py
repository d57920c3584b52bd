"""Hierarchical space tests: fixtures, truncation, evaluation, bookkeeping."""

import numpy as np
import pytest

from thbsbm.splines import eval_basis
from thbsbm.thb import HierarchicalSpace

OMEGA1 = [(0.0, 0.5, 0.0, 0.5), (0.5, 1.0, 0.5, 1.0)]
OMEGA2 = [(0.0, 0.4, 0.0, 0.4), (0.6, 1.0, 0.6, 1.0)]


def build(strategy: str, steps: int, degree: int = 2, spans: int = 10) -> HierarchicalSpace:
    h = HierarchicalSpace.uniform(degree, spans)
    for region in [OMEGA1, OMEGA2][:steps]:
        h.refine(h.mark_in_boxes(region), strategy)
    return h


def test_unrefined_counts():
    h = HierarchicalSpace.uniform(2, 10)
    assert h.num_active_functions() == 144
    assert h.num_active_elements() == 100


@pytest.mark.parametrize("strategy,steps,dofs,elements", [
    ("h", 1, 294, 250),
    ("p", 1, 294, 100),
    ("k", 1, 544, 250),
    ("h", 2, 678, 634),
    ("p", 2, 454, 100),
])
def test_refinement_fixtures(strategy, steps, dofs, elements):
    h = build(strategy, steps)
    assert h.num_active_functions() == dofs
    assert h.num_active_elements() == elements


def test_empty_marking_is_noop():
    h = HierarchicalSpace.uniform(2, 10)
    h.refine(h.mark_functions(lambda flat, box: False), "h")
    assert h.num_levels == 1
    assert h.num_active_functions() == 144


def test_single_function_region_is_support_patch():
    h = HierarchicalSpace.uniform(2, 10)
    lvl = h.levels[0]
    flat = lvl.flat(5, 5)
    h.refine([flat], "h")
    omega = h.omega_next[0]
    # support of an interior p=2 function covers a 3x3 block of spans
    assert omega.sum() == 9
    ex = np.argwhere(omega)
    assert ex.min(axis=0).tolist() == [3, 3] and ex.max(axis=0).tolist() == [5, 5]


def test_two_adjacent_marks_union_region():
    h = HierarchicalSpace.uniform(2, 10)
    lvl = h.levels[0]
    h.refine([lvl.flat(5, 5), lvl.flat(6, 5)], "h")
    assert h.omega_next[0].sum() == 12  # 3x3 union 3x3 shifted by one span


def test_marked_function_must_be_active():
    h = build("h", 1)
    lvl = h.levels[1]
    n_all = lvl.kv_x.num_funcs * lvl.kv_y.num_funcs
    inactive = sorted(set(range(n_all)) - h.active[1])[0]
    with pytest.raises(ValueError):
        h.refine([inactive], "h")


@pytest.mark.parametrize("degree", [1, 2, 3])
@pytest.mark.parametrize("strategy", ["h", "p", "k"])
def test_partition_of_unity(degree, strategy):
    h = build(strategy, 2, degree=degree)
    rng = np.random.default_rng(42 + degree)
    for x, y in rng.uniform(0.0, 1.0, (80, 2)):
        total = sum(t[0, 0] for t in h.eval_active(x, y).values())
        assert abs(total - 1.0) <= 1e-12


def test_partition_of_unity_derivatives_vanish():
    h = build("k", 1)
    rng = np.random.default_rng(5)
    for x, y in rng.uniform(0.02, 0.98, (40, 2)):
        tabs = h.eval_active(x, y, 1)
        assert abs(sum(t[1, 0] for t in tabs.values())) <= 1e-11
        assert abs(sum(t[0, 1] for t in tabs.values())) <= 1e-11


@pytest.mark.parametrize("strategy", ["h", "p", "k"])
def test_active_elements_tile_domain(strategy):
    h = build(strategy, 2)
    area = sum(e.area for e in h.active_elements())
    assert area == pytest.approx(1.0, abs=1e-12)


def test_identity_hierarchy_matches_tensor_basis():
    h = HierarchicalSpace.uniform(2, 5)
    kx, ky = h.levels[0].kv_x, h.levels[0].kv_y
    rng = np.random.default_rng(1)
    for x, y in rng.uniform(0, 1, (25, 2)):
        for (l, flat), t in h.eval_active(x, y).items():
            ix, iy = h.levels[0].unflat(flat)
            ref = eval_basis(kx, ix, x) * eval_basis(ky, iy, y)
            assert abs(t[0, 0] - ref) <= 1e-15


def test_truncated_value_below_untruncated():
    h = build("h", 1)
    kx, ky = h.levels[0].kv_x, h.levels[0].kv_y
    rng = np.random.default_rng(2)
    for x, y in rng.uniform(0, 1, (60, 2)):
        for (l, flat), t in h.eval_active(x, y).items():
            if l != 0:
                continue
            ix, iy = h.levels[0].unflat(flat)
            raw = eval_basis(kx, ix, x) * eval_basis(ky, iy, y)
            assert t[0, 0] <= raw + 1e-12


def test_quadrature_degrees():
    h = HierarchicalSpace.uniform(2, 10)
    for e in h.active_elements():
        assert h.quadrature_degree(e) == 2
    hp = build("p", 1)
    degrees = {h_lvl: set() for h_lvl in range(2)}
    for e in hp.active_elements():
        degrees[e.level].add(hp.quadrature_degree(e))
    assert degrees[0] == {2}   # outside the refined zone
    assert degrees[1] == {3}   # p-refined zone carries the elevated degree


def test_untruncated_expansion_is_identity():
    h = build("h", 1)
    lf = 1
    for flat in h.active_sorted(lf)[:10]:
        cols, vals = h.reps[(lf, flat)][lf]
        assert cols.tolist() == [flat] and vals.tolist() == [1.0]


def test_gram_matrix_full_rank():
    h = build("h", 1, degree=2, spans=10)
    # 3x3 interior points per active element cover every function's support
    pts = []
    for e in h.active_elements():
        for fx in (0.25, 0.5, 0.75):
            for fy in (0.25, 0.5, 0.75):
                pts.append((e.x0 + fx * (e.x1 - e.x0), e.y0 + fy * (e.y1 - e.y0)))
    funcs = h.all_active()
    index = {f: i for i, f in enumerate(funcs)}
    m = np.zeros((len(pts), len(funcs)))
    for r, (x, y) in enumerate(pts):
        for f, t in h.eval_active(x, y).items():
            m[r, index[f]] = t[0, 0]
    sv = np.linalg.svd(m, compute_uv=False)
    assert sv.min() > 1e-10 * sv.max()


def test_nestedness_coarse_field_representable():
    rng = np.random.default_rng(11)
    coarse = build("h", 1)
    fine = build("h", 2)
    coeffs = {f: rng.normal() for f in coarse.all_active()}

    def field(h, c, x, y):
        return sum(c[f] * t[0, 0] for f, t in h.eval_active(x, y).items())

    # least-squares projection of the coarse field onto the finer hierarchy,
    # collocated on a per-element grid that covers every support
    pts = []
    for e in fine.active_elements():
        for fx in (0.2, 0.5, 0.8):
            for fy in (0.2, 0.5, 0.8):
                pts.append((e.x0 + fx * (e.x1 - e.x0), e.y0 + fy * (e.y1 - e.y0)))
    funcs = fine.all_active()
    index = {f: i for i, f in enumerate(funcs)}
    m = np.zeros((len(pts), len(funcs)))
    rhs = np.zeros(len(pts))
    for r, (x, y) in enumerate(pts):
        rhs[r] = field(coarse, coeffs, x, y)
        for f, t in fine.eval_active(x, y).items():
            m[r, index[f]] = t[0, 0]
    sol, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    csol = dict(zip(funcs, sol))
    for x, y in rng.uniform(0, 1, (50, 2)):
        assert abs(field(fine, csol, x, y) - field(coarse, coeffs, x, y)) <= 1e-10


def test_dump_deterministic_and_complete():
    h = build("k", 1)
    d1, d2 = h.dump(), h.dump()
    assert d1 == d2
    assert "levels: 2" in d1
    assert "strategy=k" in d1
    assert "expand (0," in d1  # truncation expansions present


def test_element_at_respects_levels():
    h = build("h", 1)
    e = h.element_at(0.26, 0.26)
    assert e.level == 1
    e0 = h.element_at(0.26, 0.76)
    assert e0.level == 0
