"""Geometry and fiber machinery, checked against hand-computable maps."""

import cmath
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from greenlab.errors import DegenerateMap, DegreeTooLow
from greenlab.sphere import (
    CHART_LIMIT,
    Chart,
    HPoints,
    SpherePoint,
    apply,
    apply_batch,
    backward_step,
    children,
    chordal,
    chordal_batch,
    iterate,
    make_rational_map,
    preimages,
)

SQUARE = make_rational_map((0, 0, 1), (1,))          # z^2
BASILICA = make_rational_map((-1, 0, 1), (1,))       # z^2 - 1
CUBE = make_rational_map((0, 0, 0, 1), (1,))         # z^3
LATTES = make_rational_map((1, 0, 1), (-1, 0, 1))    # (z^2+1)/(z^2-1)


def pt(z) -> SpherePoint:
    return SpherePoint(complex(z), Chart.Z)


finite_complex = st.complex_numbers(
    min_magnitude=0, max_magnitude=50, allow_nan=False, allow_infinity=False
)

sphere_points = st.one_of(
    finite_complex.map(pt),
    st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False).map(
        lambda w: SpherePoint(w, Chart.W)
    ),
    st.just(SpherePoint.infinity()),
)


# -- charts and the metric --------------------------------------------------


class TestSpherePoint:
    def test_recharts_large_coordinates(self):
        p = pt(10.0)
        assert p.chart is Chart.W
        assert abs(p.coord) <= CHART_LIMIT
        assert p.coord == pytest.approx(0.1)

    def test_infinity(self):
        q = SpherePoint.infinity()
        assert q.is_infinity()
        assert q.chart is Chart.W and q.coord == 0

    @given(sphere_points)
    def test_coordinate_always_bounded(self, p):
        assert abs(p.coord) <= CHART_LIMIT + 1e-12

    @given(sphere_points)
    def test_homogeneous_roundtrip(self, p):
        X, Y = p.to_homogeneous()
        assert abs(X) ** 2 + abs(Y) ** 2 == pytest.approx(1.0)
        q = SpherePoint.from_homogeneous(X, Y)
        assert chordal(p, q) < 1e-12

    def test_chart_equivalence(self):
        # same point described in both charts
        a = SpherePoint(0.5 + 0.25j, Chart.Z)
        b = SpherePoint(1 / (0.5 + 0.25j), Chart.W)
        assert chordal(a, b) < 1e-15


class TestChordal:
    def test_antipodal_diameter(self):
        assert chordal(pt(0), SpherePoint.infinity()) == pytest.approx(1.0)

    def test_hand_value(self):
        # |x - y| / sqrt((1+|x|^2)(1+|y|^2)) for finite points
        a, b = 1.0, 1.0j
        expect = abs(a - b) / math.sqrt((1 + abs(a) ** 2) * (1 + abs(b) ** 2))
        assert chordal(pt(a), pt(b)) == pytest.approx(expect)

    @given(sphere_points, sphere_points)
    def test_symmetric_and_bounded(self, p, q):
        d1, d2 = chordal(p, q), chordal(q, p)
        assert d1 == pytest.approx(d2, abs=1e-12)
        assert 0 <= d1 <= 1

    @given(sphere_points, sphere_points, sphere_points)
    def test_triangle(self, p, q, r):
        assert chordal(p, r) <= chordal(p, q) + chordal(q, r) + 1e-9

    @given(sphere_points)
    def test_zero_iff_same(self, p):
        assert chordal(p, p) < 1e-14


# -- map construction -------------------------------------------------------


class TestMakeMap:
    def test_common_factor_rejected(self):
        # (z-1)(z+1) / (z-1)(z+2): shared root z=1
        with pytest.raises(DegenerateMap):
            make_rational_map((-1, 0, 1), (-2, 1, 1))

    def test_zero_map_rejected(self):
        with pytest.raises(DegenerateMap):
            make_rational_map((0, 0, 0), (1,))

    def test_degree_one_rejected(self):
        with pytest.raises(DegreeTooLow):
            make_rational_map((0, 1), (1,))
        with pytest.raises(DegreeTooLow):
            make_rational_map((1,), (0, 1))

    def test_degree_is_max(self):
        assert SQUARE.degree == 2
        assert LATTES.degree == 2
        assert make_rational_map((1,), (0, 0, 1)).degree == 2  # 1/z^2

    def test_trailing_zeros_trimmed(self):
        m = make_rational_map((0, 0, 1, 0, 0), (1, 0))
        assert m.degree == 2

    def test_fingerprint_stable(self):
        assert SQUARE.fingerprint == make_rational_map((0, 0, 1), (1,)).fingerprint
        assert SQUARE.fingerprint != BASILICA.fingerprint


# -- forward map -------------------------------------------------------------


class TestApply:
    @pytest.mark.parametrize(
        "z,expect",
        [(2, 4), (1j, -1), (0, 0), (-3, 9)],
    )
    def test_square_hand_values(self, z, expect):
        img = apply(SQUARE, pt(z))
        assert chordal(img, pt(expect)) < 1e-12

    def test_square_fixes_infinity(self):
        assert apply(SQUARE, SpherePoint.infinity()).is_infinity()

    def test_rational_pole_goes_to_infinity(self):
        # (z^2+1)/(z^2-1) has poles at z = +-1
        assert apply(LATTES, pt(1.0)).is_infinity()
        assert apply(LATTES, pt(-1.0)).is_infinity()

    def test_rational_value_at_infinity(self):
        # leading coefficients 1/1
        img = apply(LATTES, SpherePoint.infinity())
        assert chordal(img, pt(1.0)) < 1e-12

    def test_basilica_two_cycle(self):
        a = apply(BASILICA, pt(0))
        b = apply(BASILICA, a)
        assert chordal(a, pt(-1)) < 1e-14
        assert chordal(b, pt(0)) < 1e-14

    @given(finite_complex)
    def test_batch_agrees_with_scalar(self, z):
        pts = HPoints.from_point(pt(z), 3)
        out = apply_batch(SQUARE, pts)
        scalar = apply(SQUARE, pt(z))
        assert max(np.abs(
            out.X * scalar.to_homogeneous()[1] - out.Y * scalar.to_homogeneous()[0]
        )) < 1e-9

    def test_iterate_composes(self):
        p = pt(0.3 + 0.4j)
        a = iterate(BASILICA, p, 5)
        b = iterate(BASILICA, iterate(BASILICA, p, 2), 3)
        assert chordal(a, b) < 1e-10


# -- fibers ------------------------------------------------------------------


class TestPreimages:
    def test_roots_of_unity(self):
        got = preimages(CUBE, pt(1.0))
        assert sum(m for _, m in got) == 3
        targets = [cmath.exp(2j * cmath.pi * k / 3) for k in range(3)]
        for root, mult in got:
            assert mult == 1
            assert min(chordal(root, pt(t)) for t in targets) < 1e-10

    def test_critical_value_multiplicity(self):
        got = preimages(BASILICA, pt(-1.0))
        assert len(got) == 1
        root, mult = got[0]
        assert mult == 2
        assert chordal(root, pt(0)) < 1e-12

    def test_infinity_in_fiber(self):
        # z^2 = infinity only at infinity, with multiplicity 2
        got = preimages(SQUARE, SpherePoint.infinity())
        assert len(got) == 1 and got[0][1] == 2
        assert got[0][0].is_infinity()

    def test_polynomial_fiber_drops_degree(self):
        # z^2 - 1 = 3: roots +-2, none at infinity
        got = preimages(BASILICA, pt(3.0))
        vals = sorted(
            (r.coord if r.chart is Chart.Z else 1 / r.coord).real for r, _ in got
        )
        assert vals == pytest.approx([-2.0, 2.0])

    @given(finite_complex, st.complex_numbers(max_magnitude=2, allow_nan=False))
    def test_fiber_maps_back(self, w, c):
        fmap = make_rational_map((c, 0, 1), (1,))  # z^2 + c
        target = pt(w)
        got = preimages(fmap, target)
        assert sum(m for _, m in got) == 2
        for root, _ in got:
            assert chordal(apply(fmap, root), target) < 1e-6

    @given(st.complex_numbers(max_magnitude=5, allow_nan=False),
           st.complex_numbers(max_magnitude=5, allow_nan=False),
           st.complex_numbers(max_magnitude=5, allow_nan=False))
    def test_rational_fiber_maps_back(self, w, a, b):
        try:
            fmap = make_rational_map((a, 0, 1), (b, 1, 0.5))
        except (DegenerateMap, DegreeTooLow):
            assume(False)
        target = pt(w)
        got = preimages(fmap, target)
        assert sum(m for _, m in got) == fmap.degree
        for root, _ in got:
            assert chordal(apply(fmap, root), target) < 1e-6


class TestChildren:
    def _as_multiset(self, fmap, p):
        """preimages() flattened with multiplicity, for comparison."""
        flat = []
        for root, mult in preimages(fmap, p):
            flat.extend([root] * mult)
        return flat

    @pytest.mark.parametrize("fmap", [SQUARE, BASILICA, LATTES])
    @pytest.mark.parametrize("z", [0.0, 1.0, -1.0, 2.0 + 1.0j, 0.1j])
    def test_quadratic_matches_generic(self, fmap, z):
        p = pt(z)
        pts = HPoints.from_point(p, 1)
        kids = children(fmap, pts)
        flat = self._as_multiset(fmap, p)
        got = [k.point(0) for k in kids]
        # match as multisets under chordal distance
        for g in got:
            best = min(range(len(flat)), key=lambda i: chordal(g, flat[i]))
            assert chordal(g, flat[best]) < 1e-8
            flat.pop(best)
        assert not flat

    def test_cube_children_count(self):
        pts = HPoints.from_point(pt(8.0), 1)
        kids = children(CUBE, pts)
        assert len(kids) == 3
        imgs = [apply(CUBE, k.point(0)) for k in kids]
        assert all(chordal(i, pt(8.0)) < 1e-9 for i in imgs)

    def test_backward_step_is_a_child(self):
        pts = HPoints.from_point(pt(5.0), 4)
        u = np.array([0.1, 0.4, 0.6, 0.9])
        out = backward_step(SQUARE, pts, u)
        for i in range(4):
            img = apply(SQUARE, out.point(i))
            assert chordal(img, pt(5.0)) < 1e-10

    def test_backward_step_deterministic(self):
        pts = HPoints.from_point(pt(1.7 - 0.2j), 8)
        u = np.linspace(0.05, 0.95, 8)
        a = backward_step(BASILICA, pts, u)
        b = backward_step(BASILICA, pts, u)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)

    def test_backward_step_splits_branches(self):
        # u < 1/2 and u >= 1/2 must pick different square roots of 4
        pts = HPoints.from_point(pt(4.0), 2)
        out = backward_step(SQUARE, pts, np.array([0.2, 0.8]))
        z0, z1 = out.point(0), out.point(1)
        assert chordal(z0, z1) > 0.5  # +-2 are far apart
        assert {round(chordal(z0, pt(2.0)), 6), round(chordal(z0, pt(-2.0)), 6)} >= {0.0}


class TestHPoints:
    @given(st.lists(sphere_points, min_size=1, max_size=8))
    def test_charted_roundtrip(self, pts):
        h = HPoints.from_points(pts)
        coords, charts = h.charted()
        h2 = HPoints.from_charted(coords, charts)
        assert np.all(chordal_batch(h, h2) < 1e-12)

    @given(st.lists(sphere_points, min_size=1, max_size=8))
    def test_unit_norm(self, pts):
        h = HPoints.from_points(pts)
        norms = np.abs(h.X) ** 2 + np.abs(h.Y) ** 2
        assert np.allclose(norms, 1.0)

    def test_angles_on_circle(self):
        h = HPoints.from_points([pt(cmath.exp(1j * t)) for t in (0.0, 1.0, -2.0)])
        ang = h.angles()
        assert np.allclose(np.mod(ang, 2 * np.pi), np.mod([0.0, 1.0, -2.0], 2 * np.pi))
