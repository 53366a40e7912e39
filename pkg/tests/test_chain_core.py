import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cechkit.chain_core import (
    Chain, ConeHomotopy, PointSet, boundary, coefficient_sum, cone, face_complex, fineness,
    is_cycle, is_reduced, is_reduced_cycle, orient, orientation_homotopy, prism, simplex,
    strip_constant_cycles, support, vertex_map,
)

from conftest import chains, unit


class TestPointSet:
    def test_add_normalizes(self):
        ps = PointSet(3)
        i = ps.add([0, 0, 2])
        assert ps.row(i) == (0.0, 0.0, 1.0)

    def test_rejects_wrong_dimension_and_zero(self):
        ps = PointSet(3)
        with pytest.raises(ValueError):
            ps.add([1, 0])
        with pytest.raises(ValueError):
            ps.add([0, 0, 0])

    def test_intern_reuses_index(self):
        ps = PointSet(3)
        a = ps.intern([1, 0, 0])
        b = ps.intern([1, 0, 0])
        assert a == b and len(ps) == 1

    def test_geodesic_distance(self):
        ps = PointSet(3)
        a, b = ps.add([1, 0, 0]), ps.add([0, 1, 0])
        assert ps.distance(a, b) == pytest.approx(math.pi / 2)
        assert ps.diameter([a, b, a]) == pytest.approx(math.pi / 2)

    def test_record_keeps_indices(self):
        ps = PointSet(3, [unit(1, 2, 3), unit(0, 1, 0)])
        back = PointSet.from_record(ps.to_record())
        assert np.allclose(back.coords, ps.coords)


class TestChainArithmetic:
    def test_zero_terms_dropped(self):
        c = simplex(0, 1) - simplex(0, 1)
        assert not c and c == 0

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValueError):
            Chain({(0,): 1, (0, 1): 1})

    def test_add_mismatched_dimensions(self):
        with pytest.raises(ValueError):
            simplex(0) + simplex(0, 1)

    def test_zero_adds_to_any_dimension(self):
        c = simplex(0, 1, 2)
        assert Chain.zero(0) + c == c

    def test_record(self):
        c = 2 * simplex(3, 1) - simplex(0, 2)
        assert Chain.from_record(c.to_record()) == c

    @given(chains(1), chains(1))
    def test_addition_commutes(self, a, b):
        assert a + b == b + a


class TestBoundary:
    @given(st.integers(1, 4).flatmap(chains))
    @settings(max_examples=300)
    def test_boundary_squared_is_zero(self, c):
        assert boundary(boundary(c)) == 0

    @given(st.integers(0, 3).flatmap(chains))
    @settings(max_examples=300)
    def test_cone_identity(self, c):
        # d cone(x, c) = c - cone(x, dc), with the augmented boundary in degree 0
        x = 99
        lhs = boundary(cone(x, c), augmented=(c.dim == 0))
        if c.dim == 0:
            expected = c - Chain({(x,): coefficient_sum(c)}, dim=0)
            assert lhs == expected
        else:
            assert lhs == c - cone(x, boundary(c))

    def test_cone_on_reduced_cycle(self):
        c = simplex(1) - simplex(2)
        assert boundary(cone(0, c)) == c

    def test_cone_on_one_cycle(self):
        c = simplex(1, 2) + simplex(2, 3) + simplex(3, 1)
        assert is_cycle(c)
        assert boundary(cone(0, c)) == c

    def test_augmented_boundary_of_vertex(self):
        assert boundary(simplex(4), augmented=True) == Chain({(): 1}, dim=-1)
        assert boundary(simplex(4)) == 0

    def test_reduced_predicates(self):
        assert is_reduced(simplex(1) - simplex(2))
        assert not is_reduced(simplex(1))
        assert is_reduced_cycle(simplex(1, 2) + simplex(2, 1))
        assert not is_cycle(simplex(1, 2))


class TestMeasures:
    def test_fineness_and_support(self):
        ps = PointSet(3, [unit(1, 0, 0), unit(0, 1, 0), unit(1, 1, 0)])
        c = simplex(0, 2) + simplex(2, 1)
        assert support(c) == {0, 1, 2}
        assert fineness(c, ps) == pytest.approx(math.pi / 4)
        assert fineness(Chain.zero(1), ps) == 0.0

    def test_face_complex(self):
        fc = face_complex(simplex(0, 1, 2))
        assert (0, 1) in fc and (1, 2) in fc and (0, 2) in fc and (1,) in fc
        assert len(fc) == 7
        assert fc.vertices() == {0, 1, 2}


class TestChainMaps:
    @given(st.integers(1, 3).flatmap(chains))
    @settings(max_examples=200)
    def test_orient_is_chain_map(self, c):
        assert boundary(orient(c)) == orient(boundary(c))

    @given(st.integers(0, 3).flatmap(chains))
    @settings(max_examples=200)
    def test_orientation_homotopy(self, c):
        H = orientation_homotopy()
        lhs = boundary(H(c)) + H(boundary(c))
        assert lhs == c - orient(c)

    @given(st.integers(1, 3).flatmap(chains),
           st.lists(st.integers(0, 5), min_size=6, max_size=6),
           st.lists(st.integers(0, 5), min_size=6, max_size=6))
    @settings(max_examples=200)
    def test_prism_identity(self, c, f, g):
        f, g = dict(enumerate(f)), dict(enumerate(g))
        H = prism(c, f, g)
        rhs = vertex_map(c, g) - vertex_map(c, f)
        assert boundary(H) + prism(boundary(c), f, g) == rhs

    @given(st.integers(1, 3).flatmap(chains), st.lists(st.integers(0, 5), min_size=6, max_size=6))
    def test_vertex_map_is_chain_map(self, c, f):
        f = dict(enumerate(f))
        assert boundary(vertex_map(c, f)) == vertex_map(boundary(c), f)

    def test_cone_homotopy_to_constant(self):
        def to_zero(c):
            return vertex_map(c, lambda v: 0)

        H = ConeHomotopy(to_zero)
        c = simplex(1, 2) + simplex(2, 3) + simplex(3, 1)
        assert boundary(H(c)) + H(boundary(c)) == c - to_zero(c)

    def test_strip_constant_cycles(self):
        c = simplex(1, 1) + simplex(1, 2)
        out = strip_constant_cycles(c)
        assert out == simplex(1, 2)
        assert boundary(out) == boundary(c)
