import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sympy import Matrix

from cechkit.chain_core import boundary, orient, simplex
from cechkit.cover_engine import ball_cover, make_family_map, simplex_cap_cover
from cechkit.errors import CechError
from cechkit.nerve_homology import (
    SimplicialComplex, cohomology, discrete_complex, discrete_homology_at_scale,
    fraction_free_rank, homology, homology_basis, homology_coordinates, induced_on_homology,
    invariant_factors, nerve, orientation_witness, smith_normal_form,
)


def closure(top):
    faces = set()
    for s in top:
        for k in range(1, len(s) + 1):
            faces.update(combinations(sorted(s), k))
    return SimplicialComplex(faces, max(len(s) for s in top) - 1)


def arcs(net, count, radius, phase=0.0):
    angles = phase + 2 * math.pi * np.arange(count) / count
    centers = np.column_stack([np.cos(angles), np.sin(angles)])
    return ball_cover(net, centers, radius, name=f"arcs{count}")


RP2 = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5), (0, 5, 1),
       (1, 2, 4), (2, 3, 5), (3, 4, 1), (4, 5, 2), (5, 1, 3)]

matrices = st.integers(1, 6).flatmap(
    lambda m: st.integers(1, 6).flatmap(
        lambda n: st.lists(st.lists(st.integers(-6, 6), min_size=n, max_size=n),
                           min_size=m, max_size=m)))


class TestSmithNormalForm:
    def test_known_factors(self):
        snf = smith_normal_form([[2, 0], [0, 3]])
        assert snf.factors == [1, 6]
        assert snf.verify()

    def test_zero_matrix(self):
        assert smith_normal_form(np.zeros((2, 3), dtype=int)).factors == []

    @given(matrices)
    @settings(max_examples=150, deadline=None)
    def test_certificate_and_rank(self, rows):
        snf = smith_normal_form(rows)
        assert snf.verify()
        rank = Matrix(rows).rank()
        assert snf.rank == rank
        assert fraction_free_rank(rows) == rank

    @given(st.integers(1, 4).flatmap(
        lambda n: st.lists(st.lists(st.integers(-5, 5), min_size=n, max_size=n),
                           min_size=n, max_size=n)))
    @settings(max_examples=150, deadline=None)
    def test_determinant_divisor(self, rows):
        snf = smith_normal_form(rows)
        det = abs(int(Matrix(rows).det()))
        if det:
            assert math.prod(snf.factors) == det

    @given(matrices)
    @settings(max_examples=100, deadline=None)
    def test_sparse_path_agrees(self, rows):
        entries = {(i, j): v for i, r in enumerate(rows) for j, v in enumerate(r) if v}
        shape = (len(rows), len(rows[0]))
        assert invariant_factors(entries, shape) == sorted(smith_normal_form(rows).factors)


class TestComplexes:
    def test_sphere_boundaries(self):
        tetra = closure(list(combinations(range(4), 3)))
        assert homology(tetra).betti == [1, 0, 1]
        five = closure(list(combinations(range(5), 4)))
        groups = homology(five)
        assert groups.betti == [1, 0, 0, 1]
        assert all(not t for t in groups.torsion)

    def test_projective_plane_torsion(self):
        rp2 = closure(RP2)
        groups = homology(rp2)
        assert groups.betti == [1, 0, 0]
        assert groups.torsion[1] == [2]
        assert homology(rp2, coeffs=2).betti == [1, 1, 1]
        assert homology(rp2, coeffs="QQ").betti == [1, 0, 0]

    def test_reduced_point(self):
        point = closure([(0,)])
        assert homology(point, reduced=True).betti == [0]
        assert homology(point).betti == [1]

    def test_bad_coefficients(self):
        with pytest.raises(ValueError):
            homology(closure([(0, 1)]), coeffs="4")

    def test_cohomology_of_circle(self):
        circle = closure([(0, 1), (1, 2), (0, 2)])
        assert cohomology(circle).betti == [1, 1]

    def test_chain_outside_complex(self):
        with pytest.raises(CechError):
            closure([(0, 1)]).chain_vector(simplex(0, 5))


class TestNerves:
    def test_circle_good_cover(self, s1_net):
        N = nerve(arcs(s1_net, 3, 1.3), max_dim=2)
        assert N.count(2) == 0
        assert homology(N, max_degree=1).betti == [1, 1]

    def test_caps_good_cover(self, s2_net):
        N = nerve(simplex_cap_cover(s2_net, 3), max_dim=3)
        assert N.count(2) == 4 and N.count(3) == 0
        assert homology(N, max_degree=2).betti == [1, 0, 1]

    def test_default_cap_is_k_plus_two(self, s1_net, s2_net):
        caps = nerve(simplex_cap_cover(s2_net, 3))
        assert caps.max_dim == 3
        assert homology(caps, max_degree=2).betti == [1, 0, 1]
        assert nerve(arcs(s1_net, 3, 1.3)).max_dim == 2

    def test_truncation_caps_reliable_degree(self, s2_net):
        N = nerve(simplex_cap_cover(s2_net, 3), max_dim=1)
        assert N.truncated and N.reliable_degree == 0
        assert len(homology(N).betti) == 1

    def test_budget(self, s2_net):
        with pytest.raises(CechError) as err:
            nerve(simplex_cap_cover(s2_net, 3), max_dim=3, budget=3)
        assert err.value.code == "COMPLEX_TOO_LARGE"

    def test_discrete_complex_connected(self, s1_net):
        K = discrete_complex(arcs(s1_net, 3, 1.3), max_dim=1)
        assert homology(K, max_degree=0).betti == [1]

    def test_discrete_homology_at_scale(self, s1_net):
        assert discrete_homology_at_scale(arcs(s1_net, 3, 1.3), max_dim=0).betti == [1]


class TestInducedMaps:
    def test_circle_basis_and_coordinates(self):
        circle = closure([(0, 1), (1, 2), (0, 2)])
        basis = homology_basis(circle, 1)
        assert len(basis) == 1
        coords = homology_coordinates(circle, orient(basis[0] * 2), basis)
        assert coords == [2]
        huge = 10 ** 30
        assert homology_coordinates(circle, orient(basis[0] * huge), basis) == [huge]

    def test_spouse_map_is_iso_on_h1(self, s1_net):
        fine = arcs(s1_net, 12, 0.35)
        coarse = arcs(s1_net, 3, 1.5)
        spouse = make_family_map("spouse", fine, coarse)
        mat = induced_on_homology(spouse, 1)
        assert mat.shape == (1, 1)
        assert mat.dtype == object and isinstance(mat[0, 0], int)
        assert abs(mat[0, 0]) == 1

    def test_degree_above_cap(self):
        with pytest.raises(CechError):
            homology_basis(closure([(0, 1)]), 3)


class TestOrientationWitness:
    def test_degenerate_cycle_is_a_boundary(self):
        z = simplex(0, 0) + simplex(2, 2)
        assert orient(z) == 0
        assert boundary(orientation_witness(z)) == z

    def test_reordered_cycle_keeps_its_class(self):
        z = simplex(0, 1) + simplex(1, 2) + simplex(2, 0) + simplex(1, 1)
        assert boundary(orientation_witness(z)) == z - orient(z)
        circle = closure([(0, 1), (1, 2), (0, 2)])
        basis = homology_basis(circle, 1)
        coords = homology_coordinates(circle, z, basis)
        assert coords == homology_coordinates(circle, orient(z), basis)
        assert abs(coords[0]) == 1

    def test_needs_cycle(self):
        with pytest.raises(CechError) as err:
            orientation_witness(simplex(0, 1))
        assert err.value.code == "PRECONDITION_FAILED"
