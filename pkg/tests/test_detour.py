import numpy as np
import pytest

from cechkit.boundary_model import build_family
from cechkit.chain_core import PointSet, boundary, cone, fineness, is_cycle, simplex, support
from cechkit.detour import (
    BallList, DetourReport, band_count, check_disjoint, cross_polytope_cycle, detour_balls,
    disjoint_detour, f1, general_detour, h_modulus, input_field, partition_bands,
    chain_split, represent_class, stratum_fill,
)
from cechkit.errors import CechError
from cechkit.sphere_geometry import AnnularMidpoint, FinenessField, _from_polar, bisect_to

from conftest import unit

NORTH = np.array([0.0, 0.0, 1.0])


def crossing_path(points, p, radius):
    """Geodesic segment through p with both ends at distance radius."""
    return cone(points.intern(p), cross_polytope_cycle(points, p, radius, 0))


@pytest.fixture(scope="module")
def poles_family():
    return build_family(1, 0.02, 1e-4, 2, seed=0, centers=np.array([[1.0, 0, 0], [-1.0, 0, 0]]))


class TestModuli:
    def test_f1(self):
        assert f1(1, 9) == 324
        assert f1(20, 9) == 360

    def test_band_count(self):
        assert band_count(0.1, 0.001, 9) == 3
        assert band_count(0.1, 0.1, 9) == 1
        assert band_count(0.1, 0.0, 9) == 0

    def test_h_modulus_decreases_to_zero(self):
        vals = [h_modulus(10.0 ** -i, 9) for i in range(30)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert h_modulus(0.0, 9) == 0.0


class TestBallList:
    def test_bands_largest_first(self):
        balls = BallList(np.tile(NORTH, (4, 1)), [0.05, 0.005, 0.04, 0.0004])
        bands = partition_bands(balls, 9)
        assert [b.tolist() for b in bands] == [[0, 2], [1], [3]]

    def test_subset_keeps_ids(self):
        balls = BallList(np.eye(3), [0.1, 0.2, 0.3])
        sub = balls.subset([2, 0])
        assert sub.ids.tolist() == [2, 0]
        assert sub.r_max == pytest.approx(0.3)
        assert sub.scaled(2).r_min == pytest.approx(0.2)

    def test_check_disjoint(self):
        balls = BallList([NORTH, _from_polar(NORTH, 0.3, np.array([1.0, 0, 0]))], [0.05, 0.05])
        check_disjoint(balls, 2)
        with pytest.raises(CechError) as err:
            check_disjoint(balls, 18)
        assert err.value.code == "PRECONDITION_FAILED"
        assert err.value.detail["balls"] == [0, 1]

    def test_detour_balls_cutoff(self):
        family = build_family(2, 0.02, 1e-4, 2, seed=3)
        balls = detour_balls(family, 0.5, min_radius=0.01)
        assert len(balls) == 2
        assert np.allclose(balls.radii, 0.01)
        assert set(family.levels[balls.ids].tolist()) == {0}

    def test_report_checks(self):
        rep = DetourReport("disjoint", simplex(0))
        assert rep.check("a", 1.0, 1.0)
        assert not rep.check("b", 2.0, 1.0)
        assert rep.check("c", 2.0, 1.0, ">=")
        assert rep.status == "FAILED"
        assert rep.to_record()["checks"]["b"]["ok"] is False


class TestDisjointDetour:
    def setup_method(self):
        self.points = PointSet(3)
        self.balls = BallList([NORTH], [0.05])

    def test_path_leaves_the_ball(self):
        d = crossing_path(self.points, NORTH, 0.15)
        d = bisect_to(d, self.points, 0.025, midpoint=AnnularMidpoint(NORTH))
        rep = disjoint_detour(d, self.points, self.balls, 0.05)
        assert rep.ok
        assert boundary(rep.output) == boundary(d)
        assert rep.meta["touched"] == 1
        dist = [self.points.distance_to(v, NORTH) for v in support(rep.output)]
        assert min(dist) >= 0.05 / 9

    def test_homotopy(self):
        d = crossing_path(self.points, NORTH, 0.15)
        d = bisect_to(d, self.points, 0.0125, midpoint=AnnularMidpoint(NORTH))
        rep = disjoint_detour(d, self.points, self.balls, 0.05, want_homotopy=True)
        assert rep.ok
        assert boundary(rep.homotopy) == d - rep.output

    def test_no_balls_is_identity(self):
        d = crossing_path(self.points, NORTH, 0.15)
        rep = disjoint_detour(d, self.points, BallList(np.zeros((0, 3)), []), 0.05)
        assert rep.output == d

    def test_coarse_input_rejected(self):
        d = crossing_path(self.points, NORTH, 0.15)
        with pytest.raises(CechError) as err:
            disjoint_detour(d, self.points, self.balls, 0.05)
        assert err.value.code == "PRECONDITION_FAILED"

    def test_delta_above_radius(self):
        d = bisect_to(crossing_path(self.points, NORTH, 0.15), self.points, 0.01,
                      midpoint=AnnularMidpoint(NORTH))
        with pytest.raises(CechError):
            disjoint_detour(d, self.points, self.balls, 0.1)

    def test_boundary_inside_ball(self):
        d = bisect_to(crossing_path(self.points, NORTH, 0.03), self.points, 0.01,
                      midpoint=AnnularMidpoint(NORTH))
        with pytest.raises(CechError) as err:
            disjoint_detour(d, self.points, self.balls, 0.05)
        assert "boundary" in err.value.message

    def test_top_dimension_rejected(self):
        with pytest.raises(CechError):
            disjoint_detour(simplex(0, 1, 2), PointSet(3, np.eye(3)), self.balls, 0.05)


class TestGeneralDetour:
    def test_two_bands(self):
        points = PointSet(3)
        balls = BallList([NORTH, [1.0, 0, 0]], [0.05, 0.005])
        d = crossing_path(points, NORTH, 0.15)
        need = input_field(balls, 0.05, 9, strict=False)
        d = bisect_to(d, points, need, midpoint=AnnularMidpoint(NORTH))
        rep = general_detour(d, points, balls, 0.05, strict=False)
        assert rep.meta["bands"] == 2
        assert not rep.meta["strict"]
        assert rep.ok
        assert boundary(rep.output) == boundary(d)
        assert fineness(rep.output, points) <= 0.05 + 1e-12

    def test_default_demands_delta_below_smallest_radius(self):
        points = PointSet(3)
        balls = BallList([NORTH, [1.0, 0, 0]], [0.05, 0.005])
        d = bisect_to(crossing_path(points, NORTH, 0.15), points, 0.04,
                      midpoint=AnnularMidpoint(NORTH))
        with pytest.raises(CechError) as err:
            general_detour(d, points, balls, 0.05)
        assert err.value.code == "PRECONDITION_FAILED"
        assert "smallest radius" in err.value.message

    def test_default_demands_uniform_input_fineness(self):
        points = PointSet(3)
        balls = BallList([NORTH], [0.05])
        d = bisect_to(crossing_path(points, NORTH, 0.15), points, 0.04,
                      midpoint=AnnularMidpoint(NORTH))
        assert fineness(d, points) > 0.025
        with pytest.raises(CechError) as err:
            general_detour(d, points, balls, 0.05)
        assert err.value.code == "PRECONDITION_FAILED"

    def test_default_run(self):
        points = PointSet(3)
        balls = BallList([NORTH], [0.05])
        d = bisect_to(crossing_path(points, NORTH, 0.15), points, input_field(balls, 0.05, 9),
                      midpoint=AnnularMidpoint(NORTH))
        rep = general_detour(d, points, balls, 0.05)
        assert rep.meta["strict"] and rep.ok
        assert boundary(rep.output) == boundary(d)

    def test_band_not_disjoint(self):
        points = PointSet(3, [unit(0, 1, 0), unit(0, -1, 0)])
        balls = BallList([NORTH, _from_polar(NORTH, 0.3, np.array([1.0, 0, 0]))], [0.05, 0.05])
        with pytest.raises(CechError) as err:
            general_detour(simplex(0, 1), points, balls, 0.05)
        assert err.value.code == "BAND_NOT_DISJOINT"

    def test_strict_field_is_uniform(self):
        balls = BallList([NORTH, [1.0, 0, 0]], [0.05, 0.005])
        field_ = input_field(balls, 0.005, 9, strict=True)
        assert isinstance(field_, FinenessField)
        assert field_.floor == pytest.approx(0.005 / 4)


class TestStratumFill:
    def test_small_cycle_is_coned(self, poles_family):
        points = PointSet(3)
        c = cross_polytope_cycle(points, NORTH, 0.05, 0)
        d, table = stratum_fill(c, points, 1, 0.3, poles_family, return_table=True)
        assert boundary(d) == c
        assert table.f1 == 324
        assert table.measured["mode"] == "cone"

    def test_fill_detour_project(self, poles_family):
        points = PointSet(3)
        c = cross_polytope_cycle(points, NORTH, 0.2, 0)
        d, table = stratum_fill(c, points, 1, 0.3, poles_family, return_table=True)
        assert boundary(d) == c
        assert table.measured["mode"] == "fill-detour-project"
        assert fineness(d, points) <= 0.3 + 1e-12
        assert poles_family.in_stratum(points.coords[sorted(support(d))], table.f1).all()
        assert table.measured["diameter_out"] <= table.measured["h_bound"]

    def test_top_degree_rejected(self, poles_family):
        points = PointSet(3)
        c = cross_polytope_cycle(points, NORTH, 0.1, 1)
        with pytest.raises(CechError) as err:
            stratum_fill(c, points, 1, 0.3, poles_family)
        assert err.value.code == "PRECONDITION_FAILED"

    def test_cycle_outside_stratum(self, poles_family):
        points = PointSet(3, [[1.0, 0, 0], unit(1, 0.05, 0)])
        with pytest.raises(CechError):
            stratum_fill(simplex(0) - simplex(1), points, 1, 0.3, poles_family)


class TestClassRepresentatives:
    def test_cross_polytope_is_cycle(self):
        points = PointSet(4)
        p = np.array([0.0, 0, 0, 1.0])
        c = cross_polytope_cycle(points, p, 0.2, 2)
        assert c.dim == 2 and len(c) == 8
        assert is_cycle(c)
        assert np.allclose([points.distance_to(v, p) for v in support(c)], 0.2)

    def test_single_puncture_is_zero(self, poles_family):
        sc, disc, N, derivation = represent_class(poles_family.centers[:1], 0, 0.1, poles_family)
        assert not disc and N == 1
        assert derivation[0]["step"] == "single puncture"

    def test_high_dimension_unsupported(self):
        with pytest.raises(CechError) as err:
            represent_class(np.eye(5)[:2], 0, 0.1, None)
        assert err.value.code == "UNSUPPORTED_DIMENSION"

    def test_puncture_must_be_a_center(self, poles_family):
        with pytest.raises(CechError):
            represent_class(np.array([NORTH, -NORTH]), 0, 0.1, poles_family)

    def test_class_index_range(self, poles_family):
        with pytest.raises(CechError):
            represent_class(poles_family.centers, 1, 0.1, poles_family)


class TestChainSplit:
    def test_parts_sum_back(self):
        points = PointSet(3)
        d = bisect_to(crossing_path(points, NORTH, 0.15), points, 0.025,
                      midpoint=AnnularMidpoint(NORTH))
        d_out, parts = chain_split(d, points, BallList([NORTH], [0.05]))
        assert list(parts) == [0]
        assert d_out + parts[0] == d
        assert max(points.distance_to(v, NORTH) for v in support(parts[0])) < 0.1

    def test_simplex_in_two_doubled_balls(self):
        points = PointSet(3, [NORTH, unit(0.01, 0, 1)])
        balls = BallList([NORTH, unit(0, 0.02, 1)], [0.05, 0.05])
        with pytest.raises(CechError) as err:
            chain_split(simplex(0, 1), points, balls)
        assert err.value.code == "PRECONDITION_FAILED"
