import numpy as np
import pytest

from cechkit.boundary_model import (
    BallFamily, approx_radius, build_family, project_to_stratum, radial_exit,
    stratum_membership, stratum_net, validate_separation,
)
from cechkit.chain_core import PointSet, geodesic_to_many, simplex, support
from cechkit.errors import CechError

from conftest import unit


@pytest.fixture(scope="module")
def family():
    return build_family(2, 0.02, 1e-4, 3, seed=7)


class TestBuildFamily:
    def test_nested_family_is_valid(self, family):
        assert len(family) == 6
        assert validate_separation(family)["ok"]
        assert sorted(set(family.levels.tolist())) == [0, 1]
        assert family.radii.max() == pytest.approx(0.02)
        assert family.radii.min() == pytest.approx(0.02 * 1e-4)

    def test_children_sit_inside_parents(self, family):
        for i in np.flatnonzero(family.levels == 1):
            d = geodesic_to_many(family.centers[family.levels == 0], family.centers[i])
            assert (d < 0.02).any()

    def test_same_seed_same_family(self):
        a = build_family(1, 0.02, 1e-4, 4, seed=3)
        b = build_family(1, 0.02, 1e-4, 4, seed=3)
        assert np.array_equal(a.centers, b.centers)

    def test_ratio_above_limit(self):
        with pytest.raises(CechError) as err:
            build_family(2, 0.02, 0.5, 2, seed=0)
        assert err.value.code == "PACKING_FAILED"

    def test_pinned_centers(self):
        F = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
        f = build_family(1, 0.01, 1e-4, 2, seed=0, centers=F)
        assert np.allclose(f.centers, F)

    def test_pinned_centers_too_close(self):
        F = np.array([[1.0, 0, 0], unit(1, 0.01, 0)])
        with pytest.raises(CechError) as err:
            build_family(1, 0.01, 1e-4, 2, seed=0, centers=F)
        assert err.value.code == "PACKING_FAILED"

    def test_disjoint_mode(self):
        f = build_family(2, 0.01, 0.01, 3, seed=1, mode="disjoint")
        assert validate_separation(f)["ok"]

    def test_model_constant_bound(self):
        with pytest.raises(ValueError):
            BallFamily(np.eye(3)[:1], [1.0], K=9.0, M=100.0)

    def test_record(self, family):
        back = BallFamily.from_record(family.to_record())
        assert np.array_equal(back.centers, family.centers)
        assert np.array_equal(back.levels, family.levels)


class TestSeparation:
    def test_detects_comparable_intersecting_balls(self):
        centers = np.array([[1.0, 0, 0], unit(1, 0.01, 0)])
        f = BallFamily(centers, np.array([0.05, 0.04]) * 162, K=9.0, M=162.0)
        report = validate_separation(f)
        assert not report["ok"]
        assert report["violations"][0][:2] == [0, 1]

    def test_accepts_nested_small_ball(self):
        centers = np.array([[1.0, 0, 0], unit(1, 0.001, 0)])
        f = BallFamily(centers, np.array([0.05, 0.05 / 9 ** 4]) * 162, K=9.0, M=162.0)
        assert validate_separation(f)["ok"]


class TestStrata:
    def test_center_outside_every_stratum(self, family):
        for n in (1, 2, 10):
            assert not stratum_membership(family.centers[0], n, family)

    def test_strata_increase(self, family, rng):
        X = rng.standard_normal((500, 3))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        X = np.vstack([X, family.centers + 0.004])
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        a, b = family.in_stratum(X, 1), family.in_stratum(X, 3)
        assert not (a & ~b).any()

    def test_index_from_one(self, family):
        with pytest.raises(ValueError):
            stratum_membership(np.array([1.0, 0, 0]), 0, family)

    def test_stratum_net(self, family):
        sn = stratum_net(family, 1, 0.3, seed=0)
        assert family.in_stratum(sn.coords, 1).all()
        assert sn.covering_radius <= 0.3
        dist, idx = sn.nearest(sn.coords[:3])
        assert np.allclose(dist, 0.0)
        assert list(idx) == list(sn.indices[:3])


class TestRadialMoves:
    def test_radial_exit_leaves_ball(self, family):
        y, moved = radial_exit(family.centers[0], family, 1)
        assert family.in_stratum(y[None, :], 1)[0]
        assert moved == pytest.approx(family.radii[0], rel=1e-6)

    def test_point_already_in_stratum(self, family):
        far = -family.centers[0]
        if family.in_stratum(far[None, :], 1)[0]:
            y, moved = radial_exit(far, family, 1)
            assert moved == 0.0

    def test_approx_radius_is_listed(self, family):
        r = approx_radius(1, 0.1, family)
        assert r in set(family.radii.tolist())

    def test_approx_radius_samples_kept_spheres(self):
        # the small ball's center lies inside the big one but it pokes out of its sphere
        north = np.array([0.0, 0.0, 1.0])
        poke = np.array([np.sin(0.19), 0.0, np.cos(0.19)])
        f = BallFamily(np.array([north, poke]), np.array([0.2, 0.05]) * 162.0)
        assert approx_radius(1, 0.01, f) == pytest.approx(0.05)
        assert approx_radius(1, 0.05, f) == pytest.approx(0.2)

    def test_approx_radius_single_ball(self):
        f = BallFamily(np.array([[0.0, 0.0, 1.0]]), np.array([0.1 * 162.0]))
        assert approx_radius(1, 1e-6, f) == pytest.approx(0.1)

    def test_project_moves_only_outside_vertices(self, family):
        ps = PointSet(3)
        inside = ps.add(family.centers[0])
        far = ps.add(-family.centers[0])
        c = simplex(inside) - simplex(far)
        out, mapping = project_to_stratum(c, ps, 1, 0.05, family, return_map=True)
        assert mapping[far] == far
        assert mapping[inside] != inside
        assert family.in_stratum(ps.coords[sorted(support(out))], 1).all()

    def test_project_too_far(self, family):
        ps = PointSet(3)
        v = ps.add(family.centers[0])
        with pytest.raises(CechError) as err:
            project_to_stratum(simplex(v), ps, 1, 1e-4, family)
        assert err.value.code == "TOO_FAR"
