import numpy as np
import pytest

from cechkit.boundary_model import build_family
from cechkit.cech_pipeline import (
    build_refinement_tower, da_check, nonvanishing_certificate, refine_chain, refine_with_cover,
    related_homotopy, tiny_cycle_fill, verify_da_record, verify_nonvanish_record,
)
from cechkit.chain_core import PointSet, boundary, fineness, simplex, vertex_map
from cechkit.cover_engine import (
    UniformCover, ball_cover, simplex_cap_cover, whole_cover,
)
from cechkit.detour import cross_polytope_cycle
from cechkit.errors import CechError
from cechkit.sphere_geometry import _from_polar, sample_net

from conftest import unit

NORTH = np.array([0.0, 0.0, 1.0])
EAST = np.array([1.0, 0.0, 0.0])


@pytest.fixture(scope="module")
def poles_family():
    return build_family(1, 0.02, 1e-4, 2, seed=0, centers=np.array([[1.0, 0, 0], [-1.0, 0, 0]]))


def edge(points, length):
    a = points.add(_from_polar(NORTH, length / 2, EAST))
    b = points.add(_from_polar(NORTH, length / 2, -EAST))
    return simplex(a, b)


class TestRelatedHomotopy:
    def setup_method(self):
        self.points = PointSet(3, [unit(0, 0, 1), unit(0.1, 0, 1), unit(0, 0.1, 1)])
        self.c = simplex(0, 1) + simplex(1, 2) + simplex(2, 0)

    def test_identity_move(self):
        d = related_homotopy(self.c, self.c, {0: 0, 1: 1, 2: 2}, self.points, 0.01)
        assert boundary(d) == 0

    def test_small_move(self):
        moved = {v: self.points.add(np.asarray(self.points.row(v)) + [0.001, 0, 0])
                 for v in range(3)}
        c_prime = vertex_map(self.c, moved)
        d = related_homotopy(self.c, c_prime, moved, self.points, 0.01)
        assert boundary(d) == self.c - c_prime

    def test_move_too_far(self):
        far = self.points.add(unit(1, 0, 0))
        T = {0: far, 1: 1, 2: 2}
        with pytest.raises(CechError):
            related_homotopy(self.c, vertex_map(self.c, T), T, self.points, 0.01)

    def test_wrong_image(self):
        with pytest.raises(CechError):
            related_homotopy(self.c, -self.c, {0: 0, 1: 1, 2: 2}, self.points, 0.01)

    def test_needs_cycle(self):
        with pytest.raises(CechError):
            related_homotopy(simplex(0, 1), simplex(0, 1), {0: 0, 1: 1}, self.points, 0.01)


class TestRefineChain:
    def test_short_edge_kept(self, poles_family):
        points = PointSet(3)
        c = edge(points, 0.05)
        out, refiner = refine_chain(c, points, 0.1, poles_family)
        assert out == c
        assert refiner.identity_hits == 1 and refiner.fills == 0

    def test_long_edge_filled(self, poles_family):
        points = PointSet(3)
        c = edge(points, 0.3)
        out, refiner = refine_chain(c, points, 0.1, poles_family)
        assert boundary(out) == boundary(c)
        assert fineness(out, points) <= 0.1 + 1e-12
        assert refiner.fills == 1
        assert refiner.verify() == []
        assert refiner.strata == [1, 324]
        loc = refiner.to_record()["locality"][1]
        assert loc["measured"] <= loc["bound"]

    def test_degree_above_k(self, poles_family):
        points = PointSet(3, [unit(0, 0, 1), unit(0.1, 0, 1), unit(0, 0.1, 1)])
        with pytest.raises(CechError):
            refine_chain(simplex(0, 1, 2), points, 0.1, poles_family)

    def test_chain_outside_stratum(self, poles_family):
        points = PointSet(3, [EAST, unit(1, 0.1, 0)])
        with pytest.raises(CechError):
            refine_chain(simplex(0, 1), points, 0.1, poles_family)


class TestTower:
    def test_caps_tower(self, s2_net):
        caps = simplex_cap_cover(s2_net, 3)
        tower = build_refinement_tower(caps, 2)
        assert len(tower.levels) == 3
        assert all(cert["ok"] for cert in tower.certificates)
        assert tower.radii[1] == pytest.approx(tower.radii[0] * 0.225)
        assert tower.scheduled(0) is tower.levels[1]
        assert tower.scheduled(1) is tower.levels[0]
        assert tower.scheduled(5) is tower.levels[0]
        assert tower.finest is tower.levels[-1]

    def test_whole_cover_tower(self, s2_net):
        tower = build_refinement_tower(whole_cover(s2_net), 0)
        assert tower.lebesgue == pytest.approx(np.pi)
        assert tower.radii == [pytest.approx(0.9 * np.pi / 2)]


class TestRefineWithCover:
    def test_certificate(self, poles_family, s2_net):
        points = PointSet(3)
        c = edge(points, 0.05)
        cert = refine_with_cover(c, points, whole_cover(s2_net), 0.01, poles_family)
        assert cert.ok, cert.checks
        assert boundary(cert.output) == boundary(c)
        assert cert.strata == [1, 324]
        assert [row["degree"] for row in cert.audit] == [0, 1]

    def test_input_not_fine(self, poles_family, s2_net):
        points = PointSet(3)
        with pytest.raises(CechError) as err:
            refine_with_cover(edge(points, 1.0), points, whole_cover(s2_net), 0.01, poles_family)
        assert err.value.code == "PRECONDITION_FAILED"

    def test_tower_too_short(self, poles_family, s2_net):
        O = whole_cover(s2_net)
        points = PointSet(3)
        with pytest.raises(CechError) as err:
            refine_with_cover(edge(points, 0.05), points, O, 0.01, poles_family,
                              tower=build_refinement_tower(O, 0))
        assert err.value.code == "TOWER_FAILED"


class TestTinyCycleFill:
    def test_fills_inside_a_cap(self, poles_family, s2_net):
        caps = simplex_cap_cover(s2_net, 3)
        points = PointSet(3)
        c = cross_polytope_cycle(points, NORTH, 0.025, 0)
        d, owner = tiny_cycle_fill(c, points, caps, UniformCover(0.1), 0.3, poles_family)
        assert boundary(d) == c
        assert owner in range(4)

    def test_needs_reduced_cycle(self, poles_family, s2_net):
        points = PointSet(3, [NORTH])
        with pytest.raises(CechError):
            tiny_cycle_fill(simplex(0), points, whole_cover(s2_net), UniformCover(0.1), 0.3,
                            poles_family)


class TestDACheck:
    def test_degree_range(self, poles_family, s2_net):
        with pytest.raises(CechError):
            da_check(whole_cover(s2_net), 1, 1, 0, poles_family)

    def test_verify_record(self, s2_net):
        points = PointSet(3, [NORTH, unit(0.05, 0, 1), unit(0, 0.05, 1)])
        c = simplex(0) - simplex(1)
        w = simplex(1, 0)
        whole = whole_cover(s2_net)
        record = {"family": None, "cover": {"name": "whole",
                                            "sets": [s.to_record() for s in whole.sets]},
                  "entries": [{"index": 0, "status": "PASS", "points": points.to_record(),
                               "cycle": c.to_record(), "witness": w.to_record()}]}
        assert verify_da_record(record) == {"ok": True, "checked": 1, "failures": []}
        record["entries"][0]["witness"] = simplex(2, 0).to_record()
        out = verify_da_record(record)
        assert not out["ok"] and out["failures"][0]["check"] == "boundary_match"

    def test_small_run_reverifies(self):
        family = build_family(1, 0.005, 1e-4, 2, seed=0, ambient_dim=4)
        net = sample_net(0.3, 4, seed=0).points
        O = ball_cover(net, sample_net(0.6, 4, seed=1).points.coords, 1.0, name="balls")
        report = da_check(O, 1, 2, 0, family, kinds=("patch",))
        assert report.status in ("PASS", "FAIL", "INCOMPLETE")
        assert report.passed <= len(report.entries) <= 2
        record = report.to_record()
        assert verify_da_record(record)["ok"]
        assert len(report.rows()) == len(report.entries)


@pytest.fixture(scope="module")
def two_punctures():
    F = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
    family = build_family(1, 0.005, 1e-4, 2, seed=0, centers=F)
    return nonvanishing_certificate(F, None, 0, family)


class TestNonvanishing:
    def test_single_puncture(self):
        F = np.array([[0.0, 0, 1.0]])
        family = build_family(1, 0.005, 1e-4, 1, seed=0, centers=F)
        cert = nonvanishing_certificate(F, 0.01, 0, family)
        assert cert.rank == 0 and cert.status == "CERTIFIED"
        assert verify_nonvanish_record(cert.to_record())["ok"]

    def test_two_punctures(self, two_punctures):
        cert = two_punctures
        assert cert.rank == 1 and cert.expected == 1
        assert cert.class_matrix in ([[1]], [[-1]])
        record = cert.to_record()
        assert record["lower_bound"] == 1
        check = verify_nonvanish_record(record)
        assert check["ok"] and check["matrix_match"]

    def test_tampered_record(self, two_punctures):
        record = two_punctures.to_record()
        record["class_matrix"] = [[0]]
        assert not verify_nonvanish_record(record)["ok"]

    def test_unsupported_dimension(self):
        F = np.eye(5)[:2]
        with pytest.raises(CechError) as err:
            nonvanishing_certificate(F, None, 0, None)
        assert err.value.code == "UNSUPPORTED_DIMENSION"
