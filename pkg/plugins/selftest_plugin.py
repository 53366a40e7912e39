# plugins/selftest_plugin.py
from cechkit.boundary_model import build_family, validate_separation
from cechkit.cech_pipeline import nonvanishing_certificate
from cechkit.cover_engine import simplex_cap_cover
from cechkit.detour import band_count, f1
from cechkit.errors import CechError, ScenarioError
from cechkit.log import log, warn
from cechkit.nerve_homology import homology, nerve, smith_normal_form
from cechkit.sphere_geometry import sample_net

from plugins.plugin_base import OperationPlugin, spread_points


def _snf():
    snf = smith_normal_form([[2, 0], [0, 3]])
    return snf.factors == [1, 6] and snf.verify(), {"factors": snf.factors}


def _caps_nerve():
    net = sample_net(0.15, 3, seed=0).points
    groups = homology(nerve(simplex_cap_cover(net, 3), max_dim=3), max_degree=2)
    return groups.betti == [1, 0, 1], {"betti": groups.betti}


def _family():
    family = build_family(2, 0.005, 1e-4, 3, seed=0)
    report = validate_separation(family)
    return report["ok"] and len(family) == 6, {"balls": len(family),
                                                "pairs": report["pairs_checked"]}


def _moduli():
    bands, f = band_count(0.1, 0.001, 9), f1(1, 9)
    return bands == 3 and f == 324, {"band_count": bands, "f1": f}


def _nonvanish():
    F = spread_points(2, 3)
    family = build_family(1, 0.005, 1e-4, 2, seed=0, centers=F)
    cert = nonvanishing_certificate(F, None, 0, family)
    return cert.rank == 1, {"rank": cert.rank, "status": cert.status}


CHECKS = {
    "smith_normal_form": _snf,
    "caps_nerve": _caps_nerve,
    "family_separation": _family,
    "moduli": _moduli,
    "nonvanish_two_punctures": _nonvanish,
}


class SelftestPlugin(OperationPlugin):
    name = "selftest"
    description = "Fixed known-answer checks across the toolkit"
    randomized = False

    def run(self, params, seed):
        self.action(params)
        only = params.get("checks") or list(CHECKS)
        unknown = [name for name in only if name not in CHECKS]
        if unknown:
            raise ScenarioError("unknown self-test checks", unknown=unknown, known=list(CHECKS))
        checks = {}
        for name in only:
            try:
                ok, detail = CHECKS[name]()
            except CechError as e:
                ok, detail = False, {"error": e.to_record()}
            checks[name] = {"ok": bool(ok), **detail}
            (log if ok else warn)(f"[SELFTEST] {name}: {'ok' if ok else 'FAILED'}")
        return {"checks": checks, "ok": all(c["ok"] for c in checks.values())}

    def summary_row(self, record):
        return {"operation": self.name, "checks": len(record["checks"]), "ok": record["ok"]}

    def table_rows(self, record):
        return [{"check": name, "ok": c["ok"]} for name, c in record["checks"].items()]

    def failed(self, record):
        return not record["ok"]
