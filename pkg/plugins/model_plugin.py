# plugins/model_plugin.py
from cechkit.boundary_model import approx_radius, stratum_net, validate_separation
from cechkit.log import log

from plugins.plugin_base import OperationPlugin, family_from_params


class ModelPlugin(OperationPlugin):
    name = "model"
    description = "Build a parabolic ball family or validate its separation"
    actions = ("build", "validate")

    def needs_seed(self, params):
        return "file" not in (params.get("family") or {})

    def run(self, params, seed):
        act = self.action(params)
        family = family_from_params(params, seed)
        report = validate_separation(family)
        body = {"action": act, "balls": len(family), "validation": report}
        if act == "build":
            body["family"] = family.to_record()
            eps = float(params.get("net_eps", 0.2))
            strata = []
            for n in params.get("strata", []):
                sn = stratum_net(family, int(n), eps, seed=seed or 0)
                strata.append({"n": int(n), "points": len(sn.indices),
                               "covering_radius": sn.covering_radius,
                               "approx_radius": approx_radius(int(n), eps, family)})
            body["strata"] = strata
        log(f"[PLUGIN] model {act}: {len(family)} balls, ok={report['ok']}")
        return body

    def summary_row(self, record):
        v = record["validation"]
        return {"operation": self.name, "action": record["action"], "balls": record["balls"],
                "pairs_checked": v["pairs_checked"], "violations": len(v["violations"]),
                "ok": v["ok"]}

    def failed(self, record):
        return not record["validation"]["ok"]
