# plugins/cover_plugin.py
from cechkit.boundary_model import stratum_net
from cechkit.cover_engine import is_super_refinement, lebesgue_number, limit_cover_schedule
from cechkit.sphere_geometry import sample_net

from plugins.plugin_base import OperationPlugin, cover_from_spec, family_from_params


class CoverPlugin(OperationPlugin):
    name = "cover"
    description = "Build a cover on a net, or certify a super-refinement"
    actions = ("build", "check-super")

    def run(self, params, seed):
        act = self.action(params)
        ambient = int(params.get("ambient_dim", 3))
        net = sample_net(float(params.get("net_eps", 0.2)), ambient, seed=seed).points
        if act == "build":
            O = cover_from_spec(params.get("cover", {}), net, seed)
            return {"action": act, "net_points": len(net), "sets": len(O),
                    "lebesgue": lebesgue_number(O), "uncovered": len(O.uncovered()),
                    "cover": O.to_record()}
        coarse = cover_from_spec(params.get("coarse", {"kind": "caps"}), net, seed)
        if "limit" in params:
            return self._limit(params, seed, coarse, act)
        fine = cover_from_spec(params.get("fine", {"kind": "uniform", "radius": 0.1}), net, seed)
        ok, parent, failures = is_super_refinement(fine, coarse)
        return {"action": act, "mode": "pair", "net_points": len(net), "ok": ok,
                "parents": len(parent),
                "failures": [int(f) for f in failures if f != "all"][:50],
                "failure_count": len(failures)}

    def _limit(self, params, seed, coarse, act):
        spec = params["limit"]
        family = family_from_params(params, seed)
        eps = float(spec.get("net_eps", params.get("net_eps", 0.2)))
        base = coarse.net
        strata = [stratum_net(family, int(n), eps, seed=seed, base=base)
                  for n in spec.get("strata", [1, 2])]
        out = limit_cover_schedule(coarse, strata, family, spec.get("halvings"))
        return {"action": act, "mode": "limit", "ok": out["super_refinement"],
                "eps": out["eps"], "audit": out["audit"], "lebesgue": out["lebesgue"],
                "sets": len(out["V"]), "failure_count": len(out["failures"])}

    def summary_row(self, record):
        row = {"operation": self.name, "action": record["action"]}
        if record["action"] == "build":
            row.update(sets=record["sets"], lebesgue=record["lebesgue"],
                       uncovered=record["uncovered"])
        else:
            row.update(mode=record["mode"], ok=record["ok"], failures=record["failure_count"])
        return row

    def failed(self, record):
        return record["action"] == "check-super" and not record["ok"]
