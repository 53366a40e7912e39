# plugins/nerve_plugin.py
from cechkit.nerve_homology import discrete_complex, homology, nerve
from cechkit.sphere_geometry import sample_net

from plugins.plugin_base import OperationPlugin, cover_from_spec


class NervePlugin(OperationPlugin):
    name = "nerve"
    description = "Homology of the nerve (or the discrete complex) of a cover"
    actions = ("homology",)

    def run(self, params, seed):
        act = self.action(params)
        ambient = int(params.get("ambient_dim", 3))
        net = sample_net(float(params.get("net_eps", 0.15)), ambient, seed=seed).points
        O = cover_from_spec(params.get("cover", {"kind": "caps"}), net, seed)
        max_degree = int(params.get("max_degree", ambient - 1))
        build = discrete_complex if params.get("complex", "nerve") == "discrete" else nerve
        N = build(O, max_dim=max_degree + 1, budget=params.get("budget"))
        groups = homology(N, params.get("coeffs", "ZZ"), bool(params.get("reduced", False)),
                          max_degree, n_jobs=int(params.get("n_jobs", 1)))
        return {"action": act, "complex": N.kind, "sets": len(O),
                "counts": [N.count(n) for n in range(N.dimension + 1)],
                "truncated": N.truncated, "homology": groups.to_record(),
                "rows": groups.rows()}

    def summary_row(self, record):
        h = record["homology"]
        return {"operation": self.name, "complex": record["complex"], "sets": record["sets"],
                "coeffs": h["coeffs"], "betti": " ".join(str(b) for b in h["betti"])}

    def table_rows(self, record):
        return record["rows"]
