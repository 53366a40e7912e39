# plugins/da_check_plugin.py
from cechkit.cech_pipeline import da_check, verify_da_record
from cechkit.sphere_geometry import sample_net

from plugins.plugin_base import OperationPlugin, cover_from_spec, family_from_params


class DACheckPlugin(OperationPlugin):
    name = "da-check"
    description = "Sampled check that fine cycles of a stratum fill inside a cover"
    actions = ("run",)

    def run(self, params, seed):
        self.action(params)
        ambient = int(params.get("ambient_dim", 4))
        params = {**params, "ambient_dim": ambient}
        family = family_from_params(params, seed)
        net = sample_net(float(params.get("net_eps", 0.25)), ambient, seed=seed).points
        spec = params.get("cover", {"kind": "balls", "spacing": 0.6, "radius": 1.0})
        O = cover_from_spec(spec, net, seed)
        report = da_check(O, int(params.get("degree", 1)), int(params.get("samples", 6)), seed,
                          family, n=int(params.get("n", 1)), delta=params.get("delta"),
                          kinds=tuple(params.get("kinds", ("patch", "polygon", "detoured"))),
                          strict=bool(params.get("strict", False)),
                          n_jobs=int(params.get("n_jobs", 1)))
        body = report.to_record()
        body["reverify"] = verify_da_record(body)
        body["rows"] = report.rows()
        return body

    def summary_row(self, record):
        return {"operation": self.name, "degree": record["degree"], "status": record["status"],
                "passed": record["passed"], "requested": record["requested"],
                "attempts": record["attempts"], "reverified": record["reverify"]["ok"]}

    def table_rows(self, record):
        return record["rows"] or [self.summary_row(record)]

    def failed(self, record):
        return record["status"] != "PASS" or not record["reverify"]["ok"]
