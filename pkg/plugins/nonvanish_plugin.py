# plugins/nonvanish_plugin.py
from cechkit.cech_pipeline import nonvanishing_certificate, verify_nonvanish_record

from plugins.plugin_base import OperationPlugin, family_from_params, spread_points


class NonvanishPlugin(OperationPlugin):
    name = "nonvanish"
    description = "Rank lower bound for H^k of the cover tower over a punctured sphere"
    actions = ("run",)

    def run(self, params, seed):
        self.action(params)
        ambient = int(params.get("ambient_dim", 3))
        F = spread_points(int(params.get("punctures", 2)), ambient)
        spec = dict(params.get("family") or {})
        spec["centers"] = F.tolist()
        spec["count_per_level"] = max(int(spec.get("count_per_level", 0)), len(F))
        family = family_from_params({**params, "ambient_dim": ambient, "family": spec}, seed)
        cert = nonvanishing_certificate(
            F, params.get("delta"), seed, family,
            lam1=float(params.get("lam1", 0.2)), lam2=float(params.get("lam2", 0.025)),
            r0=float(params.get("r0", 1.0)), n_jobs=int(params.get("n_jobs", 1)),
            budget=params.get("budget"))
        body = cert.to_record()
        body["reverify"] = verify_nonvanish_record(body)
        body["rows"] = cert.rows()
        return body

    def summary_row(self, record):
        return record["rows"][0] | {"operation": self.name,
                                    "reverified": record["reverify"]["ok"]}

    def failed(self, record):
        return record["rank"] < record["expected"] or not record["reverify"]["ok"]
