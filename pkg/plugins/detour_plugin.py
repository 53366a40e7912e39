# plugins/detour_plugin.py
from cechkit.chain_core import PointSet, cone, fineness
from cechkit.detour import (
    cross_polytope_cycle, detour_balls, general_detour, input_field, represent_class,
)
from cechkit.errors import ScenarioError
from cechkit.log import log
from cechkit.sphere_geometry import DEFAULT_PROFILE, AnnularMidpoint, bisect_to

from plugins.plugin_base import OperationPlugin, family_from_params


class DetourPlugin(OperationPlugin):
    name = "detour"
    description = "Push a chain off the family balls, or represent an H_k(S - F) class"
    actions = ("run", "represent")

    def run(self, params, seed):
        act = self.action(params)
        family = family_from_params(params, seed)
        n_jobs = int(params.get("n_jobs", 1))
        delta = float(params.get("delta", 0.05))
        if act == "represent":
            F = family.centers[list(params.get("punctures", [0, 1]))]
            index = int(params.get("class_index", 0))
            sc, disc, N, derivation = represent_class(F, index, delta, family, n_jobs=n_jobs)
            log(f"[PLUGIN] detour represent: class {index} in X_{N}")
            return {"action": act, "class_index": index, "N": N, "simplices": len(disc),
                    "fineness": sc.fineness, "derivation": derivation}
        K = family.K
        which = int(params.get("around", 0))
        if not 0 <= which < len(family):
            raise ScenarioError("'around' must index a family ball", balls=len(family))
        balls = detour_balls(family, float(params.get("scale", 1.0)))
        homotopy = bool(params.get("homotopy", True))
        strict = bool(params.get("strict", False))
        points = PointSet(family.ambient_dim)
        p = family.centers[which]
        radius = float(params.get("radius", 3 * balls.radii[which]))
        # a k-disk through the ball center whose boundary latitude avoids the ball
        k = family.ambient_dim - 2
        c = cone(points.intern(p), cross_polytope_cycle(points, p, radius, k - 1))
        c = bisect_to(c, points, input_field(balls, delta, K, homotopy, strict, DEFAULT_PROFILE),
                      midpoint=AnnularMidpoint(p))
        report = general_detour(c, points, balls, delta, homotopy, strict=strict, n_jobs=n_jobs)
        return {"action": act, "status": report.status, "checks": report.checks,
                "meta": report.meta, "input_simplices": len(c),
                "output_simplices": len(report.output),
                "output_fineness": fineness(report.output, points),
                "balls": len(balls), "radius": radius}

    def summary_row(self, record):
        row = {"operation": self.name, "action": record["action"]}
        if record["action"] == "represent":
            row.update(class_index=record["class_index"], N=record["N"],
                       simplices=record["simplices"], fineness=record["fineness"])
        else:
            row.update(status=record["status"], simplices=record["output_simplices"],
                       fineness=record["output_fineness"])
        return row

    def failed(self, record):
        return record["action"] == "run" and record["status"] != "OK"
