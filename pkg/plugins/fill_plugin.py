# plugins/fill_plugin.py
import numpy as np

from cechkit.cech_pipeline import refine_chain
from cechkit.chain_core import PointSet, fineness, geodesic_to_many, simplex
from cechkit.detour import cross_polytope_cycle, fill_input_field, stratum_fill
from cechkit.errors import CechError, PRECONDITION_FAILED
from cechkit.log import log
from cechkit.sphere_geometry import LatitudeMidpoint, _from_polar, bisect_to, normalize

from plugins.plugin_base import OperationPlugin, family_from_params


def clear_pole(family, n, clearance, rng, tries=500):
    """Random point whose clearance-ball stays in X_n."""
    for _ in range(tries):
        x = normalize(rng.standard_normal(family.ambient_dim))
        if not len(family):
            return x
        d = geodesic_to_many(family.centers, x)
        if (d - family.radii / n >= clearance).all():
            return x
    raise CechError(PRECONDITION_FAILED, "no pole with the requested clearance",
                    n=n, clearance=clearance)


class FillPlugin(OperationPlugin):
    name = "fill"
    description = "Stratum filling of a latitude cycle, or refinement of a coarse simplex"
    actions = ("run", "refine")

    def run(self, params, seed):
        act = self.action(params)
        family = family_from_params(params, seed)
        rng = np.random.default_rng([seed or 0, 3])
        n = int(params.get("n", 1))
        degree = int(params.get("degree", max(0, family.ambient_dim - 3)))
        delta = float(params.get("delta", 0.3))
        radius = float(params.get("radius", 0.2))
        strict = bool(params.get("strict", False))
        points = PointSet(family.ambient_dim)
        p = clear_pole(family, n, 1.5 * radius, rng)
        if act == "refine":
            frame = np.linalg.qr(np.column_stack(
                [p, rng.standard_normal((len(p), degree + 1))]))[0]
            verts = [points.add(_from_polar(p, radius, frame[:, j + 1])) for j in range(degree + 1)]
            c = simplex(*verts)
            out, refiner = refine_chain(c, points, delta, family, n, strict=strict)
            log(f"[PLUGIN] fill refine: {len(out)} simplices")
            return {"action": act, "degree": degree, "input_fineness": fineness(c, points),
                    "output_simplices": len(out), "output_fineness": fineness(out, points),
                    "refine": refiner.to_record()}
        c = cross_polytope_cycle(points, p, radius, degree)
        c = bisect_to(c, points, fill_input_field(n, delta, family, strict),
                      midpoint=LatitudeMidpoint(p, radius))
        d, table = stratum_fill(c, points, n, delta, family, strict,
                                n_jobs=int(params.get("n_jobs", 1)), return_table=True)
        log(f"[PLUGIN] fill run: {len(c)} -> {len(d)} simplices")
        return {"action": act, "degree": degree, "cycle_simplices": len(c),
                "cycle_fineness": fineness(c, points), "filler_simplices": len(d),
                "filler_fineness": fineness(d, points), "moduli": table.to_record()}

    def summary_row(self, record):
        row = {"operation": self.name, "action": record["action"], "degree": record["degree"]}
        if record["action"] == "refine":
            row.update(simplices=record["output_simplices"], fineness=record["output_fineness"])
        else:
            row.update(simplices=record["filler_simplices"], fineness=record["filler_fineness"],
                       f1=record["moduli"]["f1"])
        return row
