# plugins/plugin_base.py
"""Base class for operation plugins and the parameter helpers they share."""

import numpy as np

from cechkit.boundary_model import BallFamily, build_family
from cechkit.cover_engine import UniformCover, ball_cover, simplex_cap_cover, whole_cover
from cechkit.errors import ScenarioError
from cechkit.log import log
from cechkit.records import load_json
from cechkit.sphere_geometry import convex_cover, sample_net


class OperationPlugin:
    """Plugins inherit from this. run() returns a JSON-ready result body."""
    name = "operation"
    description = ""
    actions = ("run",)
    randomized = True

    def __init__(self, cfg=None):
        self.cfg = dict(cfg or {})

    def on_start(self):
        """Called once after the runner loads the plugin."""
        pass

    def needs_seed(self, params):
        return self.randomized

    def action(self, params):
        act = params.get("action") or self.actions[0]
        if act not in self.actions:
            raise ScenarioError(f"unknown action {act!r} for '{self.name}'",
                                allowed=list(self.actions))
        return act

    def run(self, params, seed):
        raise NotImplementedError

    def summary_row(self, record):
        return {"operation": self.name}

    def table_rows(self, record):
        """CSV rows for one result; one summary row unless a plugin has a table."""
        return [self.summary_row(record)]

    def failed(self, record):
        """True when the body records a failed check (runner exit code 1)."""
        return False


# ---------- Parameter helpers ----------

def need(params, key):
    if key not in params:
        raise ScenarioError(f"missing parameter '{key}'")
    return params[key]


def _family_record(path):
    data = load_json(path, None)
    if data is None:
        raise ScenarioError(f"family file not found: {path}")
    body = data.get("result", data)
    return body.get("family", body)


def family_from_params(params, seed):
    """A family read from params['family']['file'] or built from its fields."""
    spec = dict(params.get("family") or {})
    if "file" in spec:
        try:
            return BallFamily.from_record(_family_record(spec["file"]))
        except (KeyError, TypeError) as e:
            raise ScenarioError(f"malformed family file {spec['file']}: {e}") from e
    centers = spec.get("centers")
    family = build_family(
        levels=int(spec.get("levels", 2)),
        base_radius=float(spec.get("base_radius", 0.005)),
        ratio=float(spec.get("ratio", 1e-4)),
        count_per_level=int(spec.get("count_per_level", 3)),
        seed=int(spec.get("seed", seed if seed is not None else 0)),
        mode=spec.get("mode", "nested"),
        ambient_dim=int(params.get("ambient_dim", 3)),
        cutoff=float(spec.get("cutoff", 0.0)),
        centers=np.asarray(centers, dtype=float) if centers is not None else None,
    )
    log(f"[PLUGIN] family with {len(family)} balls")
    return family


def cover_from_spec(spec, net, seed, family=None):
    """Cover of a net from {"kind": caps|balls|convex|uniform|whole, ...}."""
    kind = spec.get("kind", "caps")
    ambient = net.ambient_dim
    if kind == "caps":
        return simplex_cap_cover(net, ambient)
    if kind == "balls":
        spacing = float(spec.get("spacing", 0.5))
        centers = sample_net(spacing, ambient, seed=seed).points.coords
        return ball_cover(net, centers, float(spec.get("radius", spacing)), family,
                          spec.get("level"), name=f"balls({spacing:g})")
    if kind == "convex":
        F = np.asarray(need(spec, "F"), dtype=float)
        return convex_cover(F, float(spec.get("max_diam", 1.0)), net,
                            float(spec.get("lam", 0.5)))
    if kind == "uniform":
        return UniformCover(float(need(spec, "radius")), family, spec.get("level"), net)
    if kind == "whole":
        return whole_cover(net, family)
    raise ScenarioError(f"unknown cover kind {kind!r}")


def spread_points(count, ambient_dim):
    """Up to 2d well-separated unit vectors: +e0, -e0, +e1, -e1, ..."""
    if not 1 <= count <= 2 * ambient_dim:
        raise ScenarioError(f"need 1 <= punctures <= {2 * ambient_dim}", punctures=count)
    rows = []
    for i in range(count):
        v = np.zeros(ambient_dim)
        v[i // 2] = 1.0 if i % 2 == 0 else -1.0
        rows.append(v)
    return np.array(rows)
