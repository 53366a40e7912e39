"""The parabolic ball family, its strata X_n, and chain projection onto strata.

Ball radii in a family are the scaled radii r_p/M; a point x lies in X_n iff
d(x, p) >= (r_p/M)/n for every center p.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import errors
from .chain_core import geodesic_to_many, support, vertex_map
from .config import config
from .errors import CechError
from .log import log
from .sphere_geometry import covering_radius, normalize, sample_net

_TOL = 1e-12


@dataclass
class BallFamily:
    centers: np.ndarray
    r_p: np.ndarray
    K: float = 9.0
    M: float = 162.0
    cutoff: float = 0.0
    params: dict = field(default_factory=dict)
    levels: np.ndarray = None

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.r_p = np.asarray(self.r_p, dtype=float).reshape(-1)
        if self.levels is None:
            self.levels = np.zeros(len(self.r_p), dtype=int)
        self.levels = np.asarray(self.levels, dtype=int)
        if self.M < 2 * self.K ** 2:
            raise ValueError(f"M={self.M} must be at least 2K^2={2 * self.K ** 2}")
        self._approx_cache = {}

    def __len__(self):
        return len(self.r_p)

    @property
    def ambient_dim(self):
        return self.centers.shape[1]

    @property
    def radii(self):
        return self.r_p / self.M

    def in_stratum(self, X, n):
        """Vectorized membership in X_n."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.ones(len(X), dtype=bool)
        if not len(self.r_p):
            return out
        thresh = self.radii / n
        for start in range(0, len(X), 8192):
            chunk = X[start:start + 8192]
            dots = np.clip(chunk @ self.centers.T, -1.0, 1.0)
            chordsq = np.maximum(0.0, 2.0 - 2.0 * dots)
            d = 2.0 * np.arcsin(np.minimum(1.0, np.sqrt(chordsq) / 2.0))
            out[start:start + 8192] = (d >= thresh * (1 - _TOL)).all(axis=1)
        return out

    def balls_containing(self, x, scale=1.0):
        d = geodesic_to_many(self.centers, x)
        return np.flatnonzero(d < self.radii * scale)

    def to_record(self):
        return {
            "centers": self.centers.tolist(),
            "r_p": self.r_p.tolist(),
            "levels": self.levels.tolist(),
            "K": self.K,
            "M": self.M,
            "cutoff": self.cutoff,
            "params": self.params,
        }

    @classmethod
    def from_record(cls, rec):
        return cls(np.array(rec["centers"], dtype=float), np.array(rec["r_p"], dtype=float),
                   float(rec["K"]), float(rec["M"]), float(rec.get("cutoff", 0.0)),
                   dict(rec.get("params", {})), np.array(rec.get("levels"), dtype=int)
                   if rec.get("levels") is not None else None)


def _random_unit(rng, dim):
    x = rng.standard_normal(dim)
    return x / np.linalg.norm(x)


def _tangent_step(p, r, rng):
    """Point at distance r from p in a random direction."""
    u = rng.standard_normal(len(p))
    u -= np.dot(u, p) * p
    u /= np.linalg.norm(u)
    return math.cos(r) * p + math.sin(r) * u


def build_family(levels, base_radius, ratio, count_per_level, seed, mode="nested",
                 K=None, M=None, ambient_dim=3, cutoff=0.0, margin=1.05, centers=None):
    """Synthetic ball packing whose intersecting pairs satisfy r(B) <= r(B')/K^4.

    ``base_radius`` is the level-0 ball radius r_p/M. In disjoint mode every
    pair keeps 2K-enlarged balls apart. In nested mode balls of one level are
    2K-separated and children are placed inside a parent of the level above.
    ``centers`` pins the level-0 centers.
    """
    K = config["K"] if K is None else K
    M = config["M"] if M is None else M
    rng = np.random.default_rng(seed)
    params = {"levels": levels, "base_radius": base_radius, "ratio": ratio,
              "count_per_level": count_per_level, "seed": seed, "mode": mode,
              "ambient_dim": ambient_dim, "margin": margin}
    if mode == "nested" and levels > 1 and ratio > K ** -4 * (1 + _TOL):
        raise CechError(errors.PACKING_FAILED,
                        "nested levels force intersections violating r <= r'/K^4",
                        ratio=ratio, limit=K ** -4)
    budget = config["packing_retries"]
    accepted, radii, level_of = [], [], []

    def fits(x, r, same_level_only=False, lv=None):
        for y, s, l in zip(accepted, radii, level_of):
            if same_level_only and l != lv:
                continue
            d = math.acos(max(-1.0, min(1.0, float(np.dot(x, y)))))
            if d < 2 * K * (r + s) * margin:
                return False
        return True

    pinned = [normalize(c) for c in centers] if centers is not None else []
    for lv in range(levels):
        r = base_radius * ratio ** lv
        placed, tries = 0, 0
        while placed < count_per_level:
            tries += 1
            if tries > budget:
                raise CechError(errors.PACKING_FAILED, "rejection budget exhausted",
                                level=lv, placed=placed, wanted=count_per_level)
            if lv == 0 and placed < len(pinned):
                x = pinned[placed]
            elif lv == 0 or mode == "disjoint":
                x = _random_unit(rng, ambient_dim)
            else:
                parents = [i for i, l in enumerate(level_of) if l == lv - 1]
                parent = parents[placed % len(parents)]
                rpar = radii[parent]
                x = _tangent_step(accepted[parent], rpar * rng.uniform(0.2, 0.8), rng)
            if not fits(x, r, same_level_only=(mode == "nested"), lv=lv):
                if lv == 0 and placed < len(pinned):
                    raise CechError(errors.PACKING_FAILED, "pinned centers too close",
                                    index=placed)
                continue
            accepted.append(np.asarray(x))
            radii.append(r)
            level_of.append(lv)
            placed += 1
    family = BallFamily(np.array(accepted), np.array(radii) * M, K, M, cutoff, params,
                        np.array(level_of))
    report = validate_separation(family)
    if not report["ok"]:
        raise CechError(errors.PACKING_FAILED, "generated family violates separation",
                        violations=report["violations"][:5])
    log(f"[MODEL] family: {len(family)} balls over {levels} levels ({mode})")
    return family


def validate_separation(f):
    """Exhaustive pairwise check of r(B) <= r(B')/K^4 for intersecting balls."""
    radii = f.radii
    violations = []
    pairs = 0
    for i in range(len(radii)):
        if not len(radii) - i - 1:
            break
        d = geodesic_to_many(f.centers[i + 1:], f.centers[i])
        for off in np.flatnonzero(d < radii[i] + radii[i + 1:]).tolist():
            j = i + 1 + off
            lo, hi = sorted((radii[i], radii[j]))
            if lo > hi / f.K ** 4 * (1 + 1e-9):
                violations.append([i, j, float(radii[i]), float(radii[j])])
        pairs += len(radii) - i - 1
    return {"ok": not violations, "pairs_checked": pairs, "violations": violations}


def stratum_membership(x, n, f):
    if n < 1:
        raise ValueError("strata are indexed from n = 1")
    return bool(f.in_stratum(np.asarray(x, dtype=float)[None, :], n)[0])


@dataclass
class StratumNet:
    points: object          # base PointSet shared between strata
    indices: np.ndarray     # base indices lying in X_n
    n: int
    eps: float
    covering_radius: float
    family: BallFamily

    @property
    def coords(self):
        return self.points.coords[self.indices]

    def nearest(self, X):
        """(distance, base index) of the nearest stratum net point, per row."""
        tree = getattr(self, "_tree", None)
        if tree is None:
            tree = cKDTree(self.coords)
            self._tree = tree
        dist, pos = tree.query(np.atleast_2d(X))
        return 2 * np.arcsin(np.clip(dist / 2, 0, 1)), self.indices[pos]

    def to_record(self):
        return {"n": self.n, "eps": self.eps, "covering_radius": self.covering_radius,
                "indices": self.indices.tolist()}


def stratum_net(family, n, eps, seed=0, base=None):
    """The base net restricted to X_n, with a covering-radius certificate."""
    if base is None:
        base = sample_net(eps, family.ambient_dim, seed=seed).points
    mask = family.in_stratum(base.coords, n)
    indices = np.flatnonzero(mask)
    check_pts = sample_net(eps / 3, family.ambient_dim, seed=seed + 1).points.coords
    check_pts = check_pts[family.in_stratum(check_pts, n)][: config["check_cap"]]
    cr = covering_radius(base.coords[indices], check_pts)
    return StratumNet(base, indices, n, eps, cr, family)


def radial_exit(x, f, n, cap=64):
    """Leave every (1/n)-ball by radial moves; returns (point, total distance moved)."""
    y = normalize(x)
    moved = 0.0
    radii = f.radii / n
    for _ in range(cap):
        d = geodesic_to_many(f.centers, y)
        inside = np.flatnonzero(d < radii * (1 - _TOL))
        if not len(inside):
            return y, moved
        b = inside[np.argmax(radii[inside])]
        p = f.centers[b]
        t = y - np.dot(y, p) * p
        norm = np.linalg.norm(t)
        if norm < 1e-15:
            t = np.eye(len(p))[int(np.argmin(np.abs(p)))]
            t = t - np.dot(t, p) * p
            norm = np.linalg.norm(t)
        u = t / norm
        r = radii[b] * (1 + 1e-9)
        target = math.cos(r) * p + math.sin(r) * u
        moved += float(geodesic_to_many(target[None, :], y)[0])
        y = target
    raise CechError(errors.TOO_FAR, "radial exit did not terminate", cap=cap)


def _sphere_ring(p, rho):
    """Points at distance rho from p along the projected coordinate axes."""
    dim = len(p)
    pts = []
    for axis in np.vstack([np.eye(dim), -np.eye(dim)]):
        t = axis - np.dot(axis, p) * p
        norm = np.linalg.norm(t)
        if norm < 1e-9:
            continue
        pts.append(math.cos(rho) * p + math.sin(rho) * t / norm)
    return np.array(pts).reshape(-1, dim)


def approx_radius(n, eps, f, check_pts=None):
    """Largest listed radius r such that X_n is eps-dense in S minus the
    (1/n)-balls of radius >= r. Radii below the family cutoff are ignored.

    Density is certified at the centers of the ignored balls lying in the
    truncated complement (worst points), at rings of points just outside
    every (1/n)-sphere and at optional ``check_pts`` rows. The rings on kept
    spheres sample the boundary of the truncated complement.
    """
    key = (n, float(eps), None if check_pts is None else id(check_pts))
    hit = f._approx_cache.get(key)
    if hit is not None:
        return hit
    radii = f.radii
    listed = sorted({float(r) for r in radii if r >= f.cutoff}, reverse=True)
    if not listed:
        return 0.0
    rings = np.vstack([_sphere_ring(p, rho / n * (1 + 1e-6))
                       for p, rho in zip(f.centers, radii)])
    result = listed[-1]
    for r in listed:
        kept = radii >= r
        ignored = np.flatnonzero(~kept)
        pts = np.vstack([f.centers[ignored], rings])
        if check_pts is not None:
            pts = np.vstack([pts, np.atleast_2d(check_pts)])
        ok = True
        for y in pts:
            d = geodesic_to_many(f.centers[kept], y)
            if (d < radii[kept] / n).any():
                continue
            try:
                _, dist = radial_exit(y, f, n)
            except CechError:
                dist = math.inf
            if dist > eps:
                ok = False
                break
        if ok:
            result = r
            break
    f._approx_cache[key] = result
    log(f"[MODEL] approx_radius(n={n}, eps={eps:.3g}) = {result:.4g}")
    return result


def project_to_stratum(c, points, n, eps, f, net=None, return_map=False):
    """Vertex-wise move of the support into X_n (net point or radial exit)."""
    mapping = {}
    moves = {}
    verts = sorted(support(c))
    if verts:
        inside = f.in_stratum(points.coords[verts], n)
        outside = [v for v, ok in zip(verts, inside) if not ok]
        for v in verts:
            mapping[v] = v
        if outside:
            X = points.coords[outside]
            if net is not None:
                dist, idx = net.nearest(X)
                targets = [net.points.coords[i] for i in idx]
            else:
                exits = [radial_exit(x, f, n) for x in X]
                targets = [e[0] for e in exits]
                dist = [e[1] for e in exits]
            for v, t, dv in zip(outside, targets, dist):
                if dv > eps * (1 + _TOL):
                    raise CechError(errors.TOO_FAR, "support point too far from the stratum",
                                    vertex=v, distance=float(dv), eps=eps)
                mapping[v] = points.intern(t)
                moves[v] = float(dv)
    out = vertex_map(c, mapping)
    if moves:
        log(f"[MODEL] projected {len(moves)} vertices to X_{n}, max move {max(moves.values()):.3g}")
    if return_map:
        return out, mapping
    return out
