"""Round-sphere geometry and the cycle fillers.

Fillers return discrete chains whose boundary equals the input cycle exactly.
Refinement is conforming longest-edge bisection; edges of boundary simplices
are never split, so boundary cells survive untouched.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import errors
from .chain_core import (
    Chain, PointSet, _sort_sign, boundary, chain_diameter, cone, fineness, geodesic,
    geodesic_to_many, is_cycle, is_reduced, orient, orientation_homotopy,
    prism, support,
)
from .config import config
from .errors import CechError
from .log import log

HALF_PI = math.pi / 2
_TOL = 1e-12


def normalize(x):
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x)


def chord(theta):
    """Euclidean chord length of an angular distance."""
    return 2.0 * math.sin(min(theta, math.pi) / 2.0)


class RoundMetric:
    """Geodesic (angular) distance on the unit sphere in R^ambient_dim."""

    def __init__(self, ambient_dim):
        self.ambient_dim = int(ambient_dim)

    def distance(self, u, v):
        return geodesic(tuple(u), tuple(v))

    __call__ = distance

    def to_many(self, X, y):
        return geodesic_to_many(X, y)

    def midpoint(self, u, v):
        return normalize(np.asarray(u, dtype=float) + np.asarray(v, dtype=float))


@dataclass(frozen=True)
class FillerProfile:
    K_fill: float = 9.0

    def __post_init__(self):
        if self.K_fill < 9:
            raise ValueError(f"K_fill must be >= 9, got {self.K_fill}")

    def g(self, delta):
        return delta / 2.0

    def g_iter(self, delta, m):
        return delta / 2.0 ** m

    def to_record(self):
        return {"K_fill": self.K_fill, "fineness_modulus": "delta/2"}


DEFAULT_PROFILE = FillerProfile(config["K_fill"])


# ---------- Straight chains ----------

class StraightChain:
    """Discrete chain read as a sum of geodesic simplices (vertex diameter <= pi/2)."""

    def __init__(self, chain, points):
        self.chain = chain
        self.points = points

    @property
    def dim(self):
        return self.chain.dim

    def fineness(self):
        return fineness(self.chain, self.points)

    def boundary(self):
        return StraightChain(boundary(self.chain), self.points)

    def __eq__(self, other):
        return isinstance(other, StraightChain) and self.chain == other.chain

    __hash__ = None

    def __add__(self, other):
        return StraightChain(self.chain + other.chain, self.points)

    def sample_points(self, simplex, resolution=4):
        """Barycentric grid points of one straight simplex, projected to the sphere."""
        X = self.points.coords[list(simplex)]
        n = len(simplex)
        out = []
        for weights in _grid(n, resolution):
            y = np.asarray(weights, dtype=float) @ X
            out.append(y / np.linalg.norm(y))
        return np.array(out)

    def to_record(self):
        return self.chain.to_record()


def _compositions(total, n):
    if n == 1:
        yield (total,)
        return
    for i in range(total + 1):
        for rest in _compositions(total - i, n - 1):
            yield (i,) + rest


def _grid(n, resolution):
    for parts in _compositions(resolution, n):
        yield tuple(p / resolution for p in parts)


def straighten(c, points):
    for s in c.terms:
        if points.diameter(s) > HALF_PI + _TOL:
            raise CechError(errors.FINENESS_EXCEEDED,
                            "simplex too large to straighten",
                            simplex=s, diameter=points.diameter(s))
    return StraightChain(c, points)


def discretize(sc):
    return sc.chain


# ---------- Midpoint rules ----------

def geodesic_midpoint(points, a, b):
    return points.add(np.asarray(points.row(a)) + np.asarray(points.row(b)))


def _polar(p, x):
    """Distance from p and unit tangent direction at p towards x."""
    t = x - np.dot(x, p) * p
    norm = np.linalg.norm(t)
    r = geodesic(tuple(p), tuple(x))
    return r, (t / norm if norm > 1e-15 else None)


def _from_polar(p, r, u):
    return math.cos(r) * p + math.sin(r) * u


class AnnularMidpoint:
    """Average radius and direction about a pole p; keeps new points inside annuli."""

    def __init__(self, p):
        self.p = normalize(p)

    def _direction(self, ua, ub):
        if ua is None:
            return ub
        if ub is None:
            return ua
        s = ua + ub
        n = np.linalg.norm(s)
        return s / n if n > 1e-9 else None

    def __call__(self, points, a, b):
        xa, xb = np.asarray(points.row(a)), np.asarray(points.row(b))
        ra, ua = _polar(self.p, xa)
        rb, ub = _polar(self.p, xb)
        u = self._direction(ua, ub)
        if u is None:
            return geodesic_midpoint(points, a, b)
        return points.add(_from_polar(self.p, self.radius(ra, rb), u))

    def radius(self, ra, rb):
        return 0.5 * (ra + rb)


class LatitudeMidpoint(AnnularMidpoint):
    """Midpoints pinned to the latitude sphere of radius rho about p."""

    def __init__(self, p, rho):
        super().__init__(p)
        self.rho = float(rho)

    def radius(self, ra, rb):
        return self.rho


# ---------- Fineness targets ----------

@dataclass
class FinenessField:
    """Per-vertex fineness target: ``default`` outside all zones, zone value inside."""

    default: float
    zones: list = field(default_factory=list)  # (centers array, radii array, fineness)

    def __post_init__(self):
        self._cache = {}

    def add_zone(self, centers, radii, target):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),)).copy()
        self.zones.append((centers, radii, float(target)))
        self._cache.clear()

    def vertex_target(self, points, v):
        t = self._cache.get((id(points), v))
        if t is None:
            t = self.default
            x = points.row(v)
            for centers, radii, target in self.zones:
                if target < t and np.any(geodesic_to_many(centers, x) <= radii):
                    t = target
            self._cache[(id(points), v)] = t
        return t

    def simplex_target(self, points, s):
        return min(self.vertex_target(points, v) for v in s)

    def scaled(self, factor):
        out = FinenessField(self.default * factor)
        for centers, radii, target in self.zones:
            out.add_zone(centers, radii, target * factor)
        return out

    @property
    def floor(self):
        return min([self.default] + [z[2] for z in self.zones])


def as_field(target):
    return target if isinstance(target, FinenessField) else FinenessField(float(target))


def locally_fine(c, points, target):
    f = as_field(target)
    return all(points.diameter(s) <= f.simplex_target(points, s) * (1 + _TOL) for s in c.terms)


# ---------- Subdivision ----------

def _edges(s):
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            a, b = s[i], s[j]
            yield (a, b) if a < b else (b, a)


def _accumulate(terms, u, k):
    """Add k*u to ``terms`` in sorted-tuple form; degenerate pieces vanish."""
    if len(set(u)) < len(u):
        return None
    key = tuple(sorted(u))
    nk = terms.get(key, 0) + _sort_sign(u) * k
    if nk:
        terms[key] = nk
    else:
        terms.pop(key, None)
    return key


def bisect_to(c, points, target, midpoint=None, round_cap=None):
    """Conforming longest-edge bisection until every simplex meets ``target``.

    Input simplices must not repeat vertices. The chain is worked on in sorted
    form: splitting edge {a,b} at m sends a simplex containing both to
    s[b->m] + s[a->m], each piece re-sorted with its sign, which is a chain map
    on sorted chains. Edges of boundary simplices are never split. For an
    unsorted input of dimension >= 2 the orientation homotopy of its boundary
    is added, so ``boundary(result) == boundary(c)`` holds exactly.
    """
    for s in c.terms:
        if len(set(s)) < len(s):
            raise ValueError("bisect_to needs simplices without repeated vertices")
    field_ = as_field(target)
    midpoint = midpoint or geodesic_midpoint
    round_cap = round_cap or config["bisect_round_cap"]
    sorted_c = orient(c)
    protected = set()
    for s in boundary(sorted_c).terms:
        protected.update(_edges(s))
    terms = dict(sorted_c.terms)
    for rnd in range(round_cap):
        over = [s for s in terms
                if points.diameter(s) > field_.simplex_target(points, s) * (1 + _TOL)]
        if not over:
            log(f"[SUBDIV] done after {rnd} rounds, {len(terms)} simplices")
            return _restore_boundary(Chain._raw(terms, c.dim), c)
        index = {}
        for s in terms:
            for e in _edges(s):
                index.setdefault(e, []).append(s)
        wanted = set()
        for s in over:
            free = [e for e in _edges(s) if e not in protected]
            if not free:
                raise CechError(errors.TARGET_TOO_FINE,
                                "oversized simplex has only boundary edges",
                                simplex=s, diameter=points.diameter(s))
            wanted.add(min(free, key=lambda e: (-points.distance(*e), e)))
        touched = set()
        for e in sorted(wanted, key=lambda e: (-points.distance(*e), e)):
            owners = index[e]
            if any(t in touched for t in owners):
                continue
            a, b = e
            m = midpoint(points, a, b)
            for t in owners:
                k = terms.pop(t)
                touched.add(t)
                for u in (tuple(m if v == b else v for v in t),
                          tuple(m if v == a else v for v in t)):
                    key = _accumulate(terms, u, k)
                    if key is not None:
                        touched.add(key)
    raise CechError(errors.TARGET_TOO_FINE, "bisection round cap reached",
                    rounds=round_cap, simplices=len(terms))


def _restore_boundary(refined, c):
    if c.dim < 2:
        return refined
    b = boundary(c)
    if orient(b) == b:
        return refined
    return refined + orientation_homotopy()(b)


def _refine_exact(d, points, target, midpoint=None):
    """Refined chain with boundary exactly boundary(d); d may hold degenerate simplices."""
    b = boundary(d)
    return bisect_to(orient(d), points, target, midpoint) + orientation_homotopy()(b)


def relative_subdivide(sc, target_fineness, midpoint=None):
    """Refine a straight chain to the target without touching its boundary cells."""
    points = sc.points
    field_ = as_field(target_fineness)
    for t in boundary(sc.chain).terms:
        if 2 * points.diameter(t) > field_.simplex_target(points, t) * (1 + _TOL):
            raise CechError(errors.TARGET_TOO_FINE,
                            "target below twice the boundary fineness",
                            boundary_simplex=t, diameter=points.diameter(t),
                            target=field_.simplex_target(points, t))
    if locally_fine(sc.chain, points, field_):
        return sc
    return StraightChain(_refine_exact(sc.chain, points, field_, midpoint), points)


# ---------- Fillers ----------

def _check_cycle(c, points, delta, profile, max_dim, code_dim="i <= k"):
    if c.dim > max_dim:
        raise CechError(errors.PRECONDITION_FAILED, f"cycle dimension violates {code_dim}",
                        dimension=c.dim, limit=max_dim)
    if not is_cycle(c) or not is_reduced(c):
        raise CechError(errors.PRECONDITION_FAILED, "input is not a reduced cycle")
    fin = fineness(c, points)
    if fin > profile.g(delta) * (1 + _TOL):
        raise CechError(errors.FINENESS_EXCEEDED, "cycle coarser than g(delta)",
                        fineness=fin, bound=profile.g(delta))


_APEX_POOL = {}


def _apex_pool(ambient_dim):
    pool = _APEX_POOL.get(ambient_dim)
    if pool is None:
        if ambient_dim == 3:
            pool = fibonacci_sphere(2000)
        else:
            rng = np.random.default_rng(0)
            pool = rng.standard_normal((4000, ambient_dim))
            pool /= np.linalg.norm(pool, axis=1, keepdims=True)
        _APEX_POOL[ambient_dim] = pool
    return pool


def far_apex(points, vertices):
    """Pool point farthest from the antipodes of ``vertices`` (lowest index on ties)."""
    pool = _apex_pool(points.ambient_dim)
    anti = -points.coords[sorted(vertices)]
    tree = cKDTree(anti)
    dist, _ = tree.query(pool)
    best = int(np.argmax(dist))
    return pool[best], float(2 * np.arcsin(min(1.0, dist[best] / 2)))


def fill_cycle(c, points, delta, profile=DEFAULT_PROFILE, local=None):
    """Fill a reduced i-cycle (i <= k) by a delta-fine chain.

    ``local`` optionally replaces the uniform target by a FinenessField whose
    default is delta.
    """
    k = points.ambient_dim - 2
    _check_cycle(c, points, delta, profile, k)
    if not c:
        return Chain.zero(c.dim + 1)
    target = local if local is not None else delta
    verts = support(c)
    diam = chain_diameter(c, points)
    if diam < math.pi / 4:
        apex = min(verts)
        d = cone(apex, c)
        log(f"[FILL] cone from support vertex {apex}, diam {diam:.4g}")
        return relative_subdivide(StraightChain(d, points), target).chain
    x, margin = far_apex(points, verts)
    apex = points.intern(x)
    log(f"[FILL] far cone, antipode margin {margin:.4g}")
    return _refine_exact(cone(apex, c), points, target)


def _check_annulus(c, points, p, r1, r2):
    for v in support(c):
        r = points.distance_to(v, p)
        if r < r1 * (1 - _TOL) or r > r2 * (1 + _TOL):
            raise CechError(errors.SUPPORT_OUTSIDE_ANNULUS, "support point outside annulus",
                            vertex=v, distance=r, r1=r1, r2=r2)


def fill_in_annulus(c, points, p, r1, r2, delta, profile=DEFAULT_PROFILE, local=None):
    """Fill a reduced i-cycle (i < k) inside A(p; r1/K, K r2)."""
    k = points.ambient_dim - 2
    if c.dim >= k:
        raise CechError(errors.PRECONDITION_FAILED, "annulus filling needs i < k",
                        dimension=c.dim, k=k)
    if not (r1 < r2):
        raise CechError(errors.PRECONDITION_FAILED, "annulus needs r1 < r2", r1=r1, r2=r2)
    if not c:
        return Chain.zero(c.dim + 1)
    p = normalize(p)
    _check_annulus(c, points, p, r1, r2)
    _check_cycle(c, points, delta, profile, k - 1, "i < k")
    target = local if local is not None else delta
    verts = sorted(support(c))
    radii = [points.distance_to(v, p) for v in verts]
    lo, hi = min(radii), max(radii)
    diam = chain_diameter(c, points)
    K = profile.K_fill
    if diam <= lo * (1 - 1 / K) and diam < math.pi / 4:
        d = cone(verts[0], c)
        return relative_subdivide(StraightChain(d, points), target).chain
    rho = math.sqrt(lo * hi)
    lift = {}
    dirs = []
    for v in verts:
        _, u = _polar(p, np.asarray(points.row(v)))
        if u is None:
            raise CechError(errors.PRECONDITION_FAILED, "support point antipodal to the pole",
                            vertex=v)
        dirs.append(u)
        lift[v] = points.add(_from_polar(p, rho, u))
    bridge = prism(c, lift, lambda v: v)
    lifted = Chain._raw({tuple(lift[v] for v in s): kf for s, kf in c.terms.items()}, c.dim)
    w = _latitude_direction(p, np.array(dirs), points.ambient_dim)
    apex = points.add(_from_polar(p, rho, w))
    d = bridge + cone(apex, lifted)
    log(f"[FILL] annulus bridge at rho {rho:.4g} ({len(d)} simplices before refinement)")
    return _refine_exact(d, points, target, AnnularMidpoint(p))


def _latitude_direction(p, dirs, ambient_dim):
    """Tangent direction at p farthest from every antipodal direction in ``dirs``."""
    pool = _apex_pool(ambient_dim)
    tangent = pool - np.outer(pool @ p, p)
    norms = np.linalg.norm(tangent, axis=1)
    keep = norms > 1e-6
    tangent = tangent[keep] / norms[keep][:, None]
    scores = (tangent @ (-dirs).T).max(axis=1)
    return tangent[int(np.argmin(scores))]


def fill_in_ball(c, points, p, r2, delta, profile=DEFAULT_PROFILE, local=None):
    """Fill a reduced i-cycle inside B(p, K r2) by coning from p."""
    k = points.ambient_dim - 2
    K = profile.K_fill
    if r2 >= math.pi / (2 * K):
        raise CechError(errors.PRECONDITION_FAILED, "ball filling needs r2 < pi/(2K)",
                        r2=r2, limit=math.pi / (2 * K))
    if not c:
        return Chain.zero(c.dim + 1)
    p = normalize(p)
    for v in support(c):
        r = points.distance_to(v, p)
        if r >= r2 * (1 + _TOL):
            raise CechError(errors.SUPPORT_OUTSIDE_BALL, "support point outside ball",
                            vertex=v, distance=r, r2=r2)
    _check_cycle(c, points, delta, profile, k)
    target = local if local is not None else delta
    apex = points.intern(p)
    return relative_subdivide(StraightChain(cone(apex, c), points), target).chain


# ---------- Nets and convex covers ----------

def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    phi = math.pi * (3 - math.sqrt(5)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _sphere_volume(ambient_dim):
    return 2 * math.pi ** (ambient_dim / 2) / math.gamma(ambient_dim / 2)


def _random_rotation(ambient_dim, rng):
    q, r = np.linalg.qr(rng.standard_normal((ambient_dim, ambient_dim)))
    return q * np.sign(np.diag(r))


def _pool(eps, ambient_dim, rng):
    cap = config["net_pool_cap"]
    want = _sphere_volume(ambient_dim) / (eps / 4) ** (ambient_dim - 1)
    n = int(min(cap, max(2000, want)))
    if ambient_dim == 3:
        return fibonacci_sphere(n) @ _random_rotation(3, rng).T
    X = rng.standard_normal((n, ambient_dim))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


@dataclass
class Net:
    points: PointSet
    eps: float
    covering_radius: float
    min_separation: float
    seed: int

    def to_record(self):
        return {
            "eps": self.eps,
            "covering_radius": self.covering_radius,
            "min_separation": self.min_separation,
            "seed": self.seed,
            "points": self.points.to_record(),
        }


def greedy_separated(X, sep):
    """Greedy maximal subset of rows of X with pairwise angular distance >= sep."""
    tree = cKDTree(X)
    alive = np.ones(len(X), dtype=bool)
    keep = []
    radius = chord(sep) * (1 - 1e-12)
    for i in range(len(X)):
        if not alive[i]:
            continue
        keep.append(i)
        for j in tree.query_ball_point(X[i], radius):
            alive[j] = False
    return np.array(keep, dtype=int)


def covering_radius(net_coords, check_pts):
    if len(check_pts) == 0:
        return 0.0
    if len(net_coords) == 0:
        return math.pi
    dist, _ = cKDTree(net_coords).query(check_pts)
    return float(2 * np.arcsin(min(1.0, dist.max() / 2)))


def sample_net(eps, ambient_dim=3, region=None, seed=0):
    """Seeded eps-net of ``region`` (a vectorized predicate on coordinate rows)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = np.random.default_rng(seed)
    pool = _pool(eps, ambient_dim, rng)
    if region is not None:
        pool = pool[np.asarray(region(pool), dtype=bool)]
    keep = greedy_separated(pool, eps / 2)
    coords = pool[keep]
    check_pts = _pool(eps, ambient_dim, np.random.default_rng([seed, 1]))[: config["check_cap"]]
    if region is not None:
        check_pts = check_pts[np.asarray(region(check_pts), dtype=bool)]
    cover_r = covering_radius(coords, check_pts)
    sep = math.pi
    if len(coords) > 1:
        d, _ = cKDTree(coords).query(coords, k=2)
        sep = float(2 * np.arcsin(min(1.0, d[:, 1].min() / 2)))
    log(f"[NET] eps {eps:.4g}: {len(coords)} points, covering radius {cover_r:.4g}")
    return Net(PointSet(ambient_dim, coords), eps, cover_r, sep, seed)


def convex_cover(F, max_diam, net, lam=0.5):
    """Cover of the net by open balls of diameter <= max_diam avoiding F.

    Radius at x is min(max_diam/2, lam * d(x, F)); centers are chosen greedily
    in index order among points not yet covered.
    """
    from .cover_engine import BallPiece, Cover, OpenSet

    if max_diam > HALF_PI + _TOL:
        raise ValueError("convex cover needs max_diam <= pi/2")
    X = net.coords
    F = np.atleast_2d(np.asarray(F, dtype=float)) if len(F) else np.zeros((0, X.shape[1]))
    if len(F):
        dF, _ = cKDTree(F).query(X)
        dF = 2 * np.arcsin(np.clip(dF / 2, 0, 1))
    else:
        dF = np.full(len(X), math.inf)
    radius = np.minimum(max_diam / 2, lam * dF)
    covered = np.zeros(len(X), dtype=bool)
    tree = cKDTree(X)
    sets = []
    for i in range(len(X)):
        if covered[i] or radius[i] <= 0:
            continue
        r = float(radius[i])
        sets.append(OpenSet(len(sets), (BallPiece(tuple(X[i]), r),), generator=i))
        for j in tree.query_ball_point(X[i], chord(r)):
            if geodesic_to_many(X[j:j + 1], X[i])[0] < r:
                covered[j] = True
    log(f"[COVER] convex cover: {len(sets)} balls")
    return Cover(sets, net)
