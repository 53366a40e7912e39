"""Open covers decided on a working net, and the family-map calculus between them.

Every predicate (containment, refinement, super-refinement, Lebesgue number) is
evaluated on the net. Sets keep an intensional descriptor (balls, stratum
floor) when one exists, so tininess of arbitrary points stays decidable.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import errors
from .chain_core import Chain, boundary, geodesic_to_many, prism, vertex_map
from .errors import CechError
from .log import log

_TOL = 1e-12


def _chord(theta):
    return 2.0 * math.sin(min(theta, math.pi) / 2.0)


def _angle(chord_len):
    return 2.0 * np.arcsin(np.clip(np.asarray(chord_len) / 2.0, 0.0, 1.0))


def _bits(mask):
    """Python-int bitset of the True positions of a boolean vector."""
    idx = np.flatnonzero(mask)
    out = 0
    for i in idx.tolist():
        out |= 1 << i
    return out


# ---------- Sets and covers ----------

@dataclass(frozen=True)
class BallPiece:
    center: tuple
    radius: float

    def contains(self, X):
        return geodesic_to_many(X, self.center) < self.radius


@dataclass
class OpenSet:
    """Union of open balls (or an explicit net subset, or everything),
    intersected with X_level and with X_excluded removed."""

    id: int
    pieces: tuple = ()
    level: int = None
    excluded_level: int = None
    generator: int = None
    members: frozenset = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def is_whole(self):
        return not self.pieces and self.members is None

    def contains(self, X, family=None, net_lookup=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.members is not None:
            if net_lookup is None:
                raise ValueError("explicit sets need a net lookup")
            inside = np.array([net_lookup(tuple(float(v) for v in x)) in self.members for x in X])
        elif self.pieces:
            inside = np.zeros(len(X), dtype=bool)
            for piece in self.pieces:
                inside |= piece.contains(X)
        else:
            inside = np.ones(len(X), dtype=bool)
        if family is not None and self.level is not None:
            inside &= family.in_stratum(X, self.level)
        if family is not None and self.excluded_level is not None:
            inside &= ~family.in_stratum(X, self.excluded_level)
        return inside

    def to_record(self):
        rec = {"id": self.id, "level": self.level, "excluded_level": self.excluded_level,
               "generator": self.generator, "label": self.label,
               "pieces": [{"center": list(p.center), "radius": p.radius} for p in self.pieces]}
        if self.members is not None:
            rec["members"] = sorted(self.members)
        return rec

    @classmethod
    def from_record(cls, rec):
        pieces = tuple(BallPiece(tuple(p["center"]), float(p["radius"])) for p in rec["pieces"])
        members = frozenset(rec["members"]) if "members" in rec else None
        return cls(rec["id"], pieces, rec.get("level"), rec.get("excluded_level"),
                   rec.get("generator"), members, rec.get("label", ""))


class Cover:
    """Finite family of open sets over a working net."""

    def __init__(self, sets, net, family=None, domain=None, name=""):
        self.sets = list(sets)
        self.net = net
        self.family = family
        self.name = name
        n = len(net)
        self.domain = np.arange(n) if domain is None else np.asarray(sorted(domain), dtype=int)
        self._membership = None
        self._bitsets = None
        self._piece_tree = None

    def __len__(self):
        return len(self.sets)

    def _lookup(self, row):
        return self.net._lookup.get(row, -1)

    @property
    def membership(self):
        """Boolean matrix (net points x sets); rows outside the domain are False."""
        if self._membership is None:
            X = self.net.coords
            M = np.zeros((len(X), len(self.sets)), dtype=bool)
            dom = self.domain
            for j, s in enumerate(self.sets):
                if s.members is not None:
                    col = np.zeros(len(X), dtype=bool)
                    col[sorted(s.members)] = True
                    M[dom, j] = col[dom]
                else:
                    M[dom, j] = s.contains(X[dom], self.family)
            self._membership = M
        return self._membership

    @property
    def bitsets(self):
        if self._bitsets is None:
            M = self.membership
            self._bitsets = [_bits(M[:, j]) for j in range(len(self.sets))]
        return self._bitsets

    def sets_containing(self, i):
        return [int(j) for j in np.flatnonzero(self.membership[i])]

    def uncovered(self):
        M = self.membership
        return [int(i) for i in self.domain if not M[i].any()]

    def _pieces_index(self):
        if self._piece_tree is None:
            centers, owners, radii = [], [], []
            for s in self.sets:
                for p in s.pieces:
                    centers.append(p.center)
                    owners.append(s.id)
                    radii.append(p.radius)
            tree = cKDTree(np.array(centers)) if centers else None
            self._piece_tree = (tree, np.array(owners, dtype=int),
                                max(radii, default=0.0))
        return self._piece_tree

    def _candidates(self, x):
        candidates = [s.id for s in self.sets if s.is_whole or s.members is not None]
        tree, owners, rmax = self._pieces_index()
        if tree is not None:
            near = tree.query_ball_point(x, _chord(rmax) + 1e-12)
            candidates.extend(int(owners[i]) for i in near)
        return sorted(set(candidates))

    def containing_sets(self, X):
        """Ids of sets containing every row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return [j for j in self._candidates(X[0])
                if self.sets[j].contains(X, self.family, self._lookup).all()]

    def tiny(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return any(self.sets[j].contains(X, self.family, self._lookup).all()
                   for j in self._candidates(X[0]))

    def to_record(self):
        M = self.membership
        return {
            "name": self.name,
            "sets": [s.to_record() for s in self.sets],
            "domain": self.domain.tolist(),
            "membership": ["".join("1" if b else "0" for b in M[:, j]) for j in range(M.shape[1])],
        }


class UniformCover:
    """All open r-balls, intersected with X_level when a family is given.

    The star of x (union of the sets through x) is B(x, 2r) within X_level.
    """

    def __init__(self, radius, family=None, level=None, net=None, name=""):
        self.radius = float(radius)
        self.family = family
        self.level = level
        self.net = net
        self.name = name or f"uniform({self.radius:.4g})"

    def _in_level(self, X):
        if self.family is None or self.level is None:
            return np.ones(len(X), dtype=bool)
        return self.family.in_stratum(X, self.level)

    def tiny(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self._in_level(X).all():
            return False
        centroid = X.sum(axis=0)
        norm = np.linalg.norm(centroid)
        candidates = [centroid / norm] if norm > 1e-12 else []
        candidates.extend(X)
        return any(geodesic_to_many(X, y).max() < self.radius for y in candidates)

    def to_record(self):
        return {"name": self.name, "uniform_radius": self.radius, "level": self.level}


def ball_cover(net, centers, radius, family=None, level=None, name=""):
    sets = [OpenSet(i, (BallPiece(tuple(map(float, c)), float(radius)),), level=level)
            for i, c in enumerate(np.atleast_2d(centers))]
    return Cover(sets, net, family, name=name)


def whole_cover(net, family=None):
    return Cover([OpenSet(0, label="whole")], net, family, name="whole")


def simplex_cap_cover(net, ambient_dim):
    """Good cover of S^d by d+2 caps around the vertices of a regular simplex.

    Caps have radius strictly between arccos(1/(d+1)) and pi/2, so every
    (d+1)-fold intersection is nonempty and the (d+2)-fold one is empty.
    """
    d = ambient_dim - 1
    E = np.eye(d + 2)
    V = E - E.mean(axis=0)
    basis = np.linalg.svd(V)[2][: d + 1]
    verts = V @ basis.T
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    radius = 0.5 * (math.acos(1.0 / (d + 1)) + math.pi / 2)
    return ball_cover(net, verts, radius, name=f"simplex-caps-S{d}")


# ---------- Refinement predicates ----------

def _set_coords(cover, j):
    return cover.net.coords[np.flatnonzero(cover.membership[:, j])]


def is_refinement(fine, coarse):
    """(ok, spouse map) with spouse = lowest coarse id containing each fine set."""
    spouse = {}
    cb = coarse.bitsets
    ok = True
    for j, bits in enumerate(fine.bitsets):
        target = next((i for i, b in enumerate(cb) if bits & ~b == 0), None)
        if target is None:
            ok = False
            continue
        spouse[j] = target
    return ok, spouse


def _star_bits_finite(fine, i):
    bits = 0
    for j in fine.sets_containing(i):
        bits |= fine.bitsets[j]
    return bits


def _star_bits_uniform(fine, coarse, i, tree):
    net = coarse.net
    x = net.coords[i]
    near = tree.query_ball_point(x, _chord(2 * fine.radius))
    near = [j for j in near if geodesic_to_many(net.coords[j:j + 1], x)[0] < 2 * fine.radius]
    near = np.array(sorted(near), dtype=int)
    if len(near) and fine.family is not None and fine.level is not None:
        near = near[fine.family.in_stratum(net.coords[near], fine.level)]
    bits = 0
    for j in near.tolist():
        bits |= 1 << j
    return bits


def is_super_refinement(fine, coarse):
    """(ok, parent map over net indices, failing net indices)."""
    if isinstance(fine, UniformCover) and isinstance(coarse, UniformCover):
        ok = 2 * fine.radius <= coarse.radius * (1 + _TOL)
        return ok, {"analytic": "star B(x,2r') inside B(x,r)"} if ok else {}, [] if ok else ["all"]
    parent, failures = {}, []
    if isinstance(coarse, UniformCover):
        X = fine.net.coords
        for i in fine.domain.tolist():
            owners = fine.sets_containing(i)
            star = np.flatnonzero(fine.membership[:, owners].any(axis=1)) if owners else [i]
            if coarse.tiny(X[star]):
                parent[i] = "ball"
            else:
                failures.append(i)
        return not failures, parent, failures
    cb = coarse.bitsets
    tree = cKDTree(coarse.net.coords) if isinstance(fine, UniformCover) else None
    domain = coarse.domain if isinstance(fine, UniformCover) else fine.domain
    for i in domain.tolist():
        if isinstance(fine, UniformCover):
            if fine.family is not None and fine.level is not None and \
                    not fine.family.in_stratum(coarse.net.coords[i:i + 1], fine.level)[0]:
                continue
            star = _star_bits_uniform(fine, coarse, i, tree)
        else:
            star = _star_bits_finite(fine, i)
        target = next((j for j, b in enumerate(cb) if star & ~b == 0), None)
        if target is None:
            failures.append(i)
        else:
            parent[i] = target
    if failures:
        log(f"[COVER] super-refinement fails at {len(failures)} net points")
    return not failures, parent, failures


def lebesgue_number(cover, domain=None):
    """min over net points of the deepest containment, depth measured on the net."""
    net = cover.net
    X = net.coords
    dom = cover.domain if domain is None else np.asarray(domain, dtype=int)
    in_dom = np.zeros(len(X), dtype=bool)
    in_dom[dom] = True
    best = np.zeros(len(X))
    M = cover.membership
    for j in range(len(cover.sets)):
        inside = M[:, j] & in_dom
        if not inside.any():
            continue
        outside = ~M[:, j] & in_dom
        if not outside.any():
            best[inside] = math.pi
            continue
        dist, _ = cKDTree(X[outside]).query(X[inside])
        best[inside] = np.maximum(best[inside], _angle(dist))
    return float(best[dom].min()) if len(dom) else math.pi


# ---------- Family maps ----------

@dataclass
class FamilyMap:
    kind: str
    mapping: dict
    source: object
    target: object
    report: dict = field(default_factory=dict)

    def __call__(self, key):
        return self.mapping[key]

    def to_record(self):
        return {"kind": self.kind, "mapping": {str(k): v for k, v in sorted(self.mapping.items())},
                "report": self.report}


def make_family_map(kind, fine, coarse=None, via=None):
    """Build and verify a child, spouse, parent or sibling map.

    child: fine = the cover whose children are taken (coarse optional, used for
    tininess checks later). spouse/parent: fine -> coarse. sibling: fine = O'',
    via = O', coarse = O (checks land in O).
    """
    if kind == "child":
        mapping = {}
        M = fine.membership
        for j in range(len(fine.sets)):
            members = np.flatnonzero(M[:, j])
            if not len(members):
                raise CechError(errors.NO_VALID_MAP, "set has no net point", set=j)
            mapping[j] = int(members[0])
        return FamilyMap("child", mapping, fine, coarse, {"sets": len(mapping)})
    if kind == "spouse":
        ok, spouse = is_refinement(fine, coarse)
        if not ok:
            raise CechError(errors.NO_VALID_MAP, "not a refinement")
        return FamilyMap("spouse", spouse, fine, coarse, {"sets": len(spouse)})
    if kind == "parent":
        ok, parent, failures = is_super_refinement(fine, coarse)
        if not ok:
            raise CechError(errors.NO_VALID_MAP, "not a super-refinement",
                            failing_points=failures[:10])
        return FamilyMap("parent", parent, fine, coarse, {"points": len(parent)})
    if kind == "sibling":
        parent = make_family_map("parent", fine, via)
        child = make_family_map("child", via)
        mapping = {x: child(parent(x)) for x in parent.mapping}
        return FamilyMap("sibling", mapping, fine, coarse,
                         {"points": len(mapping), "via": getattr(via, "name", "")})
    raise ValueError(f"unknown family map kind {kind!r}")


def _nerve_welldef(cover, s):
    bits = -1
    for v in set(s):
        bits &= cover.bitsets[v]
    return bits != 0


class InducedChainMap:
    """Chain map induced by a family map, with per-simplex well-definedness checks."""

    def __init__(self, fmap):
        self.fmap = fmap
        self._ok = {}

    @property
    def lands_in_nerve(self):
        return self.fmap.kind in ("spouse", "parent")

    def _check(self, image):
        key = frozenset(image)
        ok = self._ok.get(key)
        if ok is None:
            if self.lands_in_nerve:
                ok = _nerve_welldef(self.fmap.target, image)
            else:
                target = self.fmap.target
                if target is None:
                    ok = True
                else:
                    coords = target.net.coords[sorted(key)]
                    ok = target.tiny(coords)
            self._ok[key] = ok
        return ok

    def __call__(self, c):
        out = vertex_map(c, self.fmap.mapping)
        for s in out.terms:
            if not self._check(s):
                raise CechError(errors.WELLDEF_FAILED, f"{self.fmap.kind} image not admissible",
                                simplex=s)
        return out


def induced_chain_map(fmap):
    return InducedChainMap(fmap)


class PrismHomotopy:
    """H = prism(f, g) with dH + Hd = g_* - f_*, image simplices checked."""

    def __init__(self, f, g):
        if f.kind != g.kind:
            raise ValueError("homotopy needs maps of one kind")
        self.f = f
        self.g = g
        self._checker = InducedChainMap(g)

    def __call__(self, c):
        h = prism(c, f=self.f.mapping, g=self.g.mapping)
        for s in h.terms:
            if not self._checker._check(s):
                raise CechError(errors.WELLDEF_FAILED, "prism simplex not admissible", simplex=s)
        return h

    def verify(self, c):
        lhs = boundary(self(c)) + self(boundary(c))
        rhs = vertex_map(c, self.g.mapping) - vertex_map(c, self.f.mapping)
        return lhs == rhs


def chain_homotopy(f, g):
    return PrismHomotopy(f, g)


def super_union_bound(fine2, fine1, coarse, set_ids):
    """Lowest coarse set containing all the given pairwise-intersecting fine2 sets."""
    ids = sorted(set(set_ids))
    bits2 = fine2.bitsets
    for a in ids:
        for b in ids:
            if bits2[a] & bits2[b] == 0:
                raise CechError(errors.PRECONDITION_FAILED, "sets do not pairwise intersect",
                                pair=(a, b))
    union = 0
    for a in ids:
        union |= bits2[a]
    for j, b in enumerate(coarse.bitsets):
        if union & ~b == 0:
            return j
    raise CechError(errors.NOT_FOUND, "no coarse set contains the union", sets=ids)


# ---------- Limit covers ----------

@dataclass
class LevelSets:
    """U_i(n) for every generator i, as boolean columns over the net."""

    level: int
    columns: dict


class LimitCoverBuilder:
    """U_i(n): eps_n-ball at a level-k generator, then eps_n-neighbourhoods within X_n.

    ``strata`` are StratumNets sharing one base PointSet; level k means the
    k-th entry (stratum X_{strata[k].n}).
    """

    def __init__(self, strata, family):
        base = strata[0].points
        if any(s.points is not base for s in strata):
            raise ValueError("strata nets must share one base point set")
        self.strata = strata
        self.family = family
        self.net = base
        self.X = base.coords
        self.tree = cKDTree(self.X)
        self.level_mask = []
        for s in strata:
            mask = np.zeros(len(self.X), dtype=bool)
            mask[s.indices] = True
            self.level_mask.append(mask)
        self.generators = []   # (net index, level)
        self.history = []      # LevelSets per level
        self.eps = []

    def _ball_mask(self, idx, eps, level):
        mask = np.zeros(len(self.X), dtype=bool)
        for j in self.tree.query_ball_point(self.X[idx], _chord(eps)):
            mask[j] = True
        mask &= geodesic_to_many(self.X, self.X[idx]) < eps
        return mask & self.level_mask[level]

    def _neighbourhood(self, col, eps, level):
        idx = np.flatnonzero(col)
        mask = col.copy()
        if len(idx):
            for nbrs in self.tree.query_ball_point(self.X[idx], _chord(eps)):
                mask[nbrs] = True
        # keep only points strictly within eps of some member
        cand = np.flatnonzero(mask & ~col)
        if len(cand):
            d, _ = cKDTree(self.X[idx]).query(self.X[cand])
            mask[cand] = _angle(d) < eps
        return mask & self.level_mask[level]

    def add_level(self, eps):
        level = len(self.history)
        columns = {}
        if level:
            for g, col in self.history[-1].columns.items():
                columns[g] = self._neighbourhood(col, eps, level)
        covered = np.zeros(len(self.X), dtype=bool)
        for col in columns.values():
            covered |= col
        fresh = self.level_mask[level].copy()
        if level:
            fresh &= ~self.level_mask[level - 1]
        for i in np.flatnonzero(fresh & ~covered).tolist():
            if covered[i]:
                continue
            g = len(self.generators)
            self.generators.append((i, level))
            columns[g] = self._ball_mask(i, eps, level)
            covered |= columns[g]
        self.history.append(LevelSets(level, columns))
        self.eps.append(eps)
        log(f"[LIMIT] level {level}: eps {eps:.4g}, {len(self.generators)} generators")
        return columns

    def truncate(self, level):
        """Drop levels >= level (used when a schedule step is retried)."""
        self.history = self.history[:level]
        self.eps = self.eps[:level]
        self.generators = [(i, lv) for i, lv in self.generators if lv < level]

    def covers(self):
        """(U cover, V cover) from the last built level."""
        last = self.history[-1].columns
        top = len(self.history) - 1
        domain = np.flatnonzero(self.level_mask[top])
        u_sets, v_sets = [], []
        for g, (idx, lv) in enumerate(self.generators):
            col = last[g]
            u_sets.append(OpenSet(g, generator=idx, level=self.strata[top].n,
                                  members=frozenset(np.flatnonzero(col).tolist()),
                                  label=f"U{g}", meta={"generator_level": lv}))
            vcol = col & ~self.level_mask[lv - 1] if lv else col
            v_sets.append(OpenSet(g, generator=idx, level=self.strata[top].n,
                                  excluded_level=self.strata[lv - 1].n if lv else None,
                                  members=frozenset(np.flatnonzero(vcol).tolist()),
                                  label=f"V{g}", meta={"generator_level": lv}))
        return (Cover(u_sets, self.net, self.family, domain, name="U"),
                Cover(v_sets, self.net, self.family, domain, name="V"))


def build_limit_cover(eps_seq, strata, family):
    builder = LimitCoverBuilder(strata[: len(eps_seq)], family)
    for eps in eps_seq:
        builder.add_level(float(eps))
    return builder.covers()


def _target_columns(target, builder):
    M = target.membership
    return [M[:, j] for j in range(M.shape[1])]


def _lowest_container(mask, target_cols):
    for j, col in enumerate(target_cols):
        if not (mask & ~col).any():
            return j
    return None


def limit_cover_schedule(target, strata, family, halvings=None):
    """Choose eps/eta per level so the V-cover super-refines ``target``.

    Level 0: eps = eta = lambda_0/7. Level n+1: t = min(lambda_{n+1}, eta_n,
    delta_{n+1}) and eps = eta = t/7, where delta_{n+1} separates every recorded
    good union from the X_{n+1}-net points outside its fixed target set. Claims
    (A) and (B) are audited on the net; a failing level is rebuilt with halved
    eps/eta up to ``halvings`` times.
    """
    from .config import config

    halvings = config["schedule_halvings"] if halvings is None else halvings
    builder = LimitCoverBuilder(strata, family)
    cols = _target_columns(target, builder)
    X = builder.X
    lam = [lebesgue_number(target, np.flatnonzero(m)) for m in builder.level_mask]
    good = {}   # frozenset(generators) -> (level, target id)
    audit = []
    eta_prev = None
    for level in range(len(strata)):
        if level == 0:
            t = lam[0]
        else:
            delta = _good_separation(builder, good, cols, level)
            t = min(lam[level], eta_prev, delta)
        eps = eta = t / 7.0
        for attempt in range(halvings + 1):
            builder.truncate(level)
            columns = builder.add_level(eps)
            ok_a, new_good = _claim_a(builder, columns, cols, eta, level)
            ok_b = _claim_b(columns, good, cols, level)
            if ok_a and ok_b:
                break
            eps, eta = eps / 2, eta / 2
        else:
            raise CechError(errors.TOWER_FAILED, "limit cover schedule did not converge",
                            level=level)
        for J, j in new_good.items():
            good.setdefault(J, (level, j))
        audit.append({"level": level, "n": strata[level].n, "lambda": lam[level],
                      "eps": eps, "eta": eta, "claim_A": ok_a, "claim_B": ok_b,
                      "attempts": attempt + 1, "good_sets": len(good)})
        eta_prev = eta
    U, V = builder.covers()
    ok, parent, failures = is_super_refinement(V, target)
    return {"U": U, "V": V, "eps": list(builder.eps), "audit": audit,
            "super_refinement": ok, "parent": parent, "failures": failures,
            "lebesgue": lam}


def _good_separation(builder, good, cols, level):
    X = builder.X
    prev = builder.history[level - 1].columns
    best = math.pi
    here = builder.level_mask[level]
    for J, (_, j) in good.items():
        union = np.zeros(len(X), dtype=bool)
        for g in J:
            union |= prev[g]
        outside = here & ~cols[j]
        if not outside.any() or not union.any():
            continue
        d, _ = cKDTree(X[outside]).query(X[union])
        best = min(best, float(_angle(d).min()))
    return best


def _claim_a(builder, columns, cols, eta, level):
    """Every eta-ball at a level net point meets sets whose union is inside one target set."""
    X = builder.X
    gens = sorted(columns)
    M = np.column_stack([columns[g] for g in gens]) if gens else np.zeros((len(X), 0), bool)
    ok = True
    new_good = {}
    for i in np.flatnonzero(builder.level_mask[level]).tolist():
        ball = [j for j in builder.tree.query_ball_point(X[i], _chord(eta))]
        hit = M[ball].any(axis=0)
        J = frozenset(gens[t] for t in np.flatnonzero(hit))
        union = M[:, hit].any(axis=1)
        j = _lowest_container(union, cols)
        if j is None:
            ok = False
            continue
        new_good.setdefault(J, j)
    return ok, new_good


def _claim_b(columns, good, cols, level):
    for J, (k, j) in good.items():
        if k >= level:
            continue
        union = np.zeros_like(cols[0])
        for g in J:
            union |= columns[g]
        if (union & ~cols[j]).any():
            return False
    return True
