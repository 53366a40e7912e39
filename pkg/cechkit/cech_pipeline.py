"""Subdivision chain maps, tiny fills, the (DA_i) checker and the non-vanishing certificate.

Everything here is assembled from the stratum filler and the cover engine.
Certificates carry the chains they talk about together with the point
coordinates, so ``verify_da_record`` and ``verify_nonvanish_record`` can
re-derive the claims from a saved record alone.
"""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from sympy import Matrix

from . import errors
from .boundary_model import BallFamily
from .chain_core import (
    Chain, ConeHomotopy, PointSet, boundary, chain_sum, face_complex, fineness, is_cycle,
    is_fine, is_reduced_cycle, prism, simplex, support, vertex_map,
)
from .config import config
from .cover_engine import (
    BallPiece, Cover, OpenSet, UniformCover, is_super_refinement, lebesgue_number,
)
from .detour import (
    _tangent_frame, detour_balls, f1, fill_input_field, general_detour, h_modulus,
    input_field, represent_class, stratum_fill,
)
from .errors import CechError
from .log import log, warn
from .nerve_homology import discrete_complex, invariant_factors, nerve
from .sphere_geometry import (
    DEFAULT_PROFILE, HALF_PI, FinenessField, _from_polar, bisect_to, chord, convex_cover,
    covering_radius, normalize, sample_net,
)

_TOL = 1e-9
DEGREE_STEP = 6         # delta_{i-1} = delta_i / 6 feeds the filler of degree i
TOWER_SHRINK = 0.9 / 4  # rho_{j+1} = 0.9 rho_j / 4 keeps stars of level j+1 inside level j
SAMPLERS = {
    "patch": "boundary of a random straight (i+1)-simplex, bisected",
    "polygon": "random geodesic polygon (i = 1), bisected",
    "detoured": "patch or polygon near a family ball, detoured around (2K/n)B",
}


def _angle(chord_len):
    return 2.0 * np.arcsin(np.clip(np.asarray(chord_len) / 2.0, 0.0, 1.0))


def _coords(points, c):
    verts = sorted(support(c))
    return points.coords[verts] if verts else np.zeros((0, points.ambient_dim))


def _distance_to(X, F):
    return _angle(cdist(np.atleast_2d(X), np.atleast_2d(F))).min(axis=1)


# ---------- Related homotopy ----------

def related_homotopy(c, c_prime, T, points, delta):
    """Chain d with dd = c - c' where c' = T(c) and T moves support(c) by <= delta.

    d is minus the prism between the identity and T, so it is 3 delta fine
    when c is delta fine and stays within delta of support(c).
    """
    get = T.__getitem__ if isinstance(T, dict) else T
    if not is_cycle(c):
        raise CechError(errors.PRECONDITION_FAILED, "related homotopy needs a cycle")
    moved = max((points.distance(v, get(v)) for v in support(c)), default=0.0)
    if moved > delta * (1 + _TOL):
        raise CechError(errors.PRECONDITION_FAILED, "T moves a vertex further than delta",
                        moved=moved, delta=delta)
    if vertex_map(c, get) != c_prime:
        raise CechError(errors.PRECONDITION_FAILED, "c' is not the image of c under T")
    return -prism(c, lambda v: v, get)


# ---------- Subdivision by filling ----------

class ChainRefiner:
    """The chain map phi^{delta,n}, built degree by degree and memoized per simplex.

    phi_0 is the identity. A simplex of degree i keeps its image when it is
    delta_i fine and every face is fixed; otherwise its image is the stratum
    filler of phi(boundary) at fineness delta_i.
    """

    def __init__(self, points, n, delta, family, top, profile=DEFAULT_PROFILE, strict=False,
                 n_jobs=1):
        self.points = points
        self.n = n
        self.delta = float(delta)
        self.family = family
        self.top = top
        self.profile = profile
        self.strict = strict
        self.n_jobs = n_jobs
        self.deltas = [self.delta / DEGREE_STEP ** (top - i) for i in range(top + 1)]
        self.strata = [n]
        for _ in range(top):
            self.strata.append(f1(self.strata[-1], family.K))
        self._phi = {}
        self.identity_hits = 0
        self.fills = 0
        self.excursion = [0.0] * (top + 1)
        self.radius = [0.0] * (top + 1)

    def locality_bound(self, degree, r):
        """H_i(r): support of phi(s) lies within this distance of s when diam s <= r."""
        h = 0.0
        for _ in range(degree):
            h = h_modulus(r + 2 * h, self.family.K)
        return h

    def _fixed(self, face):
        img = self.on_simplex(face)
        return img.terms == {face: 1}

    def on_simplex(self, s):
        hit = self._phi.get(s)
        if hit is not None:
            return hit
        i = len(s) - 1
        sigma = Chain._raw({s: 1}, i)
        if i == 0:
            img = sigma
        else:
            faces = [s[:j] + s[j + 1:] for j in range(len(s))]
            fixed = all(self._fixed(f) for f in faces)
            if fixed and self.points.diameter(s) <= self.deltas[i] * (1 + _TOL):
                img = sigma
                self.identity_hits += 1
            else:
                z = self(boundary(sigma))
                try:
                    img = stratum_fill(z, self.points, self.strata[i - 1], self.deltas[i],
                                       self.family, self.strict, self.profile, self.n_jobs)
                except CechError as e:
                    raise CechError(errors.FILL_FAILED, "filler of phi(boundary) failed",
                                    simplex=list(s), degree=i, cause=e.code,
                                    cause_message=e.message) from e
                self.fills += 1
            if img:
                X = self.points.coords[sorted(set(s))]
                Y = _coords(self.points, img)
                exc = float(_angle(cKDTree(X).query(Y)[0].max())) if len(Y) else 0.0
                self.excursion[i] = max(self.excursion[i], exc)
                self.radius[i] = max(self.radius[i], self.points.diameter(s))
        self._phi[s] = img
        return img

    def __call__(self, c):
        acc = {}
        for s, k in c.terms.items():
            for t, m in self.on_simplex(s).terms.items():
                acc[t] = acc.get(t, 0) + k * m
        return Chain._raw(acc, c.dim)

    def verify(self):
        """Exact chain-map law on every simplex seen so far."""
        bad = []
        for s, img in list(self._phi.items()):
            if len(s) < 2:
                continue
            if boundary(img) != self(boundary(Chain._raw({s: 1}, len(s) - 1))):
                bad.append(list(s))
        return bad

    def to_record(self):
        return {
            "n": self.n,
            "delta": self.delta,
            "deltas": self.deltas,
            "strata": self.strata,
            "identity_hits": self.identity_hits,
            "fills": self.fills,
            "locality": [{"degree": i, "measured": self.excursion[i],
                          "bound": self.locality_bound(i, self.radius[i]),
                          "radius": self.radius[i]} for i in range(self.top + 1)],
        }


def refine_chain(c, points, delta, family, n=1, profile=DEFAULT_PROFILE, strict=False,
                 n_jobs=1):
    """(phi(c), refiner) with phi(c) delta fine in X_{f3(n)} and phi a chain map."""
    k = points.ambient_dim - 2
    if c.dim > k:
        raise CechError(errors.PRECONDITION_FAILED, "chain degree above k", degree=c.dim, k=k)
    X = _coords(points, c)
    if len(X) and not family.in_stratum(X, n).all():
        raise CechError(errors.PRECONDITION_FAILED, "chain leaves X_n", n=n)
    refiner = ChainRefiner(points, n, delta, family, max(c.dim, 0), profile, strict, n_jobs)
    out = refiner(c)
    bad = refiner.verify()
    if bad:
        raise CechError(errors.FILL_FAILED, "refinement is not a chain map", simplices=bad[:5])
    fin = fineness(out, points)
    if fin > delta * (1 + _TOL):
        raise CechError(errors.FILL_FAILED, "refined chain coarser than delta",
                        fineness=fin, delta=delta)
    Y = _coords(points, out)
    if len(Y) and not family.in_stratum(Y, refiner.strata[-1]).all():
        raise CechError(errors.FILL_FAILED, "refined chain leaves its stratum",
                        stratum=refiner.strata[-1])
    log(f"[REFINE] degree {c.dim}: {len(c)} -> {len(out)} simplices, "
        f"{refiner.fills} fills, {refiner.identity_hits} kept")
    return out, refiner


# ---------- Refinement towers ----------

@dataclass
class RefinementTower:
    cover: object
    lebesgue: float
    radii: list
    levels: list
    certificates: list

    @property
    def finest(self):
        return self.levels[-1]

    def scheduled(self, degree):
        """Cover a degree-i simplex's homotopy support must be tiny in."""
        return self.levels[max(0, len(self.levels) - 2 - degree)]

    def to_record(self):
        return {"lebesgue": self.lebesgue, "radii": self.radii,
                "certificates": self.certificates}


def build_refinement_tower(O, depth):
    """Uniform covers U_depth << ... << U_0 << O with radii shrinking by 0.9/4."""
    lam = lebesgue_number(O)
    if lam <= 0:
        raise CechError(errors.TOWER_FAILED, "cover has zero Lebesgue number on its net")
    radii = [0.9 * lam / 2]
    for _ in range(depth):
        radii.append(radii[-1] * TOWER_SHRINK)
    levels = [UniformCover(r, net=O.net, name=f"tower[{j}]") for j, r in enumerate(radii)]
    certificates = []
    ok, _, failures = is_super_refinement(levels[0], O)
    certificates.append({"fine": 0, "coarse": "O", "ok": ok, "failures": len(failures)})
    for j in range(1, len(levels)):
        ok_j, _, fail_j = is_super_refinement(levels[j], levels[j - 1])
        certificates.append({"fine": j, "coarse": j - 1, "ok": ok_j, "failures": len(fail_j)})
    if not all(cert["ok"] for cert in certificates):
        raise CechError(errors.TOWER_FAILED, "a super-refinement certificate failed",
                        certificates=certificates)
    log(f"[TOWER] lebesgue {lam:.4g}, {len(levels)} levels down to radius {radii[-1]:.3g}")
    return RefinementTower(O, lam, radii, levels, certificates)


@dataclass
class SubdivisionCertificate:
    input: Chain
    output: Chain
    homotopy: Chain
    audit: list
    refine: dict
    tower: dict
    checks: dict = field(default_factory=dict)

    @property
    def strata(self):
        return self.refine["strata"]

    @property
    def ok(self):
        return all(self.checks.values())

    def to_record(self):
        return {"input": self.input.to_record(), "output": self.output.to_record(),
                "homotopy": self.homotopy.to_record(), "audit": self.audit,
                "refine": self.refine, "tower": self.tower, "checks": self.checks,
                "ok": self.ok}


def refine_with_cover(c, points, O, delta, family, n=1, tower=None, profile=DEFAULT_PROFILE,
                      strict=False, n_jobs=1):
    """Subdivide an O'-fine chain into an O-fine, delta-fine one, chain homotopic to it.

    O' is the finest level of the tower. The homotopy satisfies
    dH + Hd = phi - id, with H(s) = -cone(s[0], s - phi(s) - H(ds)).
    """
    depth = c.dim + 1
    if tower is None:
        tower = build_refinement_tower(O, depth)
    if len(tower.levels) < depth + 1:
        raise CechError(errors.TOWER_FAILED, "tower shorter than the chain degree needs",
                        levels=len(tower.levels), degree=c.dim)
    if not is_fine(c, tower.finest, points):
        raise CechError(errors.PRECONDITION_FAILED, "input is not O'-fine",
                        radius=tower.radii[-1])
    out, refiner = refine_chain(c, points, delta, family, n, profile, strict, n_jobs)
    minus_h = ConeHomotopy(refiner)
    H = -minus_h(c)

    audit = {}
    law_failures = 0
    for s in face_complex(c).generators:
        i = len(s) - 1
        sigma = Chain._raw({s: 1}, i)
        hs = -minus_h.on_simplex(s)
        lhs = boundary(hs) + -minus_h(boundary(sigma))
        if lhs != refiner.on_simplex(s) - sigma:
            law_failures += 1
        row = audit.setdefault(i, {"degree": i, "simplices": 0, "scheduled_radius":
                                   tower.scheduled(i).radius, "tiny_failures": 0,
                                   "cover_failures": 0})
        row["simplices"] += 1
        X = points.coords[sorted(set(s) | support(hs))]
        if not tower.scheduled(i).tiny(X):
            row["tiny_failures"] += 1
        if not O.tiny(X):
            row["cover_failures"] += 1
    if law_failures:
        raise CechError(errors.FILL_FAILED, "homotopy identity failed", simplices=law_failures)
    checks = {
        "homotopy_identity": boundary(H) + -minus_h(boundary(c)) == out - c,
        "output_delta_fine": fineness(out, points) <= delta * (1 + _TOL),
        "output_O_fine": is_fine(out, O, points),
        "homotopy_O_fine": is_fine(H, O, points),
        "schedule_tiny": all(r["tiny_failures"] == 0 for r in audit.values()),
    }
    cert = SubdivisionCertificate(c, out, H, [audit[i] for i in sorted(audit)],
                                  refiner.to_record(), tower.to_record(), checks)
    if not cert.ok:
        log(f"[REFINE] subdivision certificate failed: "
            f"{sorted(k for k, v in checks.items() if not v)}")
    return cert


# ---------- Tiny cycles ----------

def tiny_fill_modulus(n, delta, family, strict=False, profile=DEFAULT_PROFILE):
    """g2(delta, n): the fineness a tiny cycle needs before it can be filled."""
    return fill_input_field(n, delta, family, strict, profile)


def tiny_cycle_fill(c, points, O, O_prime, delta, family, n=1, profile=DEFAULT_PROFILE,
                    strict=False, n_jobs=1):
    """Fill an O'-tiny reduced cycle inside one O-set.

    Returns (filler, id of the O-set holding cycle and filler). The filler lives
    in X_{f1(n)}, which is the f4 of this construction.
    """
    if not is_reduced_cycle(c):
        raise CechError(errors.PRECONDITION_FAILED, "input is not a reduced cycle")
    X = _coords(points, c)
    if not len(X):
        return Chain.zero(c.dim + 1), None
    if not O_prime.tiny(X):
        raise CechError(errors.PRECONDITION_FAILED, "cycle is not tiny for O'")
    parents = O.containing_sets(X)
    if not parents:
        raise CechError(errors.PRECONDITION_FAILED, "no O-set contains the cycle")
    d = stratum_fill(c, points, n, delta, family, strict, profile, n_jobs)
    Xd = np.vstack([X, _coords(points, d)])
    owners = [j for j in parents if O.sets[j].contains(Xd, O.family, O._lookup).all()]
    if not owners:
        raise CechError(errors.FILL_FAILED, "filler leaves every O-set holding the cycle",
                        candidates=parents)
    log(f"[FILL] tiny cycle filled inside O-set {owners[0]}")
    return d, owners[0]


# ---------- (DA_i) checking ----------

def _tangent(p, rng):
    u = rng.standard_normal(len(p))
    u -= np.dot(u, p) * p
    return u / np.linalg.norm(u)


def _random_base(rng, family, n, ambient):
    for _ in range(500):
        x = normalize(rng.standard_normal(ambient))
        if family.in_stratum(x[None, :], n)[0]:
            return x
    raise CechError(errors.PRECONDITION_FAILED, "could not sample a point of X_n", n=n)


def _patch_cycle(points, x, R, degree, rng):
    verts = [points.add(_from_polar(x, R * rng.uniform(0.4, 1.0), _tangent(x, rng)))
             for _ in range(degree + 2)]
    return boundary(simplex(*verts))


def _polygon_cycle(points, x, R, rng):
    u = _tangent(x, rng)
    w = _tangent(x, rng)
    w -= np.dot(w, u) * u
    w /= np.linalg.norm(w)
    m = int(rng.integers(3, 7))
    angles = np.sort(rng.uniform(0, 2 * math.pi, m))
    verts = [points.add(_from_polar(x, R * rng.uniform(0.5, 1.0),
                                    math.cos(a) * u + math.sin(a) * w)) for a in angles]
    return chain_sum([simplex(verts[j], verts[(j + 1) % m]) for j in range(m)], 1)


def _sample_target(need, fine_eps):
    target = FinenessField(min(need.default, fine_eps))
    for centers, radii, t in need.zones:
        target.add_zone(centers, radii, t)
    return target


def _draw_cycle(kind, rng, family, n, degree, scale, fine_eps, need, profile):
    """One candidate cycle in its own PointSet; None with a reason when rejected."""
    ambient = family.ambient_dim
    points = PointSet(ambient)
    R = scale * rng.uniform(0.25, 1.5)
    if kind == "detoured" and len(family):
        p = family.centers[int(rng.integers(len(family)))]
        x = _from_polar(p, float(family.radii.max()) * rng.uniform(0.0, 2.0) / n,
                        _tangent(p, rng))
    else:
        x = _random_base(rng, family, n, ambient)
    if degree == 1 and (kind == "polygon" or (kind == "detoured" and rng.random() < 0.5)):
        c = _polygon_cycle(points, x, R, rng)
    else:
        c = _patch_cycle(points, x, R, degree, rng)
    target = _sample_target(need, fine_eps)
    if kind == "detoured" and len(family):
        balls = detour_balls(family, 2 * family.K / n)
        need_in = input_field(balls, fine_eps, profile.K_fill, strict=False, profile=profile)
        c = bisect_to(c, points, need_in)
        rep = general_detour(c, points, balls, fine_eps, profile=profile, strict=False)
        if not rep.ok:
            return None, points, "detour-checks"
        c = rep.output
    c = bisect_to(c, points, target)
    return c, points, None


def _admissible(c, points, family, n, fine_cover, need):
    if not c or not is_reduced_cycle(c):
        return "not-a-cycle"
    if not family.in_stratum(_coords(points, c), n).all():
        return "leaves-stratum"
    if not is_fine(c, fine_cover, points):
        return "not-O'-fine"
    if not all(points.diameter(s) <= need.simplex_target(points, s) * (1 + _TOL)
               for s in c.terms):
        return "too-coarse-for-filler"
    return None


def _check_sample(index, kind, c, points, O, tower, delta_refine, delta_fill, family, n,
                  profile, strict):
    entry = {"index": index, "sampler": kind, "cycle": c.to_record(),
             "simplices": len(c), "witness": None, "reason": None}
    try:
        cert = refine_with_cover(c, points, O, delta_refine, family, n, tower, profile, strict)
        w0 = stratum_fill(cert.output, points, cert.strata[-1], delta_fill, family, strict,
                          profile)
        w = w0 - cert.homotopy
        bounds = boundary(w) == c
        o_fine = is_fine(w, O, points)
        entry["witness"] = w.to_record()
        entry["witness_simplices"] = len(w)
        entry["checks"] = dict(cert.checks, boundary_match=bounds, witness_O_fine=o_fine)
        entry["status"] = "PASS" if bounds and o_fine and cert.ok else "FAIL"
        if entry["status"] == "FAIL":
            entry["reason"] = sorted(k for k, v in entry["checks"].items() if not v)
    except CechError as e:
        entry["status"] = "FAIL"
        entry["reason"] = e.to_record()
    entry["points"] = points.to_record()
    return entry


@dataclass
class DACheckReport:
    cover: dict
    family: dict
    degree: int
    n: int
    seed: int
    lebesgue: float = 0.0
    covering_radius: float = 0.0
    delta_refine: float = 0.0
    delta_fill: float = 0.0
    fine_radius: float = 0.0
    tower: dict = None
    entries: list = field(default_factory=list)
    rejected: dict = field(default_factory=dict)
    attempts: int = 0
    requested: int = 0
    status: str = "INCOMPLETE"
    reason: str = ""

    @property
    def passed(self):
        return sum(1 for e in self.entries if e["status"] == "PASS")

    def to_record(self):
        return {
            "cover": self.cover, "family": self.family, "degree": self.degree, "n": self.n,
            "seed": self.seed, "lebesgue": self.lebesgue,
            "covering_radius": self.covering_radius, "delta_refine": self.delta_refine,
            "delta_fill": self.delta_fill, "fine_radius": self.fine_radius,
            "tower": self.tower, "samplers": SAMPLERS, "entries": self.entries,
            "rejected": self.rejected, "attempts": self.attempts,
            "requested": self.requested, "passed": self.passed, "status": self.status,
            "reason": self.reason,
        }

    def rows(self):
        return [{"index": e["index"], "sampler": e["sampler"], "status": e["status"],
                 "simplices": e["simplices"], "witness_simplices": e.get("witness_simplices", 0),
                 "reason": (e["reason"]["code"] if isinstance(e["reason"], dict)
                            else ";".join(e["reason"] or []))}
                for e in self.entries]


def _cover_record(O):
    return {"name": O.name, "sets": [s.to_record() for s in O.sets]}


def da_check(O, i, samples, seed, family, n=1, delta=None, kinds=("patch", "polygon", "detoured"),
             profile=DEFAULT_PROFILE, strict=False, n_jobs=1, max_attempts=None):
    """Sample O'-fine i-cycles of X_n and fill each by an O-fine chain.

    O' is the finest cover of the refinement tower under O. Failures are
    recorded in the report, never raised.
    """
    k = family.ambient_dim - 2
    if not 1 <= i < k:
        raise CechError(errors.PRECONDITION_FAILED, "da_check needs 1 <= i < k", i=i, k=k)
    report = DACheckReport(_cover_record(O), family.to_record() if family is not None else None,
                           i, n, seed, requested=samples)
    rng = np.random.default_rng([seed, 7])
    check_pts = rng.standard_normal((config["check_cap"], family.ambient_dim))
    check_pts /= np.linalg.norm(check_pts, axis=1, keepdims=True)
    lam = lebesgue_number(O)
    cr = covering_radius(O.net.coords[O.domain], check_pts)
    report.lebesgue, report.covering_radius = lam, cr
    if lam - cr <= 0:
        report.status, report.reason = "INVALID", "Lebesgue number below the net covering radius"
        warn(f"[DA] {report.reason}: lambda={lam:.4g}, covering radius={cr:.4g}")
        return report
    delta_fill = delta if delta is not None else 0.9 * (lam - cr)
    delta_refine = delta_fill / DEGREE_STEP
    report.delta_fill, report.delta_refine = delta_fill, delta_refine
    try:
        tower = build_refinement_tower(O, i + 1)
    except CechError as e:
        report.status, report.reason = "INVALID", e.message
        report.tower = {"error": e.to_record()}
        return report
    report.tower = tower.to_record()
    fine = tower.finest
    fine_eps = 0.9 * fine.radius
    report.fine_radius = fine.radius
    n_fill = n
    for _ in range(i):
        n_fill = f1(n_fill, family.K)
    need = fill_input_field(n_fill, delta_fill, family, strict, profile)

    max_attempts = max_attempts or 20 * samples
    streams = np.random.SeedSequence(seed)
    accepted = []
    rejected = Counter()
    attempt = 0
    while len(accepted) < samples and attempt < max_attempts:
        kind = kinds[attempt % len(kinds)]
        sub = np.random.default_rng(streams.spawn(1)[0])
        attempt += 1
        try:
            c, points, why = _draw_cycle(kind, sub, family, n, i, delta_fill, fine_eps, need,
                                         profile)
        except CechError as e:
            rejected[f"{kind}:{e.code}"] += 1
            continue
        why = why or _admissible(c, points, family, n, fine, need)
        if why:
            rejected[f"{kind}:{why}"] += 1
            continue
        accepted.append((kind, c, points))
    report.attempts = attempt
    report.rejected = dict(sorted(rejected.items()))
    log(f"[DA] {len(accepted)} cycles accepted after {attempt} draws")

    jobs = (delayed(_check_sample)(j, kind, c, points, O, tower, delta_refine, delta_fill,
                                   family, n, profile, strict)
            for j, (kind, c, points) in enumerate(accepted))
    report.entries = list(Parallel(n_jobs=n_jobs)(jobs)) if accepted else []
    if any(e["status"] == "FAIL" for e in report.entries):
        report.status = "FAIL"
    elif len(report.entries) < samples:
        report.status, report.reason = "INCOMPLETE", "sampler exhausted its attempts"
    else:
        report.status = "PASS"
    log(f"[DA] degree {i}: {report.passed}/{len(report.entries)} PASS, status {report.status}")
    return report


def verify_da_record(record):
    """Re-check every PASS entry of a saved report: dw = c and w is O-fine."""
    family = BallFamily.from_record(record["family"]) if record.get("family") else None
    sets = [OpenSet.from_record(s) for s in record["cover"]["sets"]]
    failures = []
    checked = 0
    for entry in record["entries"]:
        if entry["status"] != "PASS":
            continue
        checked += 1
        points = PointSet.from_record(entry["points"])
        c = Chain.from_record(entry["cycle"])
        w = Chain.from_record(entry["witness"])
        cover = Cover(sets, points, family, name=record["cover"].get("name", ""))
        if boundary(w) != c:
            failures.append({"index": entry["index"], "check": "boundary_match"})
        elif not is_fine(w, cover, points):
            failures.append({"index": entry["index"], "check": "witness_O_fine"})
    return {"ok": not failures, "checked": checked, "failures": failures}


# ---------- Non-vanishing certificate ----------

def _stereo(X, q, frame):
    X = np.atleast_2d(X)
    return (X @ frame.T) / (1.0 - X @ q)[:, None]


def _winding(P, f):
    """Signed angle at f from P[:, 0] to P[:, 1], in turns."""
    u = P[:, 0] - f
    v = P[:, 1] - f
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    return np.arctan2(cross, (u * v).sum(axis=1)) / (2 * math.pi)


def _solid_angle(P, f):
    """Signed solid angle of triangle P[:, :3] seen from f, in full spheres."""
    a, b, c = P[:, 0] - f, P[:, 1] - f, P[:, 2] - f
    na, nb, nc = (np.linalg.norm(v, axis=1) for v in (a, b, c))
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = na * nb * nc + (a * b).sum(1) * nc + (a * c).sum(1) * nb + (b * c).sum(1) * na
    return 2 * np.arctan2(num, den) / (4 * math.pi)


def _cochain(S, images, f, k):
    if not len(S):
        return np.zeros(0)
    P = images[np.asarray(S, dtype=int)]
    return _winding(P, f) if k == 1 else _solid_angle(P, f)


def parent_map(X, centers, radii, F, lam2, r0):
    """Lowest ball containing the O2-star B(x, 2 lam2 m(x) / (1 - lam2)); -1 if none.

    m(x) = min(d(x, F), r0).
    """
    X = np.atleast_2d(X)
    m = np.minimum(_distance_to(X, F), r0)
    star = 2 * lam2 * m / (1 - lam2)
    out = np.full(len(X), -1, dtype=int)
    for start in range(0, len(X), 2048):
        sl = slice(start, start + 2048)
        d = _angle(cdist(X[sl], centers))
        ok = d + star[sl, None] < radii[None, :]
        has = ok.any(axis=1)
        rows = np.arange(start, start + len(has))[has]
        out[rows] = ok.argmax(axis=1)[has]
    return out


def _o2_failures(c, points, F, lam2, r0):
    bad = 0
    for s in c.terms:
        x = np.asarray(points.row(s[0]))
        m = min(float(_distance_to(x, F)[0]), r0)
        if points.diameter(s) >= lam2 * m:
            bad += 1
    return bad


def pairing_matrix(points, cycles, centers, radii, F, lam2, r0):
    """Pairings of each cycle's nerve image with the cocycles alpha_l, l < |F| - 1."""
    F = np.atleast_2d(F)
    k = F.shape[1] - 2
    q = F[-1]
    frame = _tangent_frame(q)
    images = _stereo(centers, q, frame)
    targets = _stereo(F[:-1], q, frame) if len(F) > 1 else np.zeros((0, k + 1))
    P = np.zeros((len(cycles), len(F) - 1))
    unmapped = []
    for j, c in enumerate(cycles):
        verts = sorted(support(c))
        if not verts:
            unmapped.append(0)
            continue
        pm = parent_map(points.coords[verts], centers, radii, F, lam2, r0)
        unmapped.append(int((pm < 0).sum()))
        if (pm < 0).any():
            continue
        parent = dict(zip(verts, pm.tolist()))
        S = [[parent[v] for v in s] for s in c.terms]
        coeffs = np.array(list(c.terms.values()), dtype=float)
        for l in range(len(F) - 1):
            P[j, l] = float(coeffs @ _cochain(S, images, targets[l], k))
    return P, unmapped


def _class_rank(P):
    M = np.rint(P).astype(int)
    return M, (int(Matrix(M.tolist()).rank()) if M.size else 0), \
        (float(np.abs(P - M).max()) if P.size else 0.0)


def _adaptive_cover(pool, F, lam1, r0, family=None, level=None):
    """Greedy balls of radius lam1 m(x); a point counts as covered within half a radius."""
    X = pool.coords
    radius = lam1 * np.minimum(_distance_to(X, F), r0)
    covered = np.zeros(len(X), dtype=bool)
    tree = cKDTree(X)
    sets, centers, radii = [], [], []
    for i in range(len(X)):
        if covered[i]:
            continue
        r = float(radius[i])
        sets.append(OpenSet(len(sets), (BallPiece(tuple(X[i]), r),), level=level, generator=i))
        centers.append(X[i])
        radii.append(r)
        covered[tree.query_ball_point(X[i], chord(r / 2))] = True
    cover = Cover(sets, pool, family, name="O1")
    return cover, np.array(centers), np.array(radii)


def _cocycle_check(O1, centers, F, k, budget):
    q = F[-1]
    frame = _tangent_frame(q)
    images = _stereo(centers, q, frame)
    targets = _stereo(F[:-1], q, frame)
    try:
        N = nerve(O1, k + 1, budget)
    except CechError as e:
        return {"checked": 0, "violations": 0, "skipped": e.code}
    S = np.array(N.cells(k + 1), dtype=int).reshape(-1, k + 2)
    violations = 0
    for l in range(len(targets)):
        total = np.zeros(len(S))
        for i in range(k + 2):
            total += (-1) ** i * _cochain(np.delete(S, i, axis=1), images, targets[l], k)
        violations += int((np.abs(total) > 1e-6).sum())
    return {"checked": int(len(S)), "violations": violations}


def _bounds(K, z):
    """Whether cycle z is a rational boundary in the complex K."""
    v = K.chain_vector(z)
    if not any(v):
        return True
    n = z.dim
    entries = K.boundary_entries(n + 1)
    shape = (K.count(n), K.count(n + 1))
    base = len(invariant_factors(entries, shape))
    extended = dict(entries)
    for r, val in enumerate(v):
        if val:
            extended[(r, shape[1])] = val
    return len(invariant_factors(extended, (shape[0], shape[1] + 1))) == base


def convex_boundary_check(F, cycles, points, D, seed, budget=None):
    """Search the finite U-fine complex on a net for chains bounding the representatives.

    U is the convex cover of S - F with diameter <= D. A cycle whose discrete
    class bounds there is a singular boundary; above the simplex budget the
    check reports ``rank-only``.
    """
    F = np.atleast_2d(F)
    k = F.shape[1] - 2
    budget = config["complex_budget"] if budget is None else budget
    net = sample_net(D / 6, F.shape[1], seed=seed).points
    U = convex_cover(F, min(D, HALF_PI), net, lam=0.5)
    try:
        K = discrete_complex(U, max_dim=k + 1, budget=budget)
    except CechError as e:
        log(f"[NONVANISH] boundary search skipped: {e.message}")
        return {"mode": "rank-only", "reason": e.code, "budget": budget, "per_class": []}
    tree = cKDTree(net.coords)
    per_class = []
    for j, c in enumerate(cycles):
        verts = sorted(support(c))
        _, near = tree.query(points.coords[verts]) if verts else (None, [])
        T = dict(zip(verts, (int(v) for v in near)))
        image = vertex_map(c, T)
        tiny = all(U.tiny(net.coords[sorted(set(s))]) for s in image.terms)
        if not tiny:
            per_class.append({"class": j, "mapped": False, "bounds": None})
            continue
        try:
            per_class.append({"class": j, "mapped": True, "bounds": _bounds(K, image)})
        except CechError:
            per_class.append({"class": j, "mapped": False, "bounds": None})
    return {"mode": "exhaustive", "budget": budget, "complex": len(K), "per_class": per_class}


@dataclass
class NonvanishCertificate:
    F: list
    k: int
    delta: float
    seed: int
    D: float = 0.0
    N: list = field(default_factory=list)
    lam1: float = 0.2
    lam2: float = 0.025
    r0: float = 1.0
    points: dict = None
    cycles: list = field(default_factory=list)
    o1: dict = None
    covers: dict = field(default_factory=dict)
    o2_failures: list = field(default_factory=list)
    unmapped: list = field(default_factory=list)
    pairings: list = field(default_factory=list)
    class_matrix: list = field(default_factory=list)
    integrality_gap: float = 0.0
    rank: int = 0
    expected: int = 0
    cocycle: dict = field(default_factory=dict)
    boundary_check: dict = field(default_factory=dict)
    derivations: list = field(default_factory=list)
    status: str = "PARTIAL"

    def to_record(self):
        return {
            "F": self.F, "k": self.k, "delta": self.delta, "seed": self.seed, "D": self.D,
            "N": self.N, "lam1": self.lam1, "lam2": self.lam2, "r0": self.r0,
            "points": self.points, "cycles": self.cycles, "o1": self.o1,
            "covers": self.covers, "o2_failures": self.o2_failures,
            "unmapped": self.unmapped, "pairings": self.pairings,
            "class_matrix": self.class_matrix, "integrality_gap": self.integrality_gap,
            "rank": self.rank, "expected": self.expected, "lower_bound": self.rank,
            "cocycle": self.cocycle, "boundary_check": self.boundary_check,
            "derivations": self.derivations, "status": self.status,
            "semantics": "dim H^k of the limit cover is at least rank; a failed bound "
                         "search is evidence, not proof",
        }

    def rows(self):
        return [{"punctures": len(self.F), "k": self.k, "delta": self.delta,
                 "rank": self.rank, "expected": self.expected, "status": self.status,
                 "boundary_check": self.boundary_check.get("mode", "")}]


def nonvanishing_certificate(F, delta, seed, family, lam1=0.2, lam2=0.025, r0=1.0,
                             profile=DEFAULT_PROFILE, n_jobs=1, budget=None):
    """Rank lower bound for H^k of the cover tower over S - F, k in {1, 2}.

    ``delta=None`` picks 0.8 lam2 D, small enough for the representatives to
    be O2-fine.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    k = F.shape[1] - 2
    if k not in (1, 2):
        raise CechError(errors.UNSUPPORTED_DIMENSION, "non-vanishing needs k in {1, 2}", k=k)
    if not len(F):
        raise CechError(errors.PRECONDITION_FAILED, "F must be nonempty")
    cert = NonvanishCertificate(F.tolist(), k, delta, seed, lam1=lam1, lam2=lam2, r0=r0,
                                expected=len(F) - 1)
    if len(F) == 1:
        cert.delta = delta
        cert.status = "CERTIFIED"
        cert.derivations.append({"step": "single puncture", "note": "H_k(S - F) = 0"})
        return cert
    dF = _angle(cdist(F, F))
    D = float(dF[~np.eye(len(F), dtype=bool)].min()) / 3
    delta = 0.8 * lam2 * D if delta is None else delta
    cert.D, cert.delta = D, delta

    points = PointSet(F.shape[1])
    cycles = []
    for l in range(len(F) - 1):
        _, disc, N, derivation = represent_class(F, l, delta, family, points, profile, n_jobs)
        cycles.append(disc)
        cert.N.append(N)
        cert.derivations.append({"class": l, "steps": derivation})
    n_top = max(cert.N)

    cap = D / 2
    eps = lam1 * D / 2
    coarse = sample_net(eps, F.shape[1], region=lambda Y: _distance_to(Y, F) > cap,
                        seed=seed).points
    verts = sorted(set().union(*(support(c) for c in cycles)))
    pool = PointSet(F.shape[1], np.vstack([points.coords[verts], coarse.coords]))
    O1, centers, radii = _adaptive_cover(pool, F, lam1, r0, family, n_top)
    O = convex_cover(F, HALF_PI, pool, lam=0.9)
    ok, _, failures = is_super_refinement(O1, O)
    cert.covers = {"O": len(O), "O1": len(O1), "pool": len(pool),
                   "O1_in_O": {"ok": ok, "failures": len(failures)}}
    cert.o1 = {"centers": centers.tolist(), "radii": radii.tolist()}

    cert.o2_failures = [_o2_failures(c, points, F, lam2, r0) for c in cycles]
    P, cert.unmapped = pairing_matrix(points, cycles, centers, radii, F, lam2, r0)
    M, cert.rank, cert.integrality_gap = _class_rank(P)
    cert.pairings = P.tolist()
    cert.class_matrix = M.tolist()
    cert.cocycle = _cocycle_check(O1, centers, F, k,
                                  50 * config["complex_budget"] if budget is None else budget)
    cert.boundary_check = convex_boundary_check(F, cycles, points, D, seed + 1, budget)
    for row in cert.boundary_check.get("per_class", []):
        row["consistent"] = not (row["bounds"] and any(M[row["class"]]))
    cert.points = points.to_record()
    cert.cycles = [c.to_record() for c in cycles]

    clean = (not any(cert.o2_failures) and not any(cert.unmapped)
             and cert.cocycle.get("violations", 0) == 0 and cert.integrality_gap < 1e-6
             and all(r.get("consistent", True) for r in cert.boundary_check.get("per_class", [])))
    cert.status = "CERTIFIED" if clean and cert.rank == cert.expected else "PARTIAL"
    log(f"[NONVANISH] |F|={len(F)} k={k}: rank {cert.rank}/{cert.expected}, {cert.status}")
    return cert


def verify_nonvanish_record(record):
    """Recompute the class matrix and its rank from the serialized cycles and O1 balls."""
    F = np.atleast_2d(np.asarray(record["F"], dtype=float))
    if len(F) == 1:
        return {"ok": record["rank"] == 0, "rank": 0, "matrix_match": True}
    points = PointSet.from_record(record["points"])
    cycles = [Chain.from_record(c) for c in record["cycles"]]
    if not all(is_cycle(c) for c in cycles):
        return {"ok": False, "rank": None, "matrix_match": False, "reason": "not cycles"}
    centers = np.asarray(record["o1"]["centers"], dtype=float)
    radii = np.asarray(record["o1"]["radii"], dtype=float)
    P, _ = pairing_matrix(points, cycles, centers, radii, F, record["lam2"], record["r0"])
    M, rank, _ = _class_rank(P)
    match = M.tolist() == record["class_matrix"]
    return {"ok": match and rank == record["rank"], "rank": rank, "matrix_match": match}
