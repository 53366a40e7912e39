"""Detouring chains around parabolic balls, the stratum filler and class representatives.

Balls passed here are already scaled (radius r_p/(M N) or similar). Every
routine returns chains with exact boundary identities; measured quantities
against their bounds go into a DetourReport or a ModulusTable.

Two fineness regimes exist. ``strict`` keeps one uniform target g^m(delta)
for every band. The default local regime gives band j the target
delta_j = min(delta, r_min(band j)) and only demands the finer targets of
later bands inside their own 2B zones.
"""

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from . import errors
from .boundary_model import approx_radius, project_to_stratum
from .chain_core import (
    Chain, PointSet, boundary, chain_sum, cone, fineness, is_cycle, support,
)
from .errors import CechError
from .log import log
from .sphere_geometry import (
    DEFAULT_PROFILE, FinenessField, LatitudeMidpoint, StraightChain, _from_polar,
    bisect_to, fill_cycle, fill_in_annulus, fill_in_ball, locally_fine, normalize,
)

_TOL = 1e-9
ZONE_MARGIN = 1.0001


# ---------- Helpers ----------

def _angle(chord_len):
    return 2.0 * np.arcsin(np.clip(np.asarray(chord_len) / 2.0, 0.0, 1.0))


def _coords(points, c):
    verts = sorted(support(c))
    return points.coords[verts] if verts else np.zeros((0, points.ambient_dim))


def _diameter(X):
    if len(X) < 2:
        return 0.0
    best = 0.0
    for i in range(0, len(X), 1024):
        best = max(best, float(cdist(X[i:i + 1024], X).max()))
    return float(_angle(best))


def _excursion(Y, X):
    """Largest distance from a row of Y to the nearest row of X."""
    if not len(Y):
        return 0.0
    if not len(X):
        return math.pi
    dist, _ = cKDTree(X).query(Y)
    return float(_angle(dist.max()))


def _ball_ratio(X, balls):
    """Per row: min over balls of d(x, center) / radius."""
    out = np.full(len(X), math.inf)
    if not len(balls) or not len(X):
        return out
    for i in range(0, len(X), 4096):
        d = _angle(cdist(X[i:i + 4096], balls.centers))
        out[i:i + 4096] = (d / balls.radii).min(axis=1)
    return out


def f1(n, K):
    """Stratum index reached by the stratum filler."""
    return int(2 * K * max(n, 2 * K))


def h_modulus(r, K):
    return r + K * math.sqrt(r) + 16 * K ** 2 * r ** 0.25


def band_count(r_max, r_min, K):
    if r_min <= 0 or r_max <= 0:
        return 0
    return 1 + int(math.floor(math.log(r_max / r_min) / math.log(K) + _TOL))


# ---------- Ball lists ----------

@dataclass
class BallList:
    centers: np.ndarray
    radii: np.ndarray
    ids: np.ndarray = None

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if self.ids is None:
            self.ids = np.arange(len(self.radii))
        self.ids = np.asarray(self.ids, dtype=int)

    def __len__(self):
        return len(self.radii)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return BallList(self.centers[idx], self.radii[idx], self.ids[idx])

    @property
    def r_max(self):
        return float(self.radii.max()) if len(self) else 0.0

    @property
    def r_min(self):
        return float(self.radii.min()) if len(self) else 0.0

    def scaled(self, factor):
        return BallList(self.centers, self.radii * factor, self.ids)

    def to_record(self):
        return {"centers": self.centers.tolist(), "radii": self.radii.tolist(),
                "ids": self.ids.tolist()}


def detour_balls(family, scale, min_radius=0.0):
    """Family balls with r_p/M >= min_radius, radii multiplied by ``scale``."""
    keep = np.flatnonzero(family.radii >= min_radius)
    return BallList(family.centers[keep], family.radii[keep] * scale, keep)


def check_disjoint(balls, factor, code=errors.PRECONDITION_FAILED):
    """Raise when two ``factor``-enlarged balls intersect."""
    for i in range(len(balls)):
        if i + 1 >= len(balls):
            break
        d = _angle(cdist(balls.centers[i:i + 1], balls.centers[i + 1:]))[0]
        bad = np.flatnonzero(d < factor * (balls.radii[i] + balls.radii[i + 1:]) * (1 - _TOL))
        if len(bad):
            j = i + 1 + int(bad[0])
            raise CechError(code, f"{factor:g}-enlarged balls intersect",
                            balls=[int(balls.ids[i]), int(balls.ids[j])],
                            distance=float(d[bad[0]]))


def partition_bands(balls, K):
    """Band i holds radii in (r_max/K^i, r_max/K^(i-1)]; returns index arrays, largest first."""
    if not len(balls):
        return []
    r_max = balls.r_max
    m = band_count(r_max, balls.r_min, K)
    which = np.array([band_count(r_max, r, K) for r in balls.radii], dtype=int)
    return [np.flatnonzero(which == i) for i in range(1, m + 1)]


# ---------- Reports ----------

@dataclass
class DetourReport:
    kind: str
    input: Chain
    output: Chain = None
    homotopy: Chain = None
    checks: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def check(self, name, measured, bound, relation="<="):
        measured, bound = float(measured), float(bound)
        if relation == "<=":
            ok = measured <= bound * (1 + _TOL) + 1e-12
        elif relation == ">=":
            ok = measured >= bound * (1 - _TOL) - 1e-12
        else:
            ok = bool(measured == bound)
        self.checks[name] = {"measured": measured, "bound": bound, "relation": relation, "ok": ok}
        return ok

    def flag(self, name, ok, **measured):
        self.checks[name] = {"ok": bool(ok), **{k: float(v) for k, v in measured.items()}}
        return ok

    @property
    def ok(self):
        return all(c["ok"] for c in self.checks.values())

    @property
    def status(self):
        return "OK" if self.ok else "FAILED"

    def to_record(self):
        return {
            "kind": self.kind,
            "status": self.status,
            "checks": self.checks,
            "meta": self.meta,
            "input": self.input.to_record(),
            "output": self.output.to_record() if self.output is not None else None,
            "homotopy": self.homotopy.to_record() if self.homotopy is not None else None,
        }


# ---------- Disjoint detour ----------

def chain_split(d, points, balls):
    """d = d_out + sum d_B, d_B the simplices inside 2B."""
    if not d or not len(balls):
        return d, {}
    tree = cKDTree(balls.centers)
    r2 = 2 * balls.r_max
    out, parts = {}, {}
    for s, k in d.terms.items():
        X = points.coords[list(s)]
        near = tree.query_ball_point(X[0], 2 * math.sin(min(r2, math.pi) / 2) + 1e-12)
        homes = []
        for b in near:
            if (_angle(np.linalg.norm(X - balls.centers[b], axis=1)) < 2 * balls.radii[b]).all():
                homes.append(b)
        if len(homes) > 1:
            raise CechError(errors.PRECONDITION_FAILED, "simplex lies in two doubled balls",
                            simplex=s, balls=[int(balls.ids[b]) for b in homes])
        if homes:
            parts.setdefault(homes[0], {})[s] = k
        else:
            out[s] = k
    return (Chain._raw(out, d.dim),
            {b: Chain._raw(t, d.dim) for b, t in sorted(parts.items())})


def _local_store(points, chains):
    verts = sorted(set().union(*(support(c) for c in chains)))
    pos = {v: i for i, v in enumerate(verts)}
    local = [Chain._raw({tuple(pos[v] for v in s): k for s, k in c.terms.items()}, c.dim)
             for c in chains]
    return verts, points.coords[verts], local


def _fill_around(ambient_dim, coords, d_B, c_B, center, r, delta, fill_target, home_target,
                 want_homotopy, profile):
    ps = PointSet(ambient_dim)
    ps.extend(coords, normalize=False)
    seeded = len(ps)
    f = fill_in_annulus(c_B, ps, center, r, 2 * r, delta, profile, local=fill_target)
    e = None
    if want_homotopy:
        e = fill_in_ball(d_B - f, ps, center, 2 * r, delta, profile, local=home_target)
    return f, e, ps.coords[seeded:].copy()


def _merge(points, verts, chain, new_coords):
    mapping = list(verts)
    for x in new_coords:
        mapping.append(points.add(x, normalize=False))
    return Chain._raw({tuple(mapping[v] for v in s): k for s, k in chain.terms.items()}, chain.dim)


def disjoint_detour(d, points, balls, delta, want_homotopy=False, profile=DEFAULT_PROFILE,
                    require=None, fill_target=None, n_jobs=1):
    """Reroute d around pairwise 2K-disjoint balls through the annuli 2B - B.

    ``require`` is the fineness the input must meet (default g(delta), or
    g(g(delta)) with a homotopy); ``fill_target`` is the target for the
    annulus fills (default delta, or g(delta) with a homotopy).
    """
    K = profile.K_fill
    k = points.ambient_dim - 2
    report = DetourReport("disjoint", d)
    if not 1 <= d.dim <= k:
        raise CechError(errors.PRECONDITION_FAILED, "detour needs 1 <= i <= k",
                        dimension=d.dim, k=k)
    if not len(balls) or not d:
        report.output = d
        report.homotopy = Chain.zero(d.dim + 1) if want_homotopy else None
        _disjoint_conclusions(report, points, balls, delta, K)
        return report
    check_disjoint(balls, 2 * K)
    if delta > balls.r_min * (1 + _TOL):
        raise CechError(errors.PRECONDITION_FAILED, "delta exceeds the smallest radius",
                        delta=delta, r_min=balls.r_min)
    g = profile.g
    if require is None:
        require = FinenessField(g(g(delta)) if want_homotopy else g(delta))
    if not locally_fine(d, points, require):
        raise CechError(errors.PRECONDITION_FAILED, "input chain not fine enough",
                        fineness=fineness(d, points), required=require.floor)
    if fill_target is None:
        fill_target = FinenessField(g(delta) if want_homotopy else delta)
    bd = boundary(d)
    if len(bd) and (_ball_ratio(_coords(points, bd), balls) < 1 - _TOL).any():
        raise CechError(errors.PRECONDITION_FAILED, "boundary of d meets a ball")

    d_out, parts = chain_split(d, points, balls)
    jobs = []
    for b, d_B in parts.items():
        c_B = boundary(d_B)
        verts, coords, (dl, cl) = _local_store(points, [d_B, c_B])
        jobs.append((b, verts, d_B, delayed(_fill_around)(
            points.ambient_dim, coords, dl, cl, balls.centers[b], float(balls.radii[b]),
            delta, fill_target, FinenessField(delta), want_homotopy, profile)))
    if n_jobs == 1 or len(jobs) < 2:
        results = [fn(*a, **kw) for _, _, _, (fn, a, kw) in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(job for _, _, _, job in jobs)
    fills, homs = [], []
    for (b, verts, d_B, _), (f_loc, e_loc, new) in zip(jobs, results):
        start = len(points)
        fills.append(_merge(points, verts, f_loc, new))
        if e_loc is not None:
            # homotopy points were appended after the fill's points
            homs.append(_merge(points, verts + list(range(start, len(points))), e_loc, []))
    report.output = chain_sum([d_out] + fills, d.dim)
    if want_homotopy:
        report.homotopy = chain_sum(homs, d.dim + 1)
    report.meta.update({"balls": len(balls), "touched": len(parts), "delta": delta,
                        "r_max": balls.r_max, "r_min": balls.r_min})
    _disjoint_conclusions(report, points, balls, delta, K)
    log(f"[DETOUR] disjoint: {len(parts)} of {len(balls)} balls touched, status {report.status}")
    return report


def _disjoint_conclusions(report, points, balls, delta, K):
    d, d2 = report.input, report.output
    # untouched simplices keep their own fineness
    report.check("fineness", fineness(d2, points), max(delta, fineness(d, points)))
    report.flag("boundary_equal", boundary(d2) == boundary(d))
    X2 = _coords(points, d2)
    report.check("avoids_shrunk_balls", _ball_ratio(X2, balls).min() if len(X2) else math.inf,
                 1 / K, ">=")
    changed = _coords(points, d2 - d)
    report.check("changes_inside_2K_balls",
                 _ball_ratio(changed, balls).max() if len(changed) else 0.0, 2 * K)
    report.check("diameter", _diameter(X2),
                 _diameter(_coords(points, d)) + 4 * K * math.sqrt(balls.r_max))
    if report.homotopy is not None:
        e = report.homotopy
        report.flag("homotopy_boundary", boundary(e) == d - d2)
        report.check("homotopy_fineness", fineness(e, points), delta)
        Xe = _coords(points, e)
        report.check("homotopy_inside_2K2_balls",
                     _ball_ratio(Xe, balls).max() if len(Xe) else 0.0, 2 * K ** 2)


# ---------- General detour ----------

def _zones(field_, balls, bands, targets, start):
    for j in range(start, len(bands)):
        sub = balls.subset(bands[j])
        field_.add_zone(sub.centers, 2 * sub.radii * ZONE_MARGIN, targets[j])
    return field_


def band_requirements(balls, delta, K, want_homotopy=False, strict=False, profile=DEFAULT_PROFILE):
    """Per band: (delta_j, fill target default, required input fineness)."""
    bands = partition_bands(balls, K)
    m = len(bands)
    g = profile.g
    out = []
    for idx in bands:
        if strict:
            dj = delta
            uniform = profile.g_iter(delta, m + (1 if want_homotopy else 0))
            fill_default, need = uniform, uniform
        else:
            dj = min(delta, float(balls.radii[idx].min()))
            fill_default = g(dj) if want_homotopy else dj
            need = g(g(dj)) if want_homotopy else g(dj)
        out.append((dj, fill_default, need))
    return bands, out


def input_field(balls, delta, K, want_homotopy=False, strict=True, profile=DEFAULT_PROFILE):
    """Fineness the input of ``general_detour`` must meet."""
    bands, req = band_requirements(balls, delta, K, want_homotopy, strict, profile)
    if strict:
        m = len(bands)
        return FinenessField(profile.g_iter(delta, m + (1 if want_homotopy else 0)) if m else delta)
    return _zones(FinenessField(delta), balls, bands, [r[2] for r in req], 0)


def general_detour(d, points, balls, delta, want_homotopy=False, profile=DEFAULT_PROFILE,
                   strict=True, n_jobs=1):
    """Detour around a multi-scale ball list band by band, largest band first.

    By default the input must be g^(m)(delta)-fine and delta <= r_min.
    ``strict=False`` selects the local regime instead.
    """
    K = profile.K_fill
    if not len(balls) or not d:
        report = DetourReport("general", d, d,
                              Chain.zero(d.dim + 1) if want_homotopy else None)
        report.meta.update({"bands": 0, "steps": [], "delta": delta, "strict": strict})
        _general_conclusions(report, points, balls, delta, K)
        return report
    bands, req = band_requirements(balls, delta, K, want_homotopy, strict, profile)
    m = len(bands)
    for idx in bands:
        check_disjoint(balls.subset(idx), 2 * K, errors.BAND_NOT_DISJOINT)
    if strict and delta > balls.r_min * (1 + _TOL):
        raise CechError(errors.PRECONDITION_FAILED, "delta exceeds the smallest radius",
                        delta=delta, r_min=balls.r_min)
    need = input_field(balls, delta, K, want_homotopy, strict, profile)
    if not locally_fine(d, points, need):
        raise CechError(errors.PRECONDITION_FAILED, "input chain not fine enough",
                        fineness=fineness(d, points), required=need.floor, bands=m)
    bd = boundary(d)
    if len(bd) and (_ball_ratio(_coords(points, bd), balls) < 1 - _TOL).any():
        raise CechError(errors.PRECONDITION_FAILED, "boundary of d meets a ball")

    report = DetourReport("general", d)
    current = d
    homotopy = Chain.zero(d.dim + 1)
    steps = []
    for j, idx in enumerate(bands):
        if not len(idx):
            continue
        dj, fill_default, need_j = req[j]
        if strict:
            fill = FinenessField(fill_default)
        else:
            fill = _zones(FinenessField(fill_default), balls, bands, [r[2] for r in req], j + 1)
        if strict:
            require = FinenessField(need_j)
        else:
            require = _zones(FinenessField(math.inf), balls, [idx], [need_j], 0)
        step = disjoint_detour(current, points, balls.subset(idx), dj, want_homotopy, profile,
                               require=require, fill_target=fill, n_jobs=n_jobs)
        if not step.checks["boundary_equal"]["ok"]:
            raise CechError(errors.FILL_FAILED, "band detour changed the boundary", band=j)
        current = step.output
        if want_homotopy:
            homotopy = homotopy + step.homotopy
        steps.append({"band": j + 1, "balls": len(idx), "delta_j": dj,
                      "touched": step.meta.get("touched", 0)})
    report.output = current
    report.homotopy = homotopy if want_homotopy else None
    report.meta.update({"bands": m, "steps": steps, "delta": delta, "strict": strict,
                        "r_max": balls.r_max, "r_min": balls.r_min})
    _general_conclusions(report, points, balls, delta, K)
    log(f"[DETOUR] general: {m} bands, status {report.status}")
    return report


def _general_conclusions(report, points, balls, delta, K):
    d, d2 = report.input, report.output
    X, X2 = _coords(points, d), _coords(points, d2)
    report.check("fineness", fineness(d2, points), delta)
    report.flag("boundary_equal", boundary(d2) == boundary(d))
    report.check("avoids_shrunk_balls", _ball_ratio(X2, balls).min() if len(X2) else math.inf,
                 1 / (2 * K), ">=")
    report.check("support_neighbourhood", _excursion(X2, X), 8 * K * balls.r_max)
    if boundary(d):
        diam = _diameter(X)
        report.check("diameter", _diameter(X2), diam + 8 * K * math.sqrt(2 * K * diam))
    if report.homotopy is not None:
        e = report.homotopy
        report.flag("homotopy_boundary", boundary(e) == d - d2)
        report.check("homotopy_fineness", fineness(e, points), delta)
        report.check("homotopy_neighbourhood", _excursion(_coords(points, e), X),
                     (4 * K ** 2 + 8 * K) * balls.r_max)


# ---------- Stratum filling ----------

@dataclass
class ModulusTable:
    n: int
    f1: int
    K: float
    delta: float
    delta_bar: float
    r_cut: float
    r_bar: float
    m: int
    g1: float
    strict: bool
    h_samples: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)

    def h(self, r):
        return h_modulus(r, self.K)

    def sample_h(self, decades=40):
        self.h_samples = [[10.0 ** -i, self.h(10.0 ** -i)] for i in range(decades + 1)]
        return self.h_samples

    def verify(self):
        vals = [v for _, v in self.h_samples]
        return (self.f1 >= self.n and all(a > b for a, b in zip(vals, vals[1:]))
                and (not vals or vals[-1] < 1e-6))

    def to_record(self):
        return {"n": self.n, "f1": self.f1, "K": self.K, "delta": self.delta,
                "delta_bar": self.delta_bar, "r_cut": self.r_cut, "r_bar": self.r_bar,
                "m": self.m, "g1": self.g1, "strict": self.strict,
                "h_samples": self.h_samples, "measured": self.measured}


def stratum_fill_plan(n, delta, family, strict=False, profile=DEFAULT_PROFILE):
    """Moduli of the stratum filler and its detour balls (2K/f1(n)) B."""
    K = family.K
    N = f1(n, K)
    r_cut = approx_radius(N, delta / 3, family) if len(family) else 0.0
    balls = detour_balls(family, 2 * K / N, r_cut) if len(family) else \
        BallList(np.zeros((0, family.ambient_dim)), [])
    r_bar = r_cut / N
    delta_bar = min(delta / 3, 2 * K * r_bar) if len(balls) else delta / 3
    m = len(partition_bands(balls, K))
    g1 = profile.g_iter(delta_bar, m + 1)
    table = ModulusTable(n, N, K, delta, delta_bar, r_cut, r_bar, m, g1, strict)
    table.sample_h()
    if not table.verify():
        raise CechError(errors.PRECONDITION_FAILED, "modulus table failed its own checks")
    return table, balls


def _cycle_need(balls, bands, req, third, profile):
    g = profile.g
    return _zones(FinenessField(g(third)), balls, bands, [g(r[2]) for r in req], 0)


def fill_input_field(n, delta, family, strict=False, profile=DEFAULT_PROFILE):
    """Fineness a cycle of X_n must meet before ``stratum_fill`` at delta accepts it."""
    table, balls = stratum_fill_plan(n, delta, family, strict, profile)
    if strict:
        return FinenessField(table.g1)
    third = delta / 3
    bands, req = band_requirements(balls, third, family.K, False, False, profile)
    return _cycle_need(balls, bands, req, third, profile)


def stratum_fill(c, points, n, delta, family, strict=False, profile=DEFAULT_PROFILE,
                 n_jobs=1, return_table=False):
    """Fill a reduced i-cycle of X_n (i < k) by a delta-fine chain in X_{f1(n)}."""
    k = points.ambient_dim - 2
    if c.dim >= k:
        raise CechError(errors.PRECONDITION_FAILED, "stratum filling needs 0 <= i < k",
                        dimension=c.dim, k=k)
    table, balls = stratum_fill_plan(n, delta, family, strict, profile)
    if not c:
        d = Chain.zero(c.dim + 1)
        return (d, table) if return_table else d
    X = _coords(points, c)
    if not family.in_stratum(X, n).all():
        raise CechError(errors.PRECONDITION_FAILED, "cycle leaves the stratum", n=n)
    K = family.K
    diam = _diameter(X)
    fin = fineness(c, points)
    if strict and fin > table.g1 * (1 + _TOL):
        raise CechError(errors.PRECONDITION_FAILED, "cycle coarser than g1(delta, n)",
                        fineness=fin, g1=table.g1)
    if diam < delta:
        d = cone(min(support(c)), c)
        table.measured.update({"mode": "cone", "diameter_in": diam})
    else:
        third = delta / 3
        if strict:
            d0 = fill_cycle(c, points, profile.g_iter(table.delta_bar, table.m), profile)
            rep = general_detour(d0, points, balls, table.delta_bar, False, profile,
                                 strict=True, n_jobs=n_jobs)
        else:
            bands, req = band_requirements(balls, third, K, False, False, profile)
            need_c = _cycle_need(balls, bands, req, third, profile)
            if not locally_fine(c, points, need_c):
                raise CechError(errors.PRECONDITION_FAILED,
                                "cycle not fine enough near the detour balls",
                                fineness=fin, required=need_c.floor)
            local = _zones(FinenessField(third), balls, bands, [r[2] for r in req], 0)
            d0 = fill_cycle(c, points, third, profile, local=local)
            rep = general_detour(d0, points, balls, third, False, profile, strict=False,
                                 n_jobs=n_jobs)
        if not rep.checks["boundary_equal"]["ok"]:
            raise CechError(errors.FILL_FAILED, "detour changed the boundary")
        d = project_to_stratum(rep.output, points, table.f1, delta / 3, family)
        table.measured.update({"mode": "fill-detour-project", "diameter_in": diam,
                               "detour": {k2: v["ok"] for k2, v in rep.checks.items()}})
    if boundary(d) != c:
        raise CechError(errors.FILL_FAILED, "filler boundary differs from the cycle")
    Xd = _coords(points, d)
    if not family.in_stratum(Xd, table.f1).all():
        raise CechError(errors.FILL_FAILED, "filler leaves X_f1(n)", f1=table.f1)
    fin_d = fineness(d, points)
    if fin_d > delta * (1 + _TOL):
        raise CechError(errors.FILL_FAILED, "filler coarser than delta", fineness=fin_d)
    diam_d = _diameter(Xd)
    table.measured.update({"fineness_out": fin_d, "diameter_out": diam_d,
                           "h_bound": table.h(diam)})
    if diam_d > table.h(diam) * (1 + _TOL):
        raise CechError(errors.FILL_FAILED, "filler diameter above h(diam c)",
                        diameter=diam_d, bound=table.h(diam))
    log(f"[FILL] stratum fill n={n} -> X_{table.f1}: {len(d)} simplices, diam {diam_d:.4g}")
    return (d, table) if return_table else d


# ---------- Class representatives ----------

def _tangent_frame(p):
    D = len(p)
    q, _ = np.linalg.qr(np.column_stack([p, np.eye(D)]))
    frame = q[:, 1:D]
    return frame.T


def cross_polytope_cycle(points, p, radius, k):
    """Boundary of the cross-polytope on the latitude sphere of given radius about p.

    It is the join of k+1 zero-spheres, so coefficients are sign products.
    """
    p = normalize(p)
    frame = _tangent_frame(p)
    verts = {}
    for a in range(k + 1):
        for s in (1, -1):
            verts[(a, s)] = points.intern(_from_polar(p, radius, s * frame[a]))
    terms = {}
    for signs in product((1, -1), repeat=k + 1):
        key = tuple(verts[(a, s)] for a, s in enumerate(signs))
        terms[key] = int(np.prod(signs))
    return Chain(terms, dim=k)


def _center_index(F, family):
    out = []
    for x in F:
        d = _angle(np.linalg.norm(family.centers - x, axis=1))
        j = int(np.argmin(d))
        if d[j] > 1e-9:
            raise CechError(errors.PRECONDITION_FAILED, "puncture is not a family center",
                            point=list(map(float, x)))
        out.append(j)
    return out


def represent_class(F, class_index, delta, family, points=None, profile=DEFAULT_PROFILE,
                    n_jobs=1):
    """Straight k-cycle in X_N avoiding F representing the class of a small
    sphere about F[class_index] in H_k(S - F).

    Returns (straight chain, discrete chain, N, derivation log).
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    ambient = F.shape[1]
    k = ambient - 2
    if k > 2 or k < 1:
        raise CechError(errors.UNSUPPORTED_DIMENSION, "class representatives need k in {1, 2}",
                        k=k)
    points = points if points is not None else PointSet(ambient)
    derivation = []
    if len(F) == 0:
        raise CechError(errors.PRECONDITION_FAILED, "F must be nonempty")
    centers = _center_index(F, family)
    if len(F) == 1:
        zero = Chain.zero(k)
        derivation.append({"step": "single puncture", "note": "H_k(S - F) = 0"})
        return StraightChain(zero, points), zero, 1, derivation
    if not 0 <= class_index < len(F) - 1:
        raise CechError(errors.PRECONDITION_FAILED, "class index out of range",
                        class_index=class_index, generators=len(F) - 1)
    K = family.K
    dF = _angle(cdist(F, F))
    D = float(dF[~np.eye(len(F), dtype=bool)].min()) / 3
    if delta >= D:
        raise CechError(errors.PRECONDITION_FAILED, "delta must be below D", delta=delta, D=D)
    r_top = float(family.radii.max()) if len(family) else math.pi
    slack = D / 3 - delta / 3
    N = max(int(math.ceil(4 * K ** 2)),
            int(math.ceil((4 * K ** 2 + 8 * K) * 2 * K * r_top / slack)))
    derivation.append({"step": "sphere radius", "D": D, "punctures": centers})
    derivation.append({"step": "stratum", "N": N, "r_top": r_top,
                       "inequality": "delta/3 + (4K^2+8K) * 2K r_top / N <= D/3"})
    r_cut = approx_radius(N, delta / 3, family)
    balls = detour_balls(family, 2 * K / N, r_cut)
    third = delta / 3
    need = input_field(balls, third, K, want_homotopy=True, strict=False, profile=profile)
    p = F[class_index]
    c0 = cross_polytope_cycle(points, p, D, k)
    cycle = bisect_to(c0, points, need, midpoint=LatitudeMidpoint(p, D))
    derivation.append({"step": "latitude cycle", "simplices": len(cycle), "r_cut": r_cut,
                       "detour_balls": len(balls)})
    rep = general_detour(cycle, points, balls, third, want_homotopy=True, profile=profile,
                         strict=False, n_jobs=n_jobs)
    if not rep.ok:
        failed = sorted(name for name, chk in rep.checks.items() if not chk["ok"])
        raise CechError(errors.FILL_FAILED, "detour of the latitude cycle failed", checks=failed)
    e = rep.homotopy
    if e:
        gap = float(_angle(cdist(_coords(points, e), F)).min())
        derivation.append({"step": "homotopy clearance", "distance_to_F": gap})
        if gap <= 0:
            raise CechError(errors.FILL_FAILED, "homotopy meets a puncture")
    disc = project_to_stratum(rep.output, points, N, third, family)
    if not is_cycle(disc):
        raise CechError(errors.FILL_FAILED, "representative is not a cycle")
    Xd = _coords(points, disc)
    if not family.in_stratum(Xd, N).all():
        raise CechError(errors.FILL_FAILED, "representative leaves X_N", N=N)
    if fineness(disc, points) > delta * (1 + _TOL):
        raise CechError(errors.FILL_FAILED, "representative coarser than delta",
                        fineness=fineness(disc, points), delta=delta)
    derivation.append({"step": "projection", "fineness": fineness(disc, points),
                       "vertices": len(Xd)})
    log(f"[DETOUR] class {class_index} of {len(F) - 1}: N={N}, {len(disc)} simplices")
    return StraightChain(disc, points), disc, N, derivation
