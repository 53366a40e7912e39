"""Discrete chains over a finite point store.

A simplex is an ordered tuple of point indices (repeats allowed). The empty
tuple ``()`` is the (-1)-simplex used by cones and by the augmented boundary.
Coefficients are Python ints, so every identity below is exact.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

EMPTY = ()
UNIT_TOL = 1e-12


def geodesic(u, v):
    """Angular distance between two unit vectors given as tuples."""
    chord = math.dist(u, v)
    return 2.0 * math.asin(min(1.0, chord / 2.0))


def geodesic_to_many(X, y):
    X = np.asarray(X, dtype=float)
    chord = np.linalg.norm(X - np.asarray(y, dtype=float), axis=-1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


# ---------- Points ----------

class PointSet:
    """Append-only store of unit vectors addressed by integer index.

    Indices never change once handed out, so chains built against an earlier
    state stay valid as fillers add new points.
    """

    def __init__(self, ambient_dim, coords=None):
        self.ambient_dim = int(ambient_dim)
        self._rows = []
        self._array = None
        self._lookup = {}
        self._dist = {}
        if coords is not None:
            self.extend(coords)

    def __len__(self):
        return len(self._rows)

    @property
    def coords(self):
        if self._array is None or len(self._array) != len(self._rows):
            rows = np.array(self._rows, dtype=float)
            self._array = rows.reshape(len(self._rows), self.ambient_dim)
        return self._array

    def _unit_row(self, x, normalize):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.ambient_dim:
            raise ValueError(f"expected {self.ambient_dim} coordinates, got {x.shape[0]}")
        norm = float(np.linalg.norm(x))
        if normalize:
            if norm == 0.0 or not math.isfinite(norm):
                raise ValueError("cannot normalize a zero or non-finite vector")
            x = x / norm
        elif abs(norm - 1.0) > UNIT_TOL:
            raise ValueError(f"point norm {norm!r} is not 1")
        return tuple(float(v) for v in x)

    def add(self, x, normalize=True):
        row = self._unit_row(x, normalize)
        idx = len(self._rows)
        self._rows.append(row)
        self._lookup.setdefault(row, idx)
        return idx

    def intern(self, x, normalize=True):
        """Index of an existing point with exactly these coordinates, else a new one."""
        row = self._unit_row(x, normalize)
        idx = self._lookup.get(row)
        if idx is not None:
            return idx
        idx = len(self._rows)
        self._rows.append(row)
        self._lookup[row] = idx
        return idx

    def extend(self, xs, normalize=True):
        return [self.add(x, normalize=normalize) for x in xs]

    def row(self, i):
        return self._rows[i]

    def __getitem__(self, i):
        return np.array(self._rows[i])

    def distance(self, i, j):
        if i == j:
            return 0.0
        key = (i, j) if i < j else (j, i)
        d = self._dist.get(key)
        if d is None:
            d = geodesic(self._rows[i], self._rows[j])
            self._dist[key] = d
        return d

    def diameter(self, indices):
        pts = sorted(set(indices))
        best = 0.0
        for a, b in combinations(pts, 2):
            d = self.distance(a, b)
            if d > best:
                best = d
        return best

    def distance_to(self, i, y):
        return geodesic(self._rows[i], tuple(float(v) for v in y))

    def to_record(self):
        return {"ambient_dim": self.ambient_dim, "coords": [list(r) for r in self._rows]}

    @classmethod
    def from_record(cls, rec):
        ps = cls(rec["ambient_dim"])
        for row in rec["coords"]:
            ps.add(row, normalize=False)
        return ps


# ---------- Chains ----------

class Chain:
    """Integer formal sum of equal-length vertex tuples, zero terms dropped."""

    __slots__ = ("terms", "dim")

    def __init__(self, terms=None, dim=None):
        clean = {}
        for simplex, coeff in (terms or {}).items():
            coeff = int(coeff)
            if coeff:
                clean[tuple(int(v) for v in simplex)] = coeff
        dims = {len(s) - 1 for s in clean}
        if len(dims) > 1:
            raise ValueError(f"mixed simplex dimensions {sorted(dims)}")
        if dims:
            found = dims.pop()
            if dim is not None and dim != found:
                raise ValueError(f"declared dimension {dim} but simplices have {found}")
            dim = found
        self.terms = clean
        self.dim = 0 if dim is None else int(dim)

    @classmethod
    def _raw(cls, acc, dim):
        obj = object.__new__(cls)
        obj.terms = {s: k for s, k in acc.items() if k}
        obj.dim = dim
        return obj

    @classmethod
    def zero(cls, dim=0):
        return cls._raw({}, dim)

    def _join_dim(self, other):
        if not self.terms:
            return other.dim
        if not other.terms:
            return self.dim
        if self.dim != other.dim:
            raise ValueError(f"cannot add chains of dimension {self.dim} and {other.dim}")
        return self.dim

    def __add__(self, other):
        if not isinstance(other, Chain):
            return NotImplemented
        dim = self._join_dim(other)
        acc = dict(self.terms)
        for s, k in other.terms.items():
            acc[s] = acc.get(s, 0) + k
        return Chain._raw(acc, dim)

    def __neg__(self):
        return Chain._raw({s: -k for s, k in self.terms.items()}, self.dim)

    def __sub__(self, other):
        if not isinstance(other, Chain):
            return NotImplemented
        return self + (-other)

    def __mul__(self, n):
        if not isinstance(n, int):
            return NotImplemented
        return Chain._raw({s: n * k for s, k in self.terms.items()}, self.dim)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, int) and other == 0:
            return not self.terms
        if not isinstance(other, Chain):
            return NotImplemented
        return self.terms == other.terms and (self.dim == other.dim or not self.terms)

    __hash__ = None

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms.items()))

    def coefficient(self, simplex):
        return self.terms.get(tuple(simplex), 0)

    def simplices(self):
        return sorted(self.terms)

    def __repr__(self):
        if not self.terms:
            return f"Chain.zero({self.dim})"
        parts = []
        for s, k in self:
            body = "[" + ",".join(map(str, s)) + "]"
            parts.append(body if k == 1 else f"{k}{body}")
        return " + ".join(parts)

    def to_record(self):
        return {
            "dimension": self.dim,
            "terms": [{"vertices": list(s), "coeff": k} for s, k in self],
        }

    @classmethod
    def from_record(cls, rec):
        terms = {}
        for t in rec["terms"]:
            key = tuple(t["vertices"])
            terms[key] = terms.get(key, 0) + int(t["coeff"])
        return cls(terms, dim=rec["dimension"])


def simplex(*vertices, coeff=1):
    return Chain({tuple(vertices): coeff}, dim=len(vertices) - 1)


def chain_sum(chains, dim):
    acc = {}
    for c in chains:
        if c.terms and c.dim != dim:
            raise ValueError(f"chain of dimension {c.dim} in a sum of dimension {dim}")
        for s, k in c.terms.items():
            acc[s] = acc.get(s, 0) + k
    return Chain._raw(acc, dim)


def coefficient_sum(c):
    return sum(c.terms.values())


def boundary(c, augmented=False):
    """Alternating face sum. A 0-chain goes to zero unless ``augmented``."""
    acc = {}
    for s, k in c.terms.items():
        n = len(s)
        if n == 1:
            if augmented:
                acc[EMPTY] = acc.get(EMPTY, 0) + k
            continue
        for i in range(n):
            face = s[:i] + s[i + 1:]
            acc[face] = acc.get(face, 0) + (k if i % 2 == 0 else -k)
    return Chain._raw(acc, c.dim - 1)


def cone(x, c):
    return Chain._raw({(x,) + s: k for s, k in c.terms.items()}, c.dim + 1)


def support(c):
    return frozenset(v for s in c.terms for v in s)


def fineness(c, points, metric=None):
    """Largest simplex diameter; ``metric`` takes two coordinate tuples."""
    if metric is None:
        return max((points.diameter(s) for s in c.terms), default=0.0)
    best = 0.0
    for s in c.terms:
        for a, b in combinations(sorted(set(s)), 2):
            best = max(best, metric(points.row(a), points.row(b)))
    return best


def chain_diameter(c, points):
    return points.diameter(support(c))


def is_reduced(c):
    if c.dim >= 1:
        return True
    return coefficient_sum(c) == 0


def is_cycle(c):
    return not boundary(c)


def is_reduced_cycle(c):
    return is_reduced(c) and is_cycle(c)


def is_tiny(vertices, cover, points):
    vs = sorted(set(vertices))
    if not vs:
        return True
    return cover.tiny(points.coords[vs])


def is_fine(c, cover, points):
    seen = set()
    for s in c.terms:
        key = frozenset(s)
        if key in seen:
            continue
        if not is_tiny(key, cover, points):
            return False
        seen.add(key)
    return True


@dataclass(frozen=True)
class FaceComplex:
    generators: frozenset

    def __len__(self):
        return len(self.generators)

    def __contains__(self, simplex):
        return tuple(simplex) in self.generators

    def by_dimension(self):
        out = {}
        for s in sorted(self.generators):
            out.setdefault(len(s) - 1, []).append(s)
        return out

    def vertices(self):
        return frozenset(v for s in self.generators for v in s)


def face_complex(c):
    faces = set()
    for s in c.terms:
        for size in range(1, len(s) + 1):
            for pos in combinations(range(len(s)), size):
                faces.add(tuple(s[i] for i in pos))
    return FaceComplex(frozenset(faces))


# ---------- Chain maps and homotopies ----------

def _sort_sign(s):
    inversions = 0
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] > s[j]:
                inversions += 1
    return -1 if inversions % 2 else 1


def orient(c):
    """Chain map onto sorted tuples without repeats (degenerate simplices vanish)."""
    acc = {}
    for s, k in c.terms.items():
        if len(set(s)) < len(s):
            continue
        key = tuple(sorted(s))
        acc[key] = acc.get(key, 0) + _sort_sign(s) * k
    return Chain._raw(acc, c.dim)


def vertex_map(c, f):
    """Apply a vertex map (dict or callable) simplex-wise; always a chain map."""
    get = f.__getitem__ if isinstance(f, dict) else f
    acc = {}
    for s, k in c.terms.items():
        key = tuple(get(v) for v in s)
        acc[key] = acc.get(key, 0) + k
    return Chain._raw(acc, c.dim)


def prism(c, f, g):
    """Prism operator for vertex maps f, g: satisfies dH + Hd = g - f."""
    fget = f.__getitem__ if isinstance(f, dict) else f
    gget = g.__getitem__ if isinstance(g, dict) else g
    acc = {}
    for s, k in c.terms.items():
        fs = [fget(v) for v in s]
        gs = [gget(v) for v in s]
        for i in range(len(s)):
            key = tuple(fs[: i + 1]) + tuple(gs[i:])
            acc[key] = acc.get(key, 0) + (k if i % 2 == 0 else -k)
    return Chain._raw(acc, c.dim + 1)


class ConeHomotopy:
    """Homotopy H with dH + Hd = id - T, for an augmentation-preserving chain map T.

    H[v] = cone(v, [v] - T[v]) and H(s) = cone(s[0], s - T(s) - H(ds)); every
    vertex of H(s) lies in s or in T(s).
    """

    def __init__(self, T):
        self.T = T
        self._cache = {}

    def on_simplex(self, s):
        h = self._cache.get(s)
        if h is None:
            sigma = Chain._raw({s: 1}, len(s) - 1)
            z = sigma - self.T(sigma) - self(boundary(sigma))
            h = cone(s[0], z)
            self._cache[s] = h
        return h

    def __call__(self, c):
        acc = {}
        for s, k in c.terms.items():
            for t, m in self.on_simplex(s).terms.items():
                acc[t] = acc.get(t, 0) + k * m
        return Chain._raw(acc, c.dim + 1)


def orientation_homotopy():
    return ConeHomotopy(orient)


def strip_constant_cycles(c):
    """Drop odd-dimensional constant simplices [a,...,a]; each is a cycle."""
    acc = {s: k for s, k in c.terms.items()
           if not (len(s) % 2 == 0 and len(set(s)) == 1)}
    return Chain._raw(acc, c.dim)
