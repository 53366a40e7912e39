"""Nerves of finite covers, discrete complexes on a net, and their homology.

Integer homology comes from Smith normal forms of boundary matrices; field
ranks (rationals or a prime field) come from sympy domain matrices. Chain
groups use sorted, repeat-free tuples; ordered-tuple chains are pushed to this
basis with ``chain_core.orient``, which kills degenerate tuples. Cycles handed
in as ordered tuples are checked by ``orientation_witness``: what ``orient``
drops or reorders must be a boundary, so the class is unchanged.
"""

from dataclasses import dataclass, field
from math import gcd

import numpy as np
from joblib import Parallel, delayed
from sympy import GF, QQ, Matrix, Rational
from sympy.polys.matrices import DomainMatrix

from . import errors
from .chain_core import Chain, boundary, is_cycle, orient, orientation_homotopy
from .config import config
from .cover_engine import _bits, induced_chain_map
from .errors import CechError
from .log import log


# ---------- Complexes ----------

class SimplicialComplex:
    """Finite complex of sorted vertex tuples, graded by dimension."""

    kind = "complex"

    def __init__(self, simplices, max_dim, truncated=False, vertices=None):
        by_dim = {}
        for s in simplices:
            by_dim.setdefault(len(s) - 1, []).append(tuple(s))
        self.max_dim = max_dim
        self.truncated = truncated
        self.simplices = {d: sorted(set(v)) for d, v in by_dim.items()}
        self.index = {d: {s: i for i, s in enumerate(v)} for d, v in self.simplices.items()}
        self.vertices = list(vertices) if vertices is not None else [s[0] for s in self.cells(0)]

    def __len__(self):
        return sum(len(v) for v in self.simplices.values())

    def __contains__(self, s):
        s = tuple(s)
        return s in self.index.get(len(s) - 1, {})

    def cells(self, n):
        return self.simplices.get(n, [])

    def count(self, n):
        return len(self.cells(n))

    @property
    def dimension(self):
        return max(self.simplices, default=-1)

    @property
    def reliable_degree(self):
        """Highest degree whose homology the stored simplices determine."""
        return self.max_dim - 1 if self.truncated else self.max_dim

    def boundary_entries(self, n):
        """Sparse {(row, col): coefficient} of the n-th boundary map."""
        out = {}
        if n <= 0:
            return out
        rows = self.index.get(n - 1, {})
        for col, s in enumerate(self.cells(n)):
            for i in range(len(s)):
                out[(rows[s[:i] + s[i + 1:]], col)] = -1 if i % 2 else 1
        return out

    def boundary_matrix(self, n, augmented=False):
        """Dense integer matrix, rows = (n-1)-cells, columns = n-cells.

        With ``augmented`` the 0-th map is the 1 x |C_0| augmentation.
        """
        if n == 0:
            if augmented and self.count(0):
                return np.ones((1, self.count(0)), dtype=object)
            return np.zeros((0, self.count(0)), dtype=object)
        A = np.zeros((self.count(n - 1), self.count(n)), dtype=object)
        for (r, c), v in self.boundary_entries(n).items():
            A[r, c] = v
        return A

    def coboundary_matrix(self, n):
        return self.boundary_matrix(n + 1).T

    def chain_vector(self, c):
        """Coordinates of a chain in the sorted-tuple basis of C_dim."""
        c = orient(c)
        vec = [0] * self.count(c.dim)
        idx = self.index.get(c.dim, {})
        for s, k in c.terms.items():
            pos = idx.get(s)
            if pos is None:
                raise CechError(errors.PRECONDITION_FAILED, "chain leaves the complex", simplex=s)
            vec[pos] += k
        return vec

    def vector_chain(self, vec, n):
        return Chain({s: int(k) for s, k in zip(self.cells(n), vec) if k}, dim=n)

    def to_record(self):
        return {
            "kind": self.kind,
            "max_dim": self.max_dim,
            "truncated": self.truncated,
            "counts": [self.count(n) for n in range(self.dimension + 1)],
            "simplices": {str(d): [list(s) for s in v] for d, v in sorted(self.simplices.items())},
        }


class NerveComplex(SimplicialComplex):
    kind = "nerve"

    def __init__(self, simplices, max_dim, truncated=False, cover=None):
        super().__init__(simplices, max_dim, truncated)
        self.cover = cover


class DiscreteComplex(SimplicialComplex):
    """O-fine simplices on net points: tuples contained in one cover set."""

    kind = "discrete"

    def __init__(self, simplices, max_dim, truncated=False, cover=None):
        super().__init__(simplices, max_dim, truncated)
        self.cover = cover


def _clique_enumerate(labels, bits, max_dim, budget):
    """All label tuples whose bitsets share a common bit, up to max_dim+1 labels."""
    out = []
    truncated = False
    live = [i for i, b in enumerate(bits) if b]

    def grow(simplex, acc, start):
        nonlocal truncated
        for pos in range(start, len(live)):
            v = live[pos]
            common = acc & bits[v]
            if not common:
                continue
            if len(simplex) == max_dim + 1:
                truncated = True
                return
            s = simplex + (labels[v],)
            out.append(s)
            if len(out) > budget:
                raise CechError(errors.COMPLEX_TOO_LARGE, "simplex budget exceeded",
                                budget=budget, max_dim=max_dim)
            grow(s, common, pos + 1)

    grow((), -1, 0)
    return out, truncated


def _default_cap(O):
    """k + 2 for a cover of S^(k+1)."""
    return O.net.ambient_dim if O.net is not None else 2


def nerve(O, max_dim=None, budget=None):
    """Nerve of a finite cover; intersections are decided on the cover's net."""
    max_dim = _default_cap(O) if max_dim is None else max_dim
    budget = config["complex_budget"] if budget is None else budget
    simplices, truncated = _clique_enumerate(list(range(len(O.sets))), O.bitsets, max_dim, budget)
    log(f"[NERVE] {O.name or 'cover'}: {len(simplices)} simplices up to dim {max_dim}")
    return NerveComplex(simplices, max_dim, truncated, cover=O)


def discrete_complex(O, net=None, max_dim=None, budget=None):
    max_dim = _default_cap(O) if max_dim is None else max_dim
    budget = config["complex_budget"] if budget is None else budget
    if net is None or net is O.net:
        M = O.membership
        labels = O.domain.tolist()
        rows = M[O.domain]
    else:
        X = net.coords
        rows = np.column_stack([s.contains(X, O.family) for s in O.sets]) if O.sets \
            else np.zeros((len(X), 0), dtype=bool)
        labels = list(range(len(X)))
    bits = [_bits(r) for r in rows]
    simplices, truncated = _clique_enumerate(labels, bits, max_dim, budget)
    log(f"[NERVE] discrete complex: {len(simplices)} simplices on {len(labels)} points")
    return DiscreteComplex(simplices, max_dim, truncated, cover=O)


# ---------- Smith normal form ----------

def _exgcd(a, b):
    """Unimodular 2x2 M with M @ (a, b) = (g, 0), g = gcd(a, b) >= 0.

    When a divides b the first row is (sign(a), 0).
    """
    if a == 0 and b == 0:
        return np.array([[1, 0], [0, 1]], dtype=object)
    if a != 0 and b % a == 0:
        s = 1 if a > 0 else -1
        return np.array([[s, 0], [-b // a, 1]], dtype=object)
    old_r, r = a, b
    old_x, x = 1, 0
    old_y, y = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_x, x = x, old_x - q * x
        old_y, y = y, old_y - q * y
    g = old_r
    if g < 0:
        g, old_x, old_y = -g, -old_x, -old_y
    return np.array([[old_x, old_y], [-b // g, a // g]], dtype=object)


def _inv2(M):
    """Inverse of a 2x2 integer matrix of determinant +1 or -1."""
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    return det * np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]], dtype=object)


@dataclass
class SmithNormalForm:
    """U @ A @ V = D with U, V unimodular; Uinv and Vinv are their inverses."""

    A: np.ndarray
    D: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Uinv: np.ndarray
    Vinv: np.ndarray

    @property
    def factors(self):
        k = min(self.D.shape)
        return [int(self.D[i, i]) for i in range(k) if self.D[i, i] != 0]

    @property
    def rank(self):
        return len(self.factors)

    @property
    def torsion(self):
        return [d for d in self.factors if d > 1]

    def verify(self):
        m, n = self.A.shape
        if not ((self.U @ self.A @ self.V) == self.D).all():
            return False
        if m and not (self.U @ self.Uinv == np.eye(m, dtype=object)).all():
            return False
        if n and not (self.V @ self.Vinv == np.eye(n, dtype=object)).all():
            return False
        off = self.D.copy()
        for i in range(min(m, n)):
            off[i, i] = 0
        if (off != 0).any():
            return False
        f = self.factors
        return all(d > 0 for d in f) and all(f[i + 1] % f[i] == 0 for i in range(len(f) - 1))

    def to_record(self):
        return {"shape": list(self.A.shape), "factors": self.factors,
                "U": self.U.tolist(), "V": self.V.tolist()}


def smith_normal_form(A, certify=True):
    """Exact SNF with certificates; pivots are the smallest remaining entries."""
    A = np.array(A, dtype=object)
    if A.ndim != 2:
        A = A.reshape(0, 0) if A.size == 0 else np.atleast_2d(A)
    A = np.vectorize(int, otypes=[object])(A) if A.size else A
    m, n = A.shape
    D = A.copy()
    U, V = np.eye(m, dtype=object), np.eye(n, dtype=object)
    Uinv, Vinv = U.copy(), V.copy()

    def row_op(M, i, j):
        D[[i, j]] = M @ D[[i, j]]
        U[[i, j]] = M @ U[[i, j]]
        Uinv[:, [i, j]] = Uinv[:, [i, j]] @ _inv2(M)

    def col_op(M, i, j):
        D[:, [i, j]] = D[:, [i, j]] @ M.T
        V[:, [i, j]] = V[:, [i, j]] @ M.T
        Vinv[[i, j]] = _inv2(M.T) @ Vinv[[i, j]]

    swap = np.array([[0, 1], [1, 0]], dtype=object)

    for t in range(min(m, n)):
        block = D[t:, t:]
        nz = np.argwhere(block != 0)
        if not len(nz):
            break
        mags = [abs(block[i, j]) for i, j in nz]
        pi, pj = nz[int(np.argmin(mags))]
        if pi:
            row_op(swap, t, t + pi)
        if pj:
            col_op(swap, t, t + pj)
        while True:
            for i in range(t + 1, m):
                if D[i, t] != 0:
                    row_op(_exgcd(D[t, t], D[i, t]), t, i)
            dirty = False
            for j in range(t + 1, n):
                if D[t, j] != 0:
                    col_op(_exgcd(D[t, t], D[t, j]), t, j)
                    dirty = True
            if dirty and (D[t + 1:, t] != 0).any():
                continue
            p = D[t, t]
            bad = np.argwhere(D[t + 1:, t + 1:] % p != 0) if p else []
            if not len(bad):
                break
            i = t + 1 + int(bad[0][0])
            row_op(np.array([[1, 1], [0, 1]], dtype=object), t, i)
        if D[t, t] < 0:
            D[t] = -D[t]
            U[t] = -U[t]
            Uinv[:, t] = -Uinv[:, t]
    snf = SmithNormalForm(A, D, U, V, Uinv, Vinv)
    if certify and not snf.verify():
        raise ArithmeticError("Smith normal form certificate failed")
    return snf


def _unit_prereduce(entries, shape):
    """Eliminate unit pivots of a sparse integer matrix.

    Returns (number of unit pivots, dense remainder). Unit pivots contribute
    invariant factors 1 and leave the rest of the SNF unchanged.
    """
    m, n = shape
    rows = [dict() for _ in range(m)]
    cols = [set() for _ in range(n)]
    for (r, c), v in entries.items():
        if v:
            rows[r][c] = int(v)
            cols[c].add(r)
    alive_rows = set(range(m))
    alive_cols = set(range(n))
    units = 0
    progress = True
    while progress:
        progress = False
        for r in sorted(alive_rows, key=lambda r: len(rows[r])):
            pivot = next((c for c, v in rows[r].items() if abs(v) == 1), None)
            if pivot is None:
                continue
            u = rows[r][pivot]
            for r2 in list(cols[pivot]):
                if r2 == r:
                    continue
                f = rows[r2][pivot] * u
                for c, v in rows[r].items():
                    nv = rows[r2].get(c, 0) - f * v
                    if nv:
                        rows[r2][c] = nv
                        cols[c].add(r2)
                    else:
                        rows[r2].pop(c, None)
                        cols[c].discard(r2)
            for c in rows[r]:
                cols[c].discard(r)
            rows[r] = {}
            alive_rows.discard(r)
            alive_cols.discard(pivot)
            units += 1
            progress = True
            break
    keep_r = sorted(r for r in alive_rows if rows[r])
    keep_c = sorted(c for c in alive_cols if cols[c])
    cpos = {c: i for i, c in enumerate(keep_c)}
    rest = np.zeros((len(keep_r), len(keep_c)), dtype=object)
    for i, r in enumerate(keep_r):
        for c, v in rows[r].items():
            rest[i, cpos[c]] = v
    return units, rest


def invariant_factors(entries, shape):
    """Nonzero invariant factors of a sparse integer matrix."""
    if not entries:
        return []
    units, rest = _unit_prereduce(entries, shape)
    factors = [1] * units
    if rest.size:
        if max(rest.shape) > config["snf_dense_limit"]:
            log(f"[SNF] dense remainder {rest.shape} above the dense limit")
        factors += smith_normal_form(rest).factors
    return sorted(factors)


# ---------- Ranks ----------

def _domain_rank(entries, shape, domain):
    m, n = shape
    if not m or not n or not entries:
        return 0
    zero = domain.zero
    rows = [[zero] * n for _ in range(m)]
    for (r, c), v in entries.items():
        rows[r][c] = domain(int(v))
    return DomainMatrix(rows, (m, n), domain).rank()


def fraction_free_rank(A):
    """Bareiss elimination rank over the integers, independent of the SNF path."""
    M = [[int(v) for v in row] for row in np.asarray(A, dtype=object).tolist()]
    if not M or not M[0]:
        return 0
    m, n = len(M), len(M[0])
    prev = 1
    rank = 0
    for col in range(n):
        piv = next((r for r in range(rank, m) if M[r][col] != 0), None)
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        p = M[rank][col]
        for r in range(rank + 1, m):
            for c in range(col + 1, n):
                M[r][c] = (p * M[r][c] - M[r][col] * M[rank][c]) // prev
            M[r][col] = 0
        prev = p
        rank += 1
        if rank == m:
            break
    return rank


def _field(coeffs):
    if coeffs in ("ZZ", "QQ"):
        return QQ
    p = int(coeffs)
    if p < 2 or any(p % q == 0 for q in range(2, int(p ** 0.5) + 1)):
        raise ValueError(f"coefficients must be ZZ, QQ or a prime, got {coeffs!r}")
    return GF(p)


def _degree_data(N, n, coeffs, augmented):
    """(rank, invariant factors) of the n-th boundary map."""
    if n == 0:
        r = 1 if augmented and N.count(0) else 0
        return r, [1] * r
    entries = N.boundary_entries(n)
    shape = (N.count(n - 1), N.count(n))
    if coeffs == "ZZ":
        f = invariant_factors(entries, shape)
        return len(f), f
    r = _domain_rank(entries, shape, _field(coeffs))
    return r, []


# ---------- Homology ----------

@dataclass
class HomologyGroups:
    coeffs: str
    betti: list
    torsion: list
    reduced: bool = False
    kind: str = "homology"
    ranks: list = field(default_factory=list)

    def to_record(self):
        return {"kind": self.kind, "coeffs": self.coeffs, "reduced": self.reduced,
                "betti": list(self.betti), "torsion": [list(t) for t in self.torsion],
                "boundary_ranks": list(self.ranks)}

    def rows(self):
        """Betti table rows for CSV export."""
        return [{"kind": self.kind, "coeffs": self.coeffs, "degree": n, "betti": b,
                 "torsion": " ".join(map(str, t))}
                for n, (b, t) in enumerate(zip(self.betti, self.torsion))]


def homology(N, coeffs="ZZ", reduced=False, max_degree=None, n_jobs=1):
    """Betti numbers and torsion per degree.

    ``coeffs`` is "ZZ", "QQ" or a prime p. Degrees above the reliable degree
    of a truncated complex are not reported.
    """
    coeffs = str(coeffs)
    _field(coeffs)
    top = N.reliable_degree if max_degree is None else min(max_degree, N.reliable_degree)
    top = max(top, 0)
    degrees = list(range(top + 2))
    if n_jobs == 1:
        data = [_degree_data(N, n, coeffs, reduced) for n in degrees]
    else:
        data = Parallel(n_jobs=n_jobs)(delayed(_degree_data)(N, n, coeffs, reduced)
                                       for n in degrees)
    ranks = [d[0] for d in data]
    betti, torsion = [], []
    for n in range(top + 1):
        betti.append(N.count(n) - ranks[n] - ranks[n + 1])
        torsion.append([d for d in data[n + 1][1] if d > 1])
    log(f"[HOMOLOGY] {coeffs} betti={betti}")
    return HomologyGroups(coeffs, betti, torsion, reduced, "homology", ranks)


def cohomology(N, coeffs="ZZ", max_degree=None):
    """Cohomology from coboundary matrices; torsion of H^n is that of H_{n-1}."""
    coeffs = str(coeffs)
    top = N.reliable_degree if max_degree is None else min(max_degree, N.reliable_degree)
    top = max(top, 0)
    betti, torsion, ranks = [], [], []
    for n in range(top + 1):
        delta_in = N.coboundary_matrix(n - 1) if n else np.zeros((N.count(0), 0), dtype=object)
        delta_out = N.coboundary_matrix(n)
        r_in = _dense_rank(delta_in, coeffs)
        r_out = _dense_rank(delta_out, coeffs)
        betti.append(N.count(n) - r_in - r_out)
        if coeffs == "ZZ" and delta_in.size:
            torsion.append([d for d in smith_normal_form(delta_in).factors if d > 1])
        else:
            torsion.append([])
        ranks.append(r_out)
    return HomologyGroups(coeffs, betti, torsion, False, "cohomology", ranks)


def _dense_rank(A, coeffs):
    entries = {(r, c): int(A[r, c]) for r, c in np.argwhere(A != 0)} if A.size else {}
    if coeffs == "ZZ":
        return len(invariant_factors(entries, A.shape))
    return _domain_rank(entries, A.shape, _field(coeffs))


def discrete_homology_at_scale(O, net=None, max_dim=1, coeffs="ZZ"):
    """Homology of the O-fine discrete chain complex on the net, through max_dim."""
    K = discrete_complex(O, net, max_dim + 1)
    return homology(K, coeffs, max_degree=max_dim)


# ---------- Bases and induced maps ----------

def _primitive(col):
    den = 1
    for v in col:
        den = den * Rational(v).q // gcd(den, Rational(v).q)
    ints = [int(Rational(v) * den) for v in col]
    g = 0
    for v in ints:
        g = gcd(g, abs(v))
    return [v // g for v in ints] if g else ints


def orientation_witness(z):
    """Chain w with boundary(w) == z - orient(z) for an ordered-tuple cycle z.

    Degenerate and reordered generators of z are boundaries, so z and orient(z)
    carry the same class.
    """
    if not is_cycle(z):
        raise CechError(errors.PRECONDITION_FAILED, "orientation witness needs a cycle",
                        dimension=z.dim)
    w = orientation_homotopy()(z)
    if boundary(w) != z - orient(z):
        degenerate = sorted(s for s in z.terms if len(set(s)) < len(s))
        raise CechError(errors.WELLDEF_FAILED, "degenerate generators are not boundaries",
                        degenerate=[list(s) for s in degenerate[:10]])
    return w


def homology_basis(N, degree):
    """Integer cycles whose classes form a basis of H_degree over the rationals."""
    n = degree
    if n > N.reliable_degree:
        raise CechError(errors.PRECONDITION_FAILED, "degree above the complex cap",
                        degree=n, cap=N.reliable_degree)
    size = N.count(n)
    if not size:
        return []
    if n == 0:
        Z = [[1 if i == j else 0 for i in range(size)] for j in range(size)]
    else:
        Z = [_primitive(list(v)) for v in Matrix(N.boundary_matrix(n).tolist()).nullspace()]
    B = N.boundary_matrix(n + 1)
    cols = [list(B[:, j]) for j in range(B.shape[1])]
    entries = {(i, j): v for j, col in enumerate(cols) for i, v in enumerate(col) if v}
    current = _domain_rank(entries, (size, len(cols)), QQ)
    chosen = []
    for z in Z:
        j = len(cols)
        trial = dict(entries)
        for i, v in enumerate(z):
            if v:
                trial[(i, j)] = v
        r = _domain_rank(trial, (size, j + 1), QQ)
        if r > current:
            cols.append(z)
            entries, current = trial, r
            chosen.append(N.vector_chain(z, n))
    return chosen


def homology_coordinates(N, z, basis):
    """Rational coordinates of the class of cycle z in the given homology basis."""
    n = z.dim
    if orient(z) != z:
        orientation_witness(z)
    vec = N.chain_vector(z)
    H = [N.chain_vector(h) for h in basis]
    B = N.boundary_matrix(n + 1)
    cols = H + [list(B[:, j]) for j in range(B.shape[1])]
    if not cols:
        return []
    A = Matrix([[col[i] for col in cols] for i in range(len(vec))])
    try:
        sol, params = A.gauss_jordan_solve(Matrix(vec))
    except ValueError as e:
        raise CechError(errors.PRECONDITION_FAILED, "chain is not a cycle of the complex") from e
    sol = sol.xreplace({t: 0 for t in params})
    return [Rational(sol[i]) for i in range(len(H))]


def _default_complexes(fmap, max_dim):
    kind = fmap.kind
    if kind == "spouse":
        return nerve(fmap.source, max_dim), nerve(fmap.target, max_dim)
    if kind == "parent":
        return discrete_complex(fmap.source, None, max_dim), nerve(fmap.target, max_dim)
    if kind == "child":
        tgt = fmap.target if fmap.target is not None else fmap.source
        return nerve(fmap.source, max_dim), discrete_complex(tgt, fmap.source.net, max_dim)
    if kind == "sibling":
        return (discrete_complex(fmap.source, None, max_dim),
                discrete_complex(fmap.target, fmap.source.net, max_dim))
    raise ValueError(f"unknown family map kind {kind!r}")


def induced_on_homology(fmap, degree, source=None, target=None, return_bases=False):
    """Integer matrix of the map a family map induces on H_degree.

    Columns are images of the source basis, rows the target basis coordinates.
    Entries stay Python ints (object dtype), so large coordinates are exact.
    """
    if source is None or target is None:
        s, t = _default_complexes(fmap, degree + 1)
        source = s if source is None else source
        target = t if target is None else target
    src_basis = homology_basis(source, degree)
    tgt_basis = homology_basis(target, degree)
    chain_map = induced_chain_map(fmap)
    mat = np.zeros((len(tgt_basis), len(src_basis)), dtype=object)
    for j, h in enumerate(src_basis):
        image = chain_map(h)
        orientation_witness(image)
        image = orient(image)
        coords = homology_coordinates(target, image, tgt_basis)
        for i, q in enumerate(coords):
            if q.q != 1:
                raise CechError(errors.WELLDEF_FAILED, "non-integral homology coordinate",
                                row=i, column=j, value=str(q))
            mat[i, j] = int(q)
    log(f"[HOMOLOGY] induced {fmap.kind} map on H_{degree}: shape {mat.shape}")
    if return_bases:
        return mat, src_basis, tgt_basis
    return mat
