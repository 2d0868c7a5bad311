"""Finite geometric simplicial complexes with exact rational coordinates.

Simplices are sorted tuples of vertex indices.  All geometric predicates
(affine independence, point location, star membership) are evaluated in
``fractions.Fraction`` arithmetic; floats only appear in candidate
filtering and in the ``coords`` view used by the numeric engine.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateSimplex,
    DuplicateVertex,
    EmptyComplex,
    InputError,
    NotSimplicial,
    PointOutsideComplex,
    SubcomplexMismatch,
)

Point = tuple  # tuple[Fraction, ...]
Simplex = tuple  # tuple[int, ...]


def as_point(coords) -> Point:
    return tuple(c if isinstance(c, Fraction) else Fraction(c) for c in coords)


def sq_dist(a: Point, b: Point) -> Fraction:
    return sum(((x - y) * (x - y) for x, y in zip(a, b)), Fraction(0))


def barycenter(points: Sequence[Point]) -> Point:
    n = len(points)
    return tuple(sum(c) / n for c in zip(*points))


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _rank(rows) -> int:
    """Rank of a Fraction matrix given as a list of rows."""
    m = [list(r) for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        p = m[rank][col]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                factor = m[r][col] / p
                m[r] = [a - factor * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def _inverse(mat):
    """Gauss-Jordan inverse of a square Fraction matrix."""
    n = len(mat)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(mat)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[pivot] = aug[pivot], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def affinely_independent(points: Sequence[Point]) -> bool:
    if len(points) <= 1:
        return True
    v0 = points[0]
    return _rank([_sub(p, v0) for p in points[1:]]) == len(points) - 1


def _over_common(values):
    """Integers and a shared positive denominator for a sequence of Fractions."""
    den = math.lcm(*(v.denominator for v in values)) if values else 1
    return [v.numerator * (den // v.denominator) for v in values], den


class _AffineFrame:
    """Exact barycentric coordinates with respect to one simplex."""

    __slots__ = ("v0", "cols", "pinv", "v0f", "pinvf", "_v0i", "_r", "_P", "_D", "_C", "_E", "_full")

    def __init__(self, points: Sequence[Point]):
        self.v0 = points[0]
        self.cols = [_sub(p, self.v0) for p in points[1:]]
        k = len(self.cols)
        d = len(self.v0)
        if k:
            gram = [[sum((a * b for a, b in zip(ci, cj)), Fraction(0)) for cj in self.cols] for ci in self.cols]
            ginv = _inverse(gram)
            self.pinv = [
                [sum((ginv[i][j] * self.cols[j][t] for j in range(k)), Fraction(0)) for t in range(d)]
                for i in range(k)
            ]
        else:
            self.pinv = []
        self.v0f = [float(c) for c in self.v0]
        self.pinvf = [[float(c) for c in row] for row in self.pinv]
        # integer forms: pinv = P / D, cols = C / E, v0 = v0i / r
        self._v0i, self._r = _over_common(list(self.v0))
        flat, self._D = _over_common([c for row in self.pinv for c in row])
        self._P = [flat[i * d : (i + 1) * d] for i in range(k)]
        flat, self._E = _over_common([c for col in self.cols for c in col])
        self._C = [flat[j * d : (j + 1) * d] for j in range(k)]
        self._full = k == d

    def coords(self, x: Point):
        """Barycentric coordinates of ``x`` or None if off the affine hull."""
        xi, q = _over_common(list(x))
        r = self._r
        diff = [a * r - b * q for a, b in zip(xi, self._v0i)]  # (x - v0) * q * r
        nums = [sum(p * t for p, t in zip(row, diff)) for row in self._P]
        if not self._full:
            scale = self._D * self._E
            for t in range(len(diff)):
                if sum(self._C[j][t] * nums[j] for j in range(len(nums))) != diff[t] * scale:
                    return None
        den = self._D * q * r
        lam = [Fraction(n, den) for n in nums]
        return (Fraction(den - sum(nums), den), *lam)

    def maybe_inside(self, xf, tol=1e-9) -> bool:
        diff = [a - b for a, b in zip(xf, self.v0f)]
        lam = [sum(a * b for a, b in zip(row, diff)) for row in self.pinvf]
        return min(lam, default=0.0) >= -tol and 1.0 - sum(lam) >= -tol


@dataclass(frozen=True)
class FlagLabel:
    """A vertex of an iterated subdivision named by a descending face chain.

    The labelled point is the barycenter of b(S_0), ..., b(S_k).
    """

    chain: tuple

    def __post_init__(self):
        for big, small in zip(self.chain, self.chain[1:]):
            if not (set(small) < set(big)):
                raise InputError(f"flag chain not strictly descending: {self.chain}")

    @property
    def last(self) -> Simplex:
        return self.chain[-1]

    def point(self, base: "SimplicialComplex") -> Point:
        return barycenter([base.barycenter(s) for s in self.chain])


class SimplicialComplex:
    """Immutable finite geometric simplicial complex."""

    def __init__(self, vertices, simplices, *, validate=True):
        self.vertices = tuple(as_point(v) for v in vertices)
        self.simplices = frozenset(tuple(s) for s in simplices)
        if validate:
            self._validate()

    def _validate(self):
        if len(set(self.vertices)) != len(self.vertices):
            seen = {}
            for i, v in enumerate(self.vertices):
                if v in seen:
                    raise DuplicateVertex(f"vertices {seen[v]} and {i} coincide", indices=(seen[v], i))
                seen[v] = i
        dims = {len(v) for v in self.vertices}
        if len(dims) > 1:
            raise InputError("vertices have mixed ambient dimensions")
        n = len(self.vertices)
        for s in self.simplices:
            if list(s) != sorted(set(s)) or not s:
                raise InputError(f"simplex {s} is not a sorted tuple of distinct indices")
            if s[0] < 0 or s[-1] >= n:
                raise InputError(f"simplex {s} references a missing vertex")
        for s in self.maximal:
            for face in _faces(s):
                if face not in self.simplices:
                    raise InputError(f"face {face} of {s} missing: not face-closed")
            if not affinely_independent([self.vertices[i] for i in s]):
                raise DegenerateSimplex(f"simplex {s} is affinely dependent", simplex=s)

    def __eq__(self, other):
        return (
            isinstance(other, SimplicialComplex)
            and self.vertices == other.vertices
            and self.simplices == other.simplices
        )

    def __hash__(self):
        return hash((self.vertices, self.simplices))

    def __repr__(self):
        return f"SimplicialComplex({len(self.vertices)} vertices, {len(self.simplices)} simplices, dim {self.dim})"

    def __len__(self):
        return len(self.simplices)

    @cached_property
    def dim(self) -> int:
        return max((len(s) - 1 for s in self.simplices), default=-1)

    @cached_property
    def ambient_dim(self) -> int:
        return len(self.vertices[0]) if self.vertices else 0

    @cached_property
    def sorted_simplices(self) -> list:
        return sorted(self.simplices, key=lambda s: (len(s), s))

    @cached_property
    def maximal(self) -> list:
        """Maximal simplices in lexicographic order."""
        cofaced = set()
        for s in self.simplices:
            if len(s) > 1:
                cofaced.update(_faces(s))
        return sorted(s for s in self.simplices if s not in cofaced)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.array([[float(c) for c in v] for v in self.vertices], dtype=float).reshape(
            len(self.vertices), self.ambient_dim
        )

    @cached_property
    def _cofaces(self) -> dict:
        out = defaultdict(list)
        for m in self.maximal:
            for r in range(1, len(m) + 1):
                for face in combinations(m, r):
                    out[face].append(m)
        return out

    def maximal_cofaces(self, s: Simplex) -> list:
        return self._cofaces[tuple(s)]

    def of_dim(self, i: int) -> list:
        return [s for s in self.sorted_simplices if len(s) == i + 1]

    def barycenter(self, s: Simplex) -> Point:
        return barycenter([self.vertices[i] for i in s])

    def diameter_sq(self, s: Simplex) -> Fraction:
        return max((sq_dist(self.vertices[a], self.vertices[b]) for a, b in combinations(s, 2)), default=Fraction(0))

    def frame(self, s: Simplex) -> _AffineFrame:
        cache = self.__dict__.setdefault("_frames", {})
        if s not in cache:
            cache[s] = _AffineFrame([self.vertices[i] for i in s])
        return cache[s]

    @cached_property
    def _grid(self):
        coords = self.coords
        lo = coords.min(axis=0)
        hi = coords.max(axis=0)
        extents = []
        boxes = []
        for s in self.maximal:
            c = coords[list(s)]
            boxes.append((c.min(axis=0), c.max(axis=0)))
            extents.append(float((c.max(axis=0) - c.min(axis=0)).max()))
        h = max(float(np.median(extents)) if extents else 1.0, 1e-12)
        cells = defaultdict(list)
        pad = 1e-9 * max(1.0, float(np.abs(coords).max()))
        for idx, (bmin, bmax) in enumerate(boxes):
            a = np.floor((bmin - pad - lo) / h).astype(int)
            b = np.floor((bmax + pad - lo) / h).astype(int)
            for key in np.ndindex(*(b - a + 1)):
                cells[tuple(int(x) for x in np.asarray(key) + a)].append(idx)
        return lo, hi, h, cells, boxes, pad

    def _candidates(self, xf) -> list:
        lo, hi, h, cells, boxes, pad = self._grid
        xf = np.asarray(xf, dtype=float)
        if np.any(xf < lo - pad) or np.any(xf > hi + pad):
            return []
        key = tuple(int(v) for v in np.floor((xf - lo) / h))
        out = []
        for idx in cells.get(key, ()):
            bmin, bmax = boxes[idx]
            if np.all(xf >= bmin - pad) and np.all(xf <= bmax + pad):
                out.append(idx)
        return sorted(out)

    def locate(self, x) -> tuple:
        """Carrier maximal simplex of ``x`` and exact barycentric coordinates.

        Ties on shared faces go to the lexicographically smallest simplex.
        """
        x = as_point(x)
        xf = [float(c) for c in x]
        for idx in self._candidates(xf):
            s = self.maximal[idx]
            fr = self.frame(s)
            if not fr.maybe_inside(xf):
                continue
            lam = fr.coords(x)
            if lam is not None and min(lam) >= 0:
                return s, lam
        raise PointOutsideComplex(f"point {tuple(str(c) for c in x)} is not in |K|", point=x)

    def contains(self, x) -> bool:
        try:
            self.locate(x)
        except PointOutsideComplex:
            return False
        return True

    def carrier(self, x) -> Simplex:
        """Smallest simplex containing ``x`` (support of its barycentric coordinates)."""
        s, lam = self.locate(x)
        return tuple(v for v, c in zip(s, lam) if c > 0)

    def locate_many(self, points, tol=1e-9) -> list:
        """``locate`` for many points; same tie rule, float prefilter per simplex."""
        pts = [as_point(x) for x in points]
        if not pts:
            return []
        X = np.array([[float(c) for c in p] for p in pts], dtype=float).reshape(len(pts), -1)
        out = [None] * len(pts)
        pending = np.ones(len(pts), dtype=bool)
        for s in self.maximal:
            todo = np.flatnonzero(pending)
            if not len(todo):
                break
            fr = self.frame(s)
            if fr.pinvf:
                lam = (X[todo] - np.asarray(fr.v0f)) @ np.asarray(fr.pinvf).T
                full = np.column_stack([1.0 - lam.sum(axis=1), lam])
            else:
                full = np.ones((len(todo), 1))
            near = full @ self.coords[list(s)]
            ok = (full.min(axis=1) >= -tol) & (np.abs(near - X[todo]).max(axis=1) <= tol * max(1.0, np.abs(X).max()))
            for t in todo[ok]:
                c = fr.coords(pts[t])
                if c is not None and min(c) >= 0:
                    out[t] = (s, c)
                    pending[t] = False
        for t in np.flatnonzero(pending):
            raise PointOutsideComplex(f"point {tuple(str(c) for c in pts[t])} is not in |K|", point=pts[t])
        return out

    def carriers(self, points) -> list:
        """``carrier`` for many exact points."""
        return [tuple(v for v, c in zip(s, lam) if c > 0) for s, lam in self.locate_many(points)]

    def nearest_point(self, y) -> Point:
        """Exact nearest point of |K| to ``y``; ties go to the first simplex in (dim, tuple) order."""
        y = as_point(y)
        best, best_d = None, None
        for s in self.sorted_simplices:
            fr = self.frame(s)
            diff = _sub(y, fr.v0)
            lam = [sum((a * b for a, b in zip(row, diff)), Fraction(0)) for row in fr.pinv]
            if any(c < 0 for c in lam) or sum(lam, Fraction(0)) > 1:
                continue
            p = tuple(
                fr.v0[t] + sum((lam[j] * fr.cols[j][t] for j in range(len(lam))), Fraction(0))
                for t in range(len(y))
            )
            d = sq_dist(p, y)
            if best_d is None or d < best_d:
                best, best_d = p, d
        return best

    def nearest_points_float(self, Y: np.ndarray) -> np.ndarray:
        """Vectorised float version of :meth:`nearest_point`."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        best = np.full(Y.shape, np.nan)
        best_d = np.full(len(Y), np.inf)
        for s in self.sorted_simplices:
            fr = self.frame(s)
            v0 = np.array(fr.v0f)
            diff = Y - v0
            if fr.pinvf:
                P = np.array(fr.pinvf)
                C = np.array([[float(c) for c in col] for col in fr.cols])
                lam = diff @ P.T
                ok = (lam.min(axis=1) >= -1e-12) & (lam.sum(axis=1) <= 1 + 1e-12)
                proj = v0 + np.clip(lam, 0, None) @ C
            else:
                ok = np.ones(len(Y), dtype=bool)
                proj = np.broadcast_to(v0, Y.shape)
            d = ((proj - Y) ** 2).sum(axis=1)
            take = ok & (d < best_d)
            best[take] = proj[take]
            best_d[take] = d[take]
        return best

    def vertex_index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}


def _faces(s: Simplex):
    for r in range(1, len(s)):
        yield from combinations(s, r)


def close_complex(maximal_simplices: Iterable, vertices) -> SimplicialComplex:
    """Face closure of a list of index tuples over the given vertices."""
    verts = [as_point(v) for v in vertices]
    n = len(verts)
    simplices = set()
    used = set()
    for raw in maximal_simplices:
        s = tuple(sorted(int(i) for i in raw))
        if not s:
            continue
        if len(set(s)) != len(s):
            raise InputError(f"simplex {raw} repeats a vertex")
        if s[0] < 0 or s[-1] >= n:
            raise InputError(f"simplex {raw} references a missing vertex")
        if not affinely_independent([verts[i] for i in s]):
            raise DegenerateSimplex(f"simplex {s} is affinely dependent", simplex=s)
        simplices.add(s)
        simplices.update(_faces(s))
        used.update(s)
    simplices.update((i,) for i in range(n) if i not in used)
    return SimplicialComplex(verts, simplices)


def barycentric_subdivide(K: SimplicialComplex):
    """First barycentric subdivision K' with a FlagLabel for every new vertex.

    New vertices are the barycenters b(S), ordered by (dim S, S); in particular
    the old vertex i keeps index i.  Simplices of K' are the barycenter sets of
    strictly descending chains S_0 > ... > S_k.
    """
    order = K.sorted_simplices
    index = {s: i for i, s in enumerate(order)}
    verts = [K.barycenter(s) for s in order]
    labels = [FlagLabel((s,)) for s in order]
    new = set()

    def extend(chain):
        new.add(tuple(sorted(index[c] for c in chain)))
        top = chain[-1]
        if len(top) == 1:
            return
        for r in range(1, len(top)):
            for face in combinations(top, r):
                extend(chain + (face,))

    # every chain is reached exactly once by descending from its top element
    for s in order:
        extend((s,))
    return SimplicialComplex(verts, new, validate=False), labels


def iterated_subdivision(K: SimplicialComplex, times: int) -> SimplicialComplex:
    for _ in range(times):
        K, _ = barycentric_subdivide(K)
    return K


def skeleton(K: SimplicialComplex, i: int) -> SimplicialComplex:
    if i < 0:
        raise InputError("skeleton dimension must be nonnegative")
    return SimplicialComplex(K.vertices, [s for s in K.simplices if len(s) <= i + 1], validate=False)


def mesh_sq(K: SimplicialComplex) -> Fraction:
    if not K.simplices:
        raise EmptyComplex("mesh of an empty complex")
    return max((K.diameter_sq(s) for s in K.maximal), default=Fraction(0))


def mesh(K: SimplicialComplex) -> float:
    return math.sqrt(mesh_sq(K))


class Star:
    """st_K(P) = |K| minus every simplex of K that misses |P|."""

    def __init__(self, K: SimplicialComplex, P_vertices: frozenset, covered: list):
        self.K = K
        self.P_vertices = P_vertices
        self.covered = covered

    def __contains__(self, x) -> bool:
        if not self.K.contains(x):
            return False
        return any(v in self.P_vertices for v in self.K.carrier(x))


def star(K: SimplicialComplex, P) -> Star:
    """Open star of a subcomplex.

    ``P`` is either a SimplicialComplex whose vertices are vertices of K, or an
    iterable of simplices of K given as index tuples.
    """
    if isinstance(P, SimplicialComplex):
        idx = K.vertex_index()
        try:
            remap = [idx[v] for v in P.vertices]
        except KeyError as exc:
            raise SubcomplexMismatch("P has a vertex that is not a vertex of K") from exc
        simplices = [tuple(sorted(remap[i] for i in s)) for s in P.simplices]
    else:
        simplices = [tuple(sorted(s)) for s in P]
    for s in simplices:
        if s not in K.simplices:
            raise SubcomplexMismatch(f"simplex {s} of P is not a simplex of K", simplex=s)
    pv = frozenset(v for s in simplices for v in s)
    covered = [s for s in K.sorted_simplices if pv.intersection(s)]
    return Star(K, pv, covered)


@dataclass(frozen=True, eq=False)
class VertexMap:
    """Simplicial vertex assignment source-vertex -> target-vertex."""

    source: SimplicialComplex
    target: SimplicialComplex
    assignment: tuple

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))
        if len(self.assignment) != len(self.source.vertices):
            raise InputError("assignment length differs from the source vertex count")
        bad = self.non_simplicial()
        if bad is not None:
            raise NotSimplicial(f"image of {bad} does not span a simplex of the target", simplex=bad)

    def __eq__(self, other):
        return (
            isinstance(other, VertexMap)
            and self.assignment == other.assignment
            and self.source == other.source
            and self.target == other.target
        )

    def __hash__(self):
        return hash(self.assignment)

    def non_simplicial(self):
        n = len(self.target.vertices)
        if any(a < 0 or a >= n for a in self.assignment):
            return ()
        for s in self.source.maximal:
            image = tuple(sorted({self.assignment[i] for i in s}))
            if image not in self.target.simplices:
                return s
        return None

    def __call__(self, x) -> Point:
        return evaluate_pl(self, x)

    def then(self, other: "VertexMap") -> "VertexMap":
        """``other`` after ``self``."""
        if other.source != self.target:
            raise InputError("composition needs matching complexes")
        return VertexMap(self.source, other.target, [other.assignment[a] for a in self.assignment])

    @classmethod
    def identity(cls, K: SimplicialComplex) -> "VertexMap":
        return cls(K, K, range(len(K.vertices)))


def evaluate_pl(m: VertexMap, x) -> Point:
    """|m|(x): barycentric coordinates of x pushed through the vertex assignment."""
    s, lam = m.source.locate(x)
    tv = m.target.vertices
    d = m.target.ambient_dim
    out = [Fraction(0)] * d
    for v, c in zip(s, lam):
        if c:
            w = tv[m.assignment[v]]
            for t in range(d):
                out[t] += c * w[t]
    return tuple(out)


def evaluate_pl_many(m: VertexMap, points) -> list:
    """``evaluate_pl`` over many points with batched location."""
    tv = m.target.vertices
    d = m.target.ambient_dim
    out = []
    for s, lam in m.source.locate_many(points):
        y = [Fraction(0)] * d
        for v, c in zip(s, lam):
            if c:
                w = tv[m.assignment[v]]
                for t in range(d):
                    y[t] += c * w[t]
        out.append(tuple(y))
    return out
