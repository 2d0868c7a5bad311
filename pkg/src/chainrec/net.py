"""Finite nets of polyhedra, sampled self-maps, metrics and ball queries.

Ball queries go through a uniform grid hash (cell side = query radius in
metric-scaled coordinates), so a query costs O(points in the 3^d surrounding
cells) rather than O(n).  Distances are filtered in floating point and every
comparison that lands within a 1e-9 guard band of the radius is re-decided
exactly in rationals when exact coordinates are available.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as cartesian

import numpy as np

from .complex import SimplicialComplex, VertexMap, as_point, _over_common, evaluate_pl, evaluate_pl_many, sq_dist
from .errors import InputError, PointNotInNet, PointOutsideComplex

GUARD = 1e-9
MAX_PAIRS = 4_000_000


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


def worker_count() -> int:
    """Parallelism cap from CHAINREC_THREADS (default: all cores)."""
    raw = os.environ.get("CHAINREC_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


class EuclideanMetric:
    name = "euclidean"

    def dist(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return np.sqrt(((A - B) ** 2).sum(axis=-1))

    def scale(self, dim: int) -> np.ndarray:
        return np.ones(dim)

    def exact_cmp(self, a, b, r: Fraction):
        """Sign of d(a, b) - r computed exactly."""
        d2 = sq_dist(a, b)
        r2 = r * r
        return (d2 > r2) - (d2 < r2)

    def exact_dist(self, a, b):
        return None

    def to_json(self):
        return {"kind": self.name}

    def __eq__(self, other):
        return isinstance(other, EuclideanMetric)

    def __hash__(self):
        return hash(self.name)


@dataclass(frozen=True)
class ProductMetric:
    """d(x, y) = sum_i w_i * |x_i - y_i|_2 over coordinate blocks."""

    blocks: tuple  # (start, stop) pairs
    weights: tuple  # Fractions
    name: str = field(default="product", init=False)

    def dist(self, A, B):
        out = 0.0
        for (a, b), w in zip(self.blocks, self.weights):
            out = out + float(w) * np.sqrt(((A[..., a:b] - B[..., a:b]) ** 2).sum(axis=-1))
        return out

    def scale(self, dim):
        s = np.ones(dim)
        for (a, b), w in zip(self.blocks, self.weights):
            s[a:b] = float(w)
        return s

    def exact_dist(self, x, y):
        if any(b - a != 1 for a, b in self.blocks):
            return None
        return sum((w * abs(x[a] - y[a]) for (a, _), w in zip(self.blocks, self.weights)), Fraction(0))

    def exact_cmp(self, x, y, r):
        d = self.exact_dist(x, y)
        if d is None:
            return None
        return (d > r) - (d < r)

    def to_json(self):
        return {
            "kind": self.name,
            "blocks": [list(b) for b in self.blocks],
            "weights": [f"{w.numerator}/{w.denominator}" for w in self.weights],
        }


EUCLIDEAN = EuclideanMetric()


class GridIndex:
    """Uniform grid hash over a point cloud for fixed-radius queries."""

    def __init__(self, points: np.ndarray, radius: float, metric=EUCLIDEAN):
        self.points = np.asarray(points, dtype=float)
        n, d = self.points.shape
        self.metric = metric
        self.dim = d
        self.scale = metric.scale(d)
        self.h = max(float(radius), 1e-12)
        scaled = self.points * self.scale
        self.origin = scaled.min(axis=0) if n else np.zeros(d)
        keys = np.floor((scaled - self.origin) / self.h).astype(np.int64) if n else np.zeros((0, d), np.int64)
        self.shape = keys.max(axis=0) + 1 if n else np.ones(d, np.int64)
        self.strides = np.ones(d, dtype=np.int64)
        for j in range(d - 2, -1, -1):
            self.strides[j] = self.strides[j + 1] * self.shape[j + 1]
        lin = keys @ self.strides
        self.perm = np.argsort(lin, kind="stable")
        self.sorted_keys = lin[self.perm]

    def candidates(self, queries: np.ndarray):
        """All (query, point) index pairs sharing or neighbouring a grid cell."""
        q = np.asarray(queries, dtype=float).reshape(-1, self.dim)
        qk = np.floor((q * self.scale - self.origin) / self.h).astype(np.int64)
        qi_parts, pj_parts = [], []
        for off in cartesian((-1, 0, 1), repeat=self.dim):
            k = qk + np.array(off, dtype=np.int64)
            valid = np.all((k >= 0) & (k < self.shape), axis=1)
            lin = np.where(valid, k @ self.strides, -1)
            lo = np.searchsorted(self.sorted_keys, lin, side="left")
            hi = np.searchsorted(self.sorted_keys, lin, side="right")
            cnt = np.where(valid, hi - lo, 0)
            total = int(cnt.sum())
            if not total:
                continue
            qi = np.repeat(np.arange(len(q)), cnt)
            starts = np.repeat(lo - np.concatenate(([0], np.cumsum(cnt)[:-1])), cnt)
            pos = np.arange(total) + starts
            qi_parts.append(qi)
            pj_parts.append(self.perm[pos])
        if not qi_parts:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        return np.concatenate(qi_parts), np.concatenate(pj_parts)


def neighbors(
    points,
    queries,
    radius,
    metric=EUCLIDEAN,
    *,
    inclusive=False,
    points_exact=None,
    queries_exact=None,
    index: GridIndex | None = None,
):
    """CSR lists of the points within ``radius`` of each query.

    Strict ``d < radius`` by default, ``d <= radius`` when ``inclusive``.
    Returns ``(indptr, indices)`` with each row sorted ascending.
    """
    points = np.asarray(points, dtype=float)
    queries = np.asarray(queries, dtype=float).reshape(-1, points.shape[1] if points.ndim == 2 else 1)
    r_exact = to_fraction(radius)
    r = float(r_exact)
    nq = len(queries)
    if len(points) == 0 or nq == 0:
        return np.zeros(nq + 1, np.int64), np.zeros(0, np.int64)
    index = index or GridIndex(points, r, metric)
    guard = GUARD * max(1.0, r)
    use_exact = points_exact is not None and queries_exact is not None
    rows, cols = [], []
    # chunk queries to bound the candidate-pair memory
    per_query = max(1, int(np.ceil(len(points) / max(1, np.prod(index.shape)))) * 3 ** index.dim)
    step = max(1, MAX_PAIRS // per_query)
    for start in range(0, nq, step):
        qi, pj = index.candidates(queries[start : start + step])
        if not len(qi):
            continue
        d = metric.dist(queries[start + qi], points[pj])
        inside = d < r - guard
        unsure = np.abs(d - r) <= guard
        if unsure.any():
            for t in np.flatnonzero(unsure):
                a, b = start + int(qi[t]), int(pj[t])
                sign = metric.exact_cmp(queries_exact[a], points_exact[b], r_exact) if use_exact else None
                if sign is None:
                    ok = d[t] <= r if inclusive else d[t] < r
                else:
                    ok = sign <= 0 if inclusive else sign < 0
                inside[t] = ok
        rows.append(start + qi[inside])
        cols.append(pj[inside])
    if rows:
        row = np.concatenate(rows)
        col = np.concatenate(cols)
    else:
        row = np.zeros(0, np.int64)
        col = np.zeros(0, np.int64)
    order = np.lexsort((col, row))
    row, col = row[order], col[order]
    indptr = np.zeros(nq + 1, np.int64)
    np.add.at(indptr, row + 1, 1)
    return np.cumsum(indptr), col.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Net:
    """A delta-dense finite subset of a polyhedron."""

    points: np.ndarray
    delta: Fraction
    exact: tuple | None = None
    link_radius: Fraction | None = None
    complex: SimplicialComplex | None = None
    metric: object = EUCLIDEAN

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(len(self.points), -1))
        object.__setattr__(self, "delta", to_fraction(self.delta))
        if self.link_radius is None:
            object.__setattr__(self, "link_radius", 2 * self.delta)
        else:
            object.__setattr__(self, "link_radius", to_fraction(self.link_radius))
        if self.delta <= 0:
            raise InputError("net density radius must be positive")

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    def index_of(self, x) -> int:
        """Index of a net point given by index or coordinates."""
        if isinstance(x, (int, np.integer)):
            if 0 <= int(x) < len(self):
                return int(x)
            raise PointNotInNet(f"index {x} out of range", index=int(x))
        if self.exact is not None:
            lookup = self.__dict__.get("_lookup")
            if lookup is None:
                lookup = {p: i for i, p in enumerate(self.exact)}
                object.__setattr__(self, "_lookup", lookup)
            try:
                return lookup[as_point(x)]
            except (KeyError, TypeError, ValueError):
                raise PointNotInNet(f"point {x} is not a net point") from None
        xf = np.asarray(x, dtype=float)
        hit = np.flatnonzero(np.all(self.points == xf, axis=1))
        if not len(hit):
            raise PointNotInNet(f"point {x} is not a net point")
        return int(hit[0])

    def subnet(self, idx) -> "Net":
        idx = np.asarray(idx, dtype=np.int64)
        exact = tuple(self.exact[i] for i in idx) if self.exact is not None else None
        return Net(self.points[idx], self.delta, exact, self.link_radius, self.complex, self.metric)

    def distances_to(self, y) -> np.ndarray:
        return self.metric.dist(self.points, np.asarray(y, dtype=float)[None, :])


@dataclass(frozen=True, eq=False)
class SampledMap:
    """A self-map of a polyhedron known on a net: net point i maps to images[i]."""

    net: Net
    images: np.ndarray
    images_exact: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "images", np.asarray(self.images, dtype=float).reshape(len(self.net), -1))

    def __len__(self):
        return len(self.net)

    @property
    def is_exact(self) -> bool:
        return self.net.exact is not None and self.images_exact is not None

    def check_images(self):
        """Raise PointOutsideComplex if some image leaves |K| (exact when possible)."""
        K = self.net.complex
        if K is None:
            return
        if self.images_exact is not None:
            for i, y in enumerate(self.images_exact):
                if not K.contains(y):
                    raise PointOutsideComplex(f"image of net point {i} leaves |K|", index=i)
        else:
            proj = K.nearest_points_float(self.images)
            gap = np.sqrt(((proj - self.images) ** 2).sum(axis=1))
            bad = np.flatnonzero(gap > 1e-9)
            if len(bad):
                raise PointOutsideComplex(f"image of net point {int(bad[0])} leaves |K|", index=int(bad[0]))

    def sup_distance(self, other: "SampledMap") -> float:
        """max_p d(f(p), g(p)) over the shared net."""
        if len(other) != len(self):
            raise InputError("maps live on different nets")
        if not len(self):
            return 0.0
        return float(np.max(self.net.metric.dist(self.images, other.images)))

    def with_images(self, images_exact=None, images=None) -> "SampledMap":
        if images_exact is not None:
            images = [[float(c) for c in y] for y in images_exact]
        return SampledMap(self.net, images, tuple(images_exact) if images_exact is not None else None)


def map_from_function(net: Net, func) -> SampledMap:
    """Sample ``func`` (exact point -> exact point) on an exact net."""
    if net.exact is None:
        imgs = np.array([func(p) for p in net.points], dtype=float)
        return SampledMap(net, imgs)
    exact = tuple(as_point(func(p)) for p in net.exact)
    return SampledMap(net, [[float(c) for c in y] for y in exact], exact)


def map_from_vertex_map(net: Net, m: VertexMap) -> SampledMap:
    if net.exact is None:
        return map_from_function(net, lambda p: evaluate_pl(m, p))
    exact = tuple(evaluate_pl_many(m, net.exact))
    return SampledMap(net, [[float(c) for c in y] for y in exact], exact)


def _lattice_resolution(k: int, diam_sq: Fraction, delta: Fraction) -> int:
    # rounding barycentric coordinates to a 1/m lattice moves a point by
    # at most floor((k+1)/2) * diam / m
    c = (k + 1) // 2
    if c == 0 or diam_sq == 0:
        return 1
    target = c * c * diam_sq
    m = max(1, math.ceil(c * math.sqrt(diam_sq) / delta))
    while m > 1 and (m - 1) ** 2 * delta * delta >= target:
        m -= 1
    while m * m * delta * delta < target:
        m += 1
    return m


def _compositions(m: int, parts: int):
    if parts == 1:
        yield (m,)
        return
    for first in range(m, -1, -1):
        for rest in _compositions(m - first, parts - 1):
            yield (first, *rest)


def sample_net(K: SimplicialComplex, delta, link_radius=None) -> Net:
    """Lattice net: every maximal simplex carries a barycentric 1/m lattice."""
    delta = to_fraction(delta)
    if delta <= 0:
        raise InputError("delta must be positive")
    pts = set()
    for s in K.maximal:
        k = len(s) - 1
        verts = [K.vertices[i] for i in s]
        m = _lattice_resolution(k, K.diameter_sq(s), delta)
        flat, r = _over_common([c for v in verts for c in v])
        d = K.ambient_dim
        vi = [flat[j * d : (j + 1) * d] for j in range(k + 1)]
        den = m * r
        for comp in _compositions(m, k + 1):
            pts.add(
                tuple(Fraction(sum(a * v[t] for a, v in zip(comp, vi) if a), den) for t in range(d))
            )
    exact = tuple(sorted(pts, key=lambda p: (tuple(map(float, p)), p)))
    coords = np.array([[float(c) for c in p] for p in exact], dtype=float).reshape(len(exact), K.ambient_dim)
    return Net(coords, delta, exact, link_radius, K)


def product_net(factors: list, basepoints=None) -> Net:
    """Cartesian product of factor nets under sum_i 2^-i d_i / (1 + diam_i)."""
    blocks, weights = [], []
    start = 0
    delta = Fraction(0)
    for i, f in enumerate(factors, start=1):
        diam = _exact_diameter(f)
        w = Fraction(1, 2**i) / (1 + diam)
        blocks.append((start, start + f.dim))
        weights.append(w)
        start += f.dim
        delta += w * f.delta
    metric = ProductMetric(tuple(blocks), tuple(weights))
    exact = None
    if all(f.exact is not None for f in factors):
        exact = tuple(tuple(c for part in combo for c in part) for combo in cartesian(*[f.exact for f in factors]))
        coords = np.array([[float(c) for c in p] for p in exact], dtype=float)
    else:
        coords = np.array([np.concatenate(combo) for combo in cartesian(*[f.points for f in factors])])
    return Net(coords, delta, exact, None, None, metric)


def _exact_diameter(net: Net) -> Fraction:
    if net.dim == 1 and net.exact is not None:
        vals = [p[0] for p in net.exact]
        return max(vals) - min(vals)
    from scipy.spatial.distance import pdist

    return Fraction(float(pdist(net.points).max())) if len(net) > 1 else Fraction(0)
