"""Epsilon-chain recurrence on sampled maps.

A net point p has an edge to q when d(f(p), q) < eps.  A point is
eps-chain recurrent exactly when it lies on a directed cycle of this graph:
a nontrivial strongly connected component or a self-loop.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import EpsilonTooSmall, InputError, NotARetraction
from .net import (
    EUCLIDEAN,
    GridIndex,
    Net,
    SampledMap,
    neighbors,
    product_net,
    to_fraction,
    worker_count,
)
from .scc import cyclic_nodes, strongly_connected_components


@dataclass(frozen=True, eq=False)
class EpsGraph:
    map: SampledMap
    epsilon: Fraction
    indptr: np.ndarray
    indices: np.ndarray
    _csr: csr_matrix | None = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.indptr) - 1

    @property
    def n_edges(self) -> int:
        return int(self.indptr[-1])

    def successors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def csr(self) -> csr_matrix:
        if self._csr is None:
            data = np.ones(len(self.indices), dtype=np.int8)
            object.__setattr__(self, "_csr", csr_matrix((data, self.indices, self.indptr), shape=(len(self), len(self))))
        return self._csr

    def edge_set(self) -> set:
        rows = np.repeat(np.arange(len(self)), np.diff(self.indptr))
        return set(zip(rows.tolist(), self.indices.tolist()))


def build_eps_graph(f: SampledMap, epsilon) -> EpsGraph:
    """Transition digraph p -> q iff d(f(p), q) < epsilon."""
    eps = to_fraction(epsilon)
    if eps <= 0:
        raise InputError("epsilon must be positive")
    net = f.net
    n = len(net)
    kwargs = dict(points_exact=net.exact, queries_exact=f.images_exact)
    index = GridIndex(net.points, float(eps), net.metric)
    workers = min(worker_count(), max(1, n // 20000))
    if workers <= 1:
        indptr, indices = neighbors(net.points, f.images, eps, net.metric, index=index, **kwargs)
        return EpsGraph(f, eps, indptr, indices)
    bounds = np.linspace(0, n, workers + 1).astype(int)

    def part(a, b):
        qe = f.images_exact[a:b] if f.images_exact is not None else None
        return neighbors(
            net.points, f.images[a:b], eps, net.metric, index=index, points_exact=net.exact, queries_exact=qe
        )

    with ThreadPoolExecutor(workers) as pool:
        parts = list(pool.map(lambda ab: part(*ab), zip(bounds[:-1], bounds[1:])))
    indptr = [np.zeros(1, np.int64)]
    offset = 0
    for ip, _ in parts:
        indptr.append(ip[1:] + offset)
        offset += ip[-1]
    return EpsGraph(f, eps, np.concatenate(indptr), np.concatenate([ix for _, ix in parts]))


@dataclass
class CRReport:
    """eps-chain recurrent net points and derived statistics."""

    cr_points: np.ndarray
    components: list
    component_diameters: list
    d1: float
    isolated: np.ndarray
    measure: float
    epsilon: Fraction
    delta: Fraction
    link_radius: Fraction
    isolation_radius: Fraction
    net_size: int
    graph: EpsGraph | None = field(default=None, repr=False)

    @property
    def cr_count(self) -> int:
        return len(self.cr_points)

    @property
    def cr_set(self) -> frozenset:
        return frozenset(self.cr_points.tolist())

    def to_json(self) -> dict:
        return {
            "epsilon": float(self.epsilon),
            "delta": float(self.delta),
            "net_size": self.net_size,
            "cr_count": self.cr_count,
            "components": [
                {"size": int(len(c)), "diameter": float(d)}
                for c, d in zip(self.components, self.component_diameters)
            ],
            "d1": float(self.d1),
            "isolated_count": int(len(self.isolated)),
            "measure": float(self.measure),
        }


def check_epsilon(epsilon, delta):
    eps, delta = to_fraction(epsilon), to_fraction(delta)
    if eps < 3 * delta:
        raise EpsilonTooSmall(
            f"epsilon {float(eps):g} below 3*delta = {float(3 * delta):g}",
            epsilon=str(eps),
            delta=str(delta),
        )
    return eps


def cr_mask(f: SampledMap, epsilon, graph: EpsGraph | None = None) -> np.ndarray:
    check_epsilon(epsilon, f.net.delta)
    graph = graph or build_eps_graph(f, epsilon)
    return cyclic_nodes(graph.indptr, graph.indices)


def cr_eps(
    f: SampledMap,
    epsilon,
    *,
    graph: EpsGraph | None = None,
    weights=None,
    link_radius=None,
    isolation_radius=None,
) -> CRReport:
    """eps-chain recurrent set of a sampled map with summary statistics."""
    eps = check_epsilon(epsilon, f.net.delta)
    graph = graph or build_eps_graph(f, eps)
    mask = cyclic_nodes(graph.indptr, graph.indices)
    pts = np.flatnonzero(mask)
    net = f.net
    link = to_fraction(link_radius) if link_radius is not None else net.link_radius
    iso_r = to_fraction(isolation_radius) if isolation_radius is not None else eps
    labels = link_components(net.points[pts], link, net.metric)
    comps = [pts[labels == c] for c in range(labels.max() + 1)] if len(pts) else []
    diams = [set_diameter(net.points[c], net.metric) for c in comps]
    return CRReport(
        cr_points=pts,
        components=comps,
        component_diameters=diams,
        d1=max(diams, default=0.0),
        isolated=isolated_points(net, pts, iso_r),
        measure=measure_estimate(pts, weights if weights is not None else uniform_weights(net)),
        epsilon=eps,
        delta=net.delta,
        link_radius=link,
        isolation_radius=iso_r,
        net_size=len(net),
        graph=graph,
    )


def uniform_weights(net: Net) -> np.ndarray:
    return np.full(len(net), 1.0 / len(net)) if len(net) else np.zeros(0)


def isolated_points(net: Net, pts: np.ndarray, radius) -> np.ndarray:
    """Members of ``pts`` whose open ``radius``-ball meets ``pts`` only in themselves."""
    if not len(pts):
        return pts
    sub_exact = [net.exact[i] for i in pts] if net.exact is not None else None
    indptr, _ = neighbors(
        net.points[pts], net.points[pts], radius, net.metric, points_exact=sub_exact, queries_exact=sub_exact
    )
    return pts[np.diff(indptr) <= 1]


def link_components(points, link_radius, metric=EUCLIDEAN) -> np.ndarray:
    """Component labels of the graph joining points at distance <= link_radius."""
    points = _as_points(points)
    m = len(points)
    if m == 0:
        return np.zeros(0, np.int64)
    indptr, indices = neighbors(points, points, link_radius, metric, inclusive=True)
    rows = np.repeat(np.arange(m), np.diff(indptr))
    adj = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, indices)), shape=(m, m)).tocsr()
    _, labels = connected_components(adj, directed=False)
    return labels.astype(np.int64)


def set_diameter(points, metric=EUCLIDEAN) -> float:
    points = _as_points(points)
    m, d = points.shape
    if m <= 1:
        return 0.0
    if d == 1:
        return float(points.max() - points.min()) * float(metric.scale(1)[0])
    if getattr(metric, "name", "") == "product" and all(b - a == 1 for a, b in metric.blocks):
        # weighted l1: the diameter is attained along a sign pattern
        w = metric.scale(d)
        best = 0.0
        for signs in np.ndindex(*([2] * (d - 1))):
            s = np.concatenate(([1.0], np.where(np.array(signs) == 1, -1.0, 1.0))) * w
            proj = points @ s
            best = max(best, float(proj.max() - proj.min()))
        return best
    if m > 400 and getattr(metric, "name", "") == "euclidean":
        from scipy.spatial import ConvexHull, QhullError

        try:
            points = points[ConvexHull(points).vertices]
        except (QhullError, ValueError):
            pass
    best = 0.0
    for start in range(0, len(points), 512):
        block = points[start : start + 512]
        dd = metric.dist(block[:, None, :], points[None, :, :])
        best = max(best, float(dd.max()))
    return best


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def d1_estimate(points, link_radius, metric=EUCLIDEAN) -> float:
    """Largest diameter among the link_radius-connected pieces of a point set."""
    points = _as_points(points)
    if not len(points):
        return 0.0
    labels = link_components(points, link_radius, metric)
    return max(set_diameter(points[labels == c], metric) for c in range(labels.max() + 1))


def measure_estimate(points, weights, *, net: Net | None = None, fatten=0) -> float:
    """Weight carried by a net subset, optionally fattened by a radius."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise InputError("weights must be finite and nonnegative")
    idx = np.asarray(points, dtype=np.int64).reshape(-1)
    if not len(idx):
        return 0.0
    if fatten and net is not None:
        qe = [net.exact[i] for i in idx] if net.exact is not None else None
        _, indices = neighbors(net.points, net.points[idx], fatten, net.metric, inclusive=True,
                               points_exact=net.exact, queries_exact=qe)
        idx = np.unique(np.concatenate([idx, indices]))
    return float(weights[np.unique(idx)].sum())


def certify_non_recurrent(f: SampledMap, x, epsilon, graph: EpsGraph | None = None):
    """Trap certificate for a non-recurrent net point, or None if x is recurrent.

    The certificate U is the forward eps-reach set of the successors of x.
    It is closed under edges and contains every successor of x; x is
    eps-chain recurrent exactly when x belongs to it.
    """
    i = f.net.index_of(x)
    graph = graph or build_eps_graph(f, epsilon)
    reach = breadth_first_order(graph.csr(), i, directed=True, return_predecessors=False)
    # x returns to itself iff some node reachable from x has an edge back to x
    seen = np.zeros(len(graph), dtype=bool)
    seen[reach] = True
    preds = np.searchsorted(graph.indptr, np.flatnonzero(graph.indices == i), side="right") - 1
    if seen[preds].any():
        return None
    seen[i] = False
    return frozenset(np.flatnonzero(seen).tolist())


@dataclass(frozen=True, eq=False)
class Retraction:
    """A net-level retraction of X onto a subnet G.

    ``G_idx[j]`` is the X-index of the j-th point of G and ``image[p]`` the
    G-local index that X-point p is sent to.
    """

    X: Net
    G_idx: np.ndarray
    image: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "G_idx", np.asarray(self.G_idx, dtype=np.int64))
        object.__setattr__(self, "image", np.asarray(self.image, dtype=np.int64))
        moved = np.flatnonzero(self.image[self.G_idx] != np.arange(len(self.G_idx)))
        if len(moved):
            j = int(moved[0])
            raise NotARetraction(
                f"G point {j} (X index {int(self.G_idx[j])}) is moved", g_index=j, x_index=int(self.G_idx[j])
            )

    @property
    def G(self) -> Net:
        return self.X.subnet(self.G_idx)

    def sup_distance_to_identity(self) -> float:
        moved = self.X.points[self.G_idx[self.image]]
        return float(np.max(self.X.metric.dist(self.X.points, moved))) if len(self.X) else 0.0

    @classmethod
    def from_function(cls, X: Net, G_idx, func):
        """Send each X-point to the G-point nearest to func(point)."""
        G_idx = np.asarray(G_idx, dtype=np.int64)
        Gpts = X.points[G_idx]
        src = X.exact if X.exact is not None else X.points
        image = np.empty(len(X), dtype=np.int64)
        for p, x in enumerate(src):
            y = np.asarray([float(c) for c in func(x)])
            image[p] = int(np.argmin(X.metric.dist(Gpts, y[None, :])))
        return cls(X, G_idx, image)


@dataclass
class HarnessReport:
    cr_G: frozenset
    cr_X: frozenset
    inclusion_ok: bool
    missing: list
    converse_excess: float
    converse_tolerance: float
    converse_ok: bool
    epsilon: Fraction


def compose_with_retraction(f_on_G: SampledMap, r: Retraction) -> SampledMap:
    images = f_on_G.images[r.image]
    exact = tuple(f_on_G.images_exact[j] for j in r.image) if f_on_G.images_exact is not None else None
    return SampledMap(r.X, images, exact)


def retraction_cr_harness(f_on_G: SampledMap, r: Retraction, epsilon, converse_tolerance=None) -> HarnessReport:
    """cr_eps(f) on G against cr_eps(f r) on X.

    Every eps-cycle of f inside G is an eps-cycle of f r because f r = f on
    G, so the inclusion is exact; the converse is reported as the largest
    distance from a cr(f r) point to cr(f).
    """
    if len(f_on_G) != len(r.G_idx):
        raise InputError("f must be sampled on the retraction's subnet")
    eps = to_fraction(epsilon)
    rep_G = cr_eps(f_on_G, eps)
    rep_X = cr_eps(compose_with_retraction(f_on_G, r), eps)
    cr_G = frozenset(int(r.G_idx[j]) for j in rep_G.cr_points)
    cr_X = rep_X.cr_set
    missing = sorted(cr_G - cr_X)
    tol = float(converse_tolerance) if converse_tolerance is not None else 3 * float(eps)
    if cr_X and cr_G:
        Xp = r.X.points
        G_arr = np.array(sorted(cr_G))
        excess = 0.0
        for start in range(0, len(rep_X.cr_points), 256):
            block = Xp[rep_X.cr_points[start : start + 256]]
            dd = r.X.metric.dist(block[:, None, :], Xp[G_arr][None, :, :]).min(axis=1)
            excess = max(excess, float(dd.max()))
    else:
        excess = 0.0 if not cr_X else float("inf")
    return HarnessReport(cr_G, cr_X, not missing, missing, excess, tol, excess <= tol, eps)


def product_truncation_retraction(factor_nets: list, k: int, basepoints: list):
    """Retraction of a product net pinning coordinates beyond k to basepoints.

    Returns ``(retraction, bound)`` where ``bound = 2**-k`` dominates the
    tail sum of the product metric and hence the distance of r to the identity.
    """
    if not 1 <= k <= len(factor_nets):
        raise InputError("k must satisfy 1 <= k <= number of factors")
    X = product_net(factor_nets)
    base_idx = []
    for f, b in zip(factor_nets, basepoints):
        base_idx.append(f.index_of(b))
    sizes = [len(f) for f in factor_nets]
    # product ordering is row-major over the factor indices
    multi = np.array(np.unravel_index(np.arange(len(X)), sizes)).T
    pinned = multi.copy()
    for j in range(k, len(factor_nets)):
        pinned[:, j] = base_idx[j]
    target = np.ravel_multi_index(pinned.T, sizes)
    G_mask = np.all(multi[:, k:] == np.array(base_idx[k:], dtype=np.int64), axis=1) if k < len(sizes) else np.ones(len(X), bool)
    G_idx = np.flatnonzero(G_mask)
    local = np.full(len(X), -1, dtype=np.int64)
    local[G_idx] = np.arange(len(G_idx))
    r = Retraction(X, G_idx, local[target])
    bound = Fraction(1, 2**k)
    return r, bound


@dataclass
class USCResult:
    holds: bool
    edges_ok: bool
    cr_ok: bool
    sup_distance: float
    epsilon: Fraction
    widened: Fraction
    witness: tuple | None = None

    def __bool__(self):
        return self.holds


def usc_stability_check(f: SampledMap, g: SampledMap, epsilon) -> USCResult:
    """Check cr_eps(f) within cr_{eps+D}(g) where D = max_p d(f(p), g(p)).

    Every f-edge of tolerance eps is a g-edge of tolerance eps + D by the
    triangle inequality; the check verifies that literally on the graphs.
    """
    eps = to_fraction(epsilon)
    D = f.sup_distance(g)
    # round the float sup distance up so the widened tolerance dominates it
    widened = eps + Fraction(D * (1 + 1e-12) + 1e-15) if D > 0 else eps
    Gf = build_eps_graph(f, eps)
    Gg = build_eps_graph(g, widened)
    missing = Gf.edge_set() - Gg.edge_set()
    cf = cr_mask(f, eps, Gf)
    cg = cr_mask(g, widened, Gg)
    bad = np.flatnonzero(cf & ~cg)
    witness = None
    if missing:
        witness = ("edge", min(missing))
    elif len(bad):
        witness = ("point", int(bad[0]))
    return USCResult(not missing and not len(bad), not missing, not len(bad), D, eps, widened, witness)


def fiber_components(f: SampledMap, a, y_tol, targets=None, link_radius=None) -> np.ndarray:
    """Union F(f, a) of the link-components of approximate fibers with diameter >= a.

    For each target point y the approximate fiber is {p : d(f(p), y) < y_tol};
    ``targets`` defaults to the net itself.
    """
    a = float(a)
    if a <= 0:
        raise InputError("diameter threshold must be positive")
    net = f.net
    targets = net.points if targets is None else np.asarray(targets, dtype=float).reshape(-1, net.dim)
    link = link_radius if link_radius is not None else net.link_radius
    indptr, indices = neighbors(f.images, targets, y_tol, net.metric)
    hit = np.zeros(len(net), dtype=bool)
    seen = set()
    for t in range(len(targets)):
        fiber = indices[indptr[t] : indptr[t + 1]]
        if len(fiber) < 2:
            continue
        key = fiber.tobytes()
        if key in seen:
            continue
        seen.add(key)
        labels = link_components(net.points[fiber], link, net.metric)
        for c in range(labels.max() + 1):
            part = fiber[labels == c]
            if len(part) > 1 and not hit[part].all() and set_diameter(net.points[part], net.metric) >= a:
                hit[part] = True
    return np.flatnonzero(hit)


def scc_labels(graph: EpsGraph):
    return strongly_connected_components(graph.indptr, graph.indices)
