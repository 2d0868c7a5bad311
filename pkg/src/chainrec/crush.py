"""Skeleton-crushing simplicial maps and the trap-region filter.

The crush map g sends the K''-vertex labelled by the chain S_0 > ... > S_k of
simplices of K to the K'-vertex b(S_k).  It pushes the closed star of every
b(S) in K'' onto |S|, so iterating it collapses everything onto skeleta and
its chain recurrent set splits into pieces no larger than mesh(K).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .complex import (
    FlagLabel,
    SimplicialComplex,
    VertexMap,
    barycentric_subdivide,
    mesh_sq,
    sq_dist,
)
from .engine import cr_eps
from .errors import ApproximationFailed, InputError, NotSimplicial, PreconditionError, PremiseViolated
from .net import Net, SampledMap, map_from_vertex_map, neighbors, to_fraction


@dataclass(frozen=True, eq=False)
class CrushPair:
    base: SimplicialComplex
    first: SimplicialComplex  # K'
    second: SimplicialComplex  # K''
    first_labels: list  # K'-vertex -> FlagLabel((S,))
    second_labels: list  # K''-vertex -> FlagLabel chain over K
    g: VertexMap

    def simplex_dim_of_first_vertex(self, v: int) -> int:
        return len(self.first_labels[v].chain[0]) - 1


def crush_vertex_map(K: SimplicialComplex) -> CrushPair:
    K1, lab1 = barycentric_subdivide(K)
    K2, lab2 = barycentric_subdivide(K1)
    labels, assignment = [], []
    for lab in lab2:
        sigma = lab.chain[0]
        chain = sorted((lab1[v].chain[0] for v in sigma), key=len, reverse=True)
        labels.append(FlagLabel(tuple(chain)))
        # the smallest face in the chain is b(S_k); its K'-index is the vertex of sigma labelled by it
        assignment.append(min(sigma, key=lambda v: len(lab1[v].chain[0])))
    return CrushPair(K, K1, K2, lab1, labels, VertexMap(K2, K1, assignment))


@dataclass(frozen=True, eq=False)
class TrapChain:
    """Nested net subsets U_0 in ... in U_n and K_0 in ... in K_n with K_i in U_i."""

    net: Net
    opens: tuple  # boolean masks
    closeds: tuple

    def __post_init__(self):
        opens = tuple(np.asarray(u, dtype=bool) for u in self.opens)
        closeds = tuple(np.asarray(k, dtype=bool) for k in self.closeds)
        object.__setattr__(self, "opens", opens)
        object.__setattr__(self, "closeds", closeds)
        if len(opens) != len(closeds) or not opens:
            raise InputError("trap chain needs equally many open and closed sets")
        for i in range(len(opens)):
            if np.any(closeds[i] & ~opens[i]):
                raise InputError(f"K_{i} is not contained in U_{i}")
            if i and (np.any(opens[i - 1] & ~opens[i]) or np.any(closeds[i - 1] & ~closeds[i])):
                raise InputError(f"chain is not increasing at level {i}")

    @property
    def n(self) -> int:
        return len(self.opens) - 1

    @classmethod
    def from_levels(cls, net: Net, open_level: np.ndarray, closed_level: np.ndarray, n: int) -> "TrapChain":
        """U_i = {open_level <= i}, K_i = {closed_level <= i}."""
        return cls(net, tuple(open_level <= i for i in range(n + 1)), tuple(closed_level <= i for i in range(n + 1)))


def _star_vertices_of(K: SimplicialComplex, carrier) -> frozenset:
    cache = K.__dict__.setdefault("_star_vertex_cache", {})
    if carrier not in cache:
        out = set()
        for m in K.maximal_cofaces(carrier):
            out.update(m)
        cache[carrier] = frozenset(out)
    return cache[carrier]


def _closed_star_vertices(K: SimplicialComplex, points) -> list:
    """Vertices of the closed star of each point's carrier."""
    return [_star_vertices_of(K, c) for c in K.carriers(points)]


def skeleton_trap_chain(pair: CrushPair, net: Net, interior_radius=None) -> TrapChain:
    """U_i = int closure(W_i) and K_i = net points of |K^[i]| at net level.

    W_i is the union of the K''-stars of b(S) over S in the i-skeleton.  Its
    closure is the union of the closed stars; a net point counts as interior
    when every net point within ``interior_radius`` (default 2 delta) lies in
    the closure as well.
    """
    if net.exact is None:
        raise InputError("skeleton chains need an exact net")
    K, K2 = pair.base, pair.second
    n = K.dim
    nK1 = len(pair.first.vertices)
    big = n + 1
    w_level = np.full(len(net), big, dtype=np.int64)
    k_level = np.empty(len(net), dtype=np.int64)
    level_of = {}
    for idx, star_vs in enumerate(_closed_star_vertices(K2, net.exact)):
        if star_vs not in level_of:
            lv = [pair.simplex_dim_of_first_vertex(v) for v in star_vs if v < nK1]
            level_of[star_vs] = min(lv, default=big)
        w_level[idx] = level_of[star_vs]
    k_level[:] = [len(c) - 1 for c in K.carriers(net.exact)]
    radius = to_fraction(interior_radius) if interior_radius is not None else 2 * net.delta
    indptr, indices = neighbors(net.points, net.points, radius, net.metric, inclusive=True,
                                points_exact=net.exact, queries_exact=net.exact)
    u_level = np.maximum.reduceat(w_level[indices], indptr[:-1]) if len(indices) else w_level.copy()
    u_level = np.maximum(u_level, w_level)
    u_level = np.minimum(u_level, n)
    k_level = np.minimum(k_level, n)
    return TrapChain.from_levels(net, u_level, k_level, n)


def trap_filter(f: SampledMap, chain: TrapChain, epsilon=None) -> np.ndarray:
    """Net points that may be chain recurrent given a trap chain.

    Without ``epsilon`` this is the literal set
    (X minus U_n) u (K_n minus U_{n-1}) u ... u K_0.  With ``epsilon`` each K_i
    is widened to the points closer than epsilon + delta to it, which keeps
    every eps-pseudo-orbit that enters U_i inside the widened K_i; the result
    then contains cr_eps(f).  Raises PremiseViolated if some image of a U_i
    point is farther than delta from K_i, or (with epsilon) if the widened
    K_i leaves U_i.
    """
    net = f.net
    delta = net.delta
    n = chain.n
    widened = []
    for i in range(n + 1):
        U, Ki = chain.opens[i], chain.closeds[i]
        src = np.flatnonzero(U)
        kpts = np.flatnonzero(Ki)
        if len(src):
            if not len(kpts):
                raise PremiseViolated(f"U_{i} is nonempty but K_{i} is empty", level=i, point=int(src[0]))
            qe = [f.images_exact[j] for j in src] if f.is_exact else None
            pe = [net.exact[j] for j in kpts] if f.is_exact else None
            indptr, _ = neighbors(net.points[kpts], f.images[src], delta, net.metric, inclusive=True,
                                  points_exact=pe, queries_exact=qe)
            bad = np.flatnonzero(np.diff(indptr) == 0)
            if len(bad):
                p = int(src[bad[0]])
                raise PremiseViolated(f"image of net point {p} in U_{i} is not within delta of K_{i}",
                                      level=i, point=p)
        if epsilon is None:
            widened.append(Ki)
            continue
        r = to_fraction(epsilon) + delta
        pe = [net.exact[j] for j in kpts] if net.exact is not None else None
        indptr, indices = neighbors(net.points, net.points[kpts], r, net.metric,
                                    points_exact=net.exact, queries_exact=pe)
        wide = np.zeros(len(net), dtype=bool)
        wide[indices] = True
        wide |= Ki
        if i < n:
            leak = np.flatnonzero(wide & ~U)
            if len(leak):
                raise PremiseViolated(f"the (epsilon+delta)-neighbourhood of K_{i} leaves U_{i}",
                                      level=i, point=int(leak[0]))
        widened.append(wide)
    out = ~chain.opens[n]
    prev = np.zeros(len(net), dtype=bool)
    for i in range(n + 1):
        out |= widened[i] & ~prev
        prev = chain.opens[i]
    return np.flatnonzero(out)


@dataclass
class CompressResult:
    h: VertexMap
    pair: CrushPair
    k: int


def _subdivision_depth(L: SimplicialComplex, source: SimplicialComplex, limit=10) -> int:
    current = L
    for k in range(limit):
        current, _ = barycentric_subdivide(current)
        if current == source:
            return k
    raise InputError("the vertex map's source is not an iterated subdivision L^(k+1) of L")


def skeleton_compress(L: SimplicialComplex, f: VertexMap, k: int | None = None) -> CompressResult:
    """h = f g with g the crush map whose K'' is L^(k+2); h maps L^(k+2) to L."""
    if f.target != L:
        raise InputError("f must map into L")
    if k is None:
        k = _subdivision_depth(L, f.source)
    Lk = L
    for _ in range(k):
        Lk, _ = barycentric_subdivide(Lk)
    pair = crush_vertex_map(Lk)
    if pair.first != f.source:
        raise InputError("f's source is not L^(k+1)")
    return CompressResult(pair.g.then(f), pair, k)


def simplicial_approximation(L: SimplicialComplex, F: SampledMap, max_depth: int = 6):
    """Star-condition vertex map L^(k+1) -> L for a sampled map, deepening k.

    Vertex v goes to the smallest w with F(closed star of v) inside the open
    star of w, tested on the net points of the closed star.  Returns
    ``(vertex_map, k)``.
    """
    if not F.is_exact:
        raise InputError("simplicial approximation needs exact net points and images")
    open_star = [frozenset(c) for c in L.carriers(F.images_exact)]
    Lk1 = L
    last_reason = "no depth tried"
    for k in range(max_depth + 1):
        Lk1, _ = barycentric_subdivide(Lk1)
        members = [[] for _ in Lk1.vertices]
        for idx, star_vs in enumerate(_closed_star_vertices(Lk1, F.net.exact)):
            for v in star_vs:
                members[v].append(idx)
        assignment = []
        for v, pts in enumerate(members):
            if not pts:
                raise ApproximationFailed(
                    f"closed star of vertex {v} of L^({k + 1}) holds no net point; refine the net", depth=k, vertex=v)
            common = frozenset.intersection(*(open_star[p] for p in pts))
            if not common:
                last_reason = f"star condition fails at vertex {v} of L^({k + 1})"
                break
            assignment.append(min(common))
        else:
            try:
                return VertexMap(Lk1, L, assignment), k
            except NotSimplicial:
                last_reason = f"assignment on L^({k + 1}) is not simplicial"
    raise ApproximationFailed(f"no simplicial approximation up to depth {max_depth}: {last_reason}",
                              max_depth=max_depth)


def sup_distance_sq(f: SampledMap, g: SampledMap) -> Fraction:
    """Exact max_p d(f(p), g(p))^2 on a shared exact net."""
    return max((sq_dist(a, b) for a, b in zip(f.images_exact, g.images_exact)), default=Fraction(0))


def identity_distance_sq(f: SampledMap) -> Fraction:
    return max((sq_dist(a, b) for a, b in zip(f.images_exact, f.net.exact)), default=Fraction(0))


@dataclass
class PipelineResult:
    H: SampledMap
    h: VertexMap
    approximation: VertexMap
    k: int
    report: dict = field(default_factory=dict)


def poly_pipeline(L: SimplicialComplex, F: SampledMap, epsilon, *, max_depth: int = 6, chain_epsilon=None):
    """Replace F by H = |f g| with small-component chain recurrent set.

    ``epsilon`` bounds mesh(L); the chain recurrence check runs at
    ``chain_epsilon`` (default 3 delta).  The report records
    d(F, H) against 2 mesh(L) and d1(cr(H)) against mesh(L) + 2 delta + eps.
    """
    eps = to_fraction(epsilon)
    m2 = mesh_sq(L)
    if m2 >= eps * eps:
        raise PreconditionError(f"mesh(L) = {math.sqrt(m2):g} is not below epsilon = {float(eps):g}")
    f, k = simplicial_approximation(L, F, max_depth)
    comp = skeleton_compress(L, f, k)
    net = F.net
    H = map_from_vertex_map(net, comp.h)
    fmap = map_from_vertex_map(net, f)
    delta = net.delta
    ce = to_fraction(chain_epsilon) if chain_epsilon is not None else 3 * delta
    rep = cr_eps(H, ce)
    slack = 2 * delta + ce
    dFH2 = sup_distance_sq(F, H)
    report = {
        "mesh": math.sqrt(m2),
        "k": k,
        "sup_dist_F_f": math.sqrt(sup_distance_sq(F, fmap)),
        "sup_dist_f_H": math.sqrt(sup_distance_sq(fmap, H)),
        "sup_dist_F_H": math.sqrt(dFH2),
        "sup_dist_bound_ok": dFH2 <= 4 * m2,
        "d1_cr": rep.d1,
        "slack": float(slack),
        "d1_bound_ok": rep.d1 <= math.sqrt(m2) + float(slack),
        "epsilon": float(eps),
        "chain_epsilon": float(ce),
        "delta": float(delta),
        "cr_count": rep.cr_count,
    }
    return PipelineResult(H, comp.h, f, k, report)


def crush_report(pair: CrushPair, net: Net, chain_epsilon=None) -> dict:
    """Sampled checks of d(|g|, id) <= mesh(K) and d1(cr(|g|)) <= mesh(K) + slack."""
    G = map_from_vertex_map(net, pair.g)
    m2 = mesh_sq(pair.base)
    ce = to_fraction(chain_epsilon) if chain_epsilon is not None else 3 * net.delta
    rep = cr_eps(G, ce)
    slack = 2 * net.delta + ce
    d2 = identity_distance_sq(G)
    return {
        "mesh": math.sqrt(m2),
        "sup_dist_to_id": math.sqrt(d2),
        "sup_dist_ok": d2 <= m2,
        "d1_cr": rep.d1,
        "slack": float(slack),
        "d1_ok": rep.d1 <= math.sqrt(m2) + float(slack),
        "epsilon": float(ce),
        "delta": float(net.delta),
        "cr_count": rep.cr_count,
    }
