"""Perturbations whose periodic points of period >= l crowd the chain recurrent set.

Starting from a sampled map f we pick sites spread through its chain
recurrent set, run a short lambda-chain through each site, and carve l small
cells around every node of the chain.  The perturbed map g' sends each cell
onto the centre of the next cell (the last node wraps to the first node of
the next copy), so every site carries a periodic orbit of length
l * (chain length), and any map close enough to g' still shuffles the cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.spatial import cKDTree

from .complex import as_point
from .engine import build_eps_graph, check_epsilon, cr_eps, cyclic_nodes
from .errors import (
    BetaTooLarge,
    BlendEscapesComplex,
    CellsCollide,
    ChainNotFound,
    InvalidPeriod,
    PremiseViolated,
)
from .net import GridIndex, SampledMap, neighbors, to_fraction

MAX_HALVINGS = 8


def _floor_fraction(x: float, den: int = 10**9) -> Fraction:
    return Fraction(math.floor(x * den), den)


def _dist(metric, a, b) -> float:
    return float(metric.dist(np.asarray(a, float)[None, :], np.asarray(b, float)[None, :])[0])


@dataclass
class PerturbPlan:
    """Sites, chains and cells for one perturbation.

    Node ``v`` is chain position ``nodes[v] = (i, j)`` sitting at net point
    ``node_points[v]``; its cells are ``v * l + r`` for ``r < l``.
    """

    f: SampledMap
    l: int
    epsilon: Fraction
    delta_prime: Fraction
    eta: Fraction
    lam: Fraction
    rho: Fraction
    sites: list
    chains: list
    nodes: list
    node_points: np.ndarray
    centers: np.ndarray
    cells: list  # net points with d(q, center) < rho
    closures: list  # net points with d(q, center) <= rho + 2 delta
    targets: np.ndarray  # cell -> next cell
    seed: int
    omega_inverse: float = math.inf

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    @property
    def closure_radius(self) -> Fraction:
        return self.rho + 2 * self.f.net.delta

    def cell_id(self, i: int, j: int, r: int) -> int:
        return self._node_index[(i, j)] * self.l + r

    @property
    def _node_index(self) -> dict:
        return {ij: v for v, ij in enumerate(self.nodes)}

    def orbit(self, i: int) -> list:
        """Designated orbit of p_i^0(0) as net indices, following the cell targets."""
        start = self.cell_id(i, 0, 0)
        out, c = [], start
        while True:
            out.append(int(self.centers[c]))
            c = int(self.targets[c])
            if c == start:
                return out

    def to_json(self) -> dict:
        pts = self.f.net.points
        return {
            "l": self.l,
            "seed": self.seed,
            "epsilon": str(self.epsilon),
            "delta_prime": str(self.delta_prime),
            "eta": str(self.eta),
            "lambda": str(self.lam),
            "rho": str(self.rho),
            "sites": [pts[s].tolist() for s in self.sites],
            "chains": [[pts[x].tolist() for x in ch] for ch in self.chains],
            "cells": [
                {"node": list(self.nodes[c // self.l]), "r": c % self.l, "center": pts[self.centers[c]].tolist(),
                 "size": int(len(self.cells[c])), "target_cell": int(self.targets[c])}
                for c in range(self.n_cells)
            ],
            "orbits": [[pts[p].tolist() for p in self.orbit(i)] for i in range(len(self.sites))],
        }


@dataclass
class PerturbedMap:
    g_prime: SampledMap
    plan: PerturbPlan
    designated_orbits: list
    sup_distance: float
    blended: int = 0
    reprojected: int = 0

    @property
    def periodic_points(self) -> np.ndarray:
        return np.unique(np.concatenate([np.asarray(o) for o in self.designated_orbits]))


def sampled_modulus_inverse(f: SampledMap, target, cap) -> float:
    """Smallest d(p, q) < cap among net pairs with d(f(p), f(q)) >= target."""
    net = f.net
    cap = float(cap)
    # grow the radius: the closest hit within r is the closest hit overall
    r = min(cap, 2 * float(net.delta))
    while True:
        index = GridIndex(net.points, r, net.metric)
        best = math.inf
        for start in range(0, len(net), 4096):
            stop = min(len(net), start + 4096)
            indptr, indices = neighbors(net.points, net.points[start:stop], r, net.metric, index=index)
            rows = start + np.repeat(np.arange(stop - start), np.diff(indptr))
            hit = net.metric.dist(f.images[rows], f.images[indices]) >= float(target)
            if hit.any():
                best = min(best, float(net.metric.dist(net.points[rows[hit]], net.points[indices[hit]]).min()))
        if best < math.inf:
            return best
        if r >= cap:
            return math.inf
        r = min(cap, 2 * r)


def _farthest_point_sites(points: np.ndarray, metric, radius: float, rng) -> list:
    first = int(rng.integers(len(points)))
    chosen = [first]
    best = metric.dist(points, points[first][None, :])
    while best.max() >= radius:
        nxt = int(np.argmax(best))
        chosen.append(nxt)
        best = np.minimum(best, metric.dist(points, points[nxt][None, :]))
    return chosen


def _shortest_cycle(graph, x: int, adjacency=None):
    """Shortest directed cycle through x as a node list starting at x, or None."""
    succ = graph.successors(x)
    if np.any(succ == x):
        return [x]
    adj = adjacency if adjacency is not None else _adjacency(graph)
    dist, pred = shortest_path(adj, unweighted=True, indices=x, return_predecessors=True)
    into = np.flatnonzero(graph.indices == x)
    if not len(into):
        return None
    sources = np.searchsorted(graph.indptr, into, side="right") - 1
    sources = sources[np.isfinite(dist[sources])]
    if not len(sources):
        return None
    u = int(sources[np.lexsort((sources, dist[sources]))[0]])
    path = [u]
    while path[-1] != x:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def _adjacency(graph):
    n = len(graph)
    return csr_matrix((np.ones(len(graph.indices)), graph.indices, graph.indptr), shape=(n, n))


def _allocate_cells(f: SampledMap, node_points, lam: Fraction, rho: Fraction, l: int):
    net = f.net
    delta = net.delta
    lam_f, clo_f = float(lam), float(rho + 2 * delta)
    indptr, indices = neighbors(net.points, net.points[node_points], lam, net.metric)
    rows = np.repeat(np.arange(len(node_points)), np.diff(indptr))
    d = net.metric.dist(net.points[indices], net.points[node_points[rows]])
    ok = d + clo_f < lam_f
    rows, cand, d = rows[ok], indices[ok], d[ok]
    # prefer spots few other nodes can use, then spots near the node
    shared = np.bincount(cand, minlength=len(net))[cand]
    order = np.lexsort((cand, d, shared, rows))
    rows, cand = rows[order], cand[order]
    uniq, inv = np.unique(cand, return_inverse=True)
    cptr, cidx = neighbors(net.points, net.points[uniq], rho + 2 * delta, net.metric, inclusive=True)
    bounds = np.searchsorted(rows, np.arange(len(node_points) + 1))
    taken = np.zeros(len(net), dtype=bool)
    centers = np.full(len(node_points) * l, -1, dtype=np.int64)
    # scarce nodes first
    for v in np.lexsort((np.arange(len(node_points)), np.diff(bounds))):
        placed = 0
        for t in range(bounds[v], bounds[v + 1]):
            u = inv[t]
            members = cidx[cptr[u] : cptr[u + 1]]
            if taken[members].any():
                continue
            taken[members] = True
            centers[v * l + placed] = int(cand[t])
            placed += 1
            if placed == l:
                break
        if placed < l:
            return None, int(v)
    cptr, cidx = neighbors(net.points, net.points[centers], rho, net.metric)
    cells = [cidx[cptr[c] : cptr[c + 1]] for c in range(len(centers))]
    cptr, cidx = neighbors(net.points, net.points[centers], rho + 2 * delta, net.metric, inclusive=True)
    closures = [cidx[cptr[c] : cptr[c + 1]] for c in range(len(centers))]
    return (centers, cells, closures), None


def make_plan(f: SampledMap, epsilon, l: int, seed: int = 0, *, lam=None) -> PerturbPlan:
    """Sites, lambda-chains and disjoint cells for the perturbation of f.

    delta' = 6 eps / 25 and eta = 3 eps / 25.  lambda is
    min(0.99 eta / 3, omega^-1(eta / 3)) with omega the modulus of continuity
    of f sampled on the net, unless given explicitly.
    """
    if not isinstance(l, (int, np.integer)) or l < 2:
        raise InvalidPeriod(f"period multiplier l must be an integer >= 2, got {l}", l=l)
    l = int(l)
    eps = to_fraction(epsilon)
    net = f.net
    delta_prime = Fraction(6, 25) * eps
    eta = Fraction(3, 25) * eps
    omega_inv = sampled_modulus_inverse(f, eta / 3, eta / 3)
    if lam is None:
        lam = _floor_fraction(min(0.99 * float(eta) / 3, omega_inv))
    else:
        lam = to_fraction(lam)
        if lam >= eta / 3:
            raise PremiseViolated("lambda must be below eta / 3", lam=str(lam), eta=str(eta))
    check_epsilon(lam, net.delta)
    graph = build_eps_graph(f, lam)
    cr = np.flatnonzero(cyclic_nodes(graph.indptr, graph.indices))
    if not len(cr):
        raise ChainNotFound("the lambda-chain recurrent set is empty on this net", lam=str(lam))
    rng = np.random.default_rng(seed)
    picks = _farthest_point_sites(net.points[cr], net.metric, float(eta), rng)
    sites = [int(cr[p]) for p in picks]
    chains = []
    adjacency = _adjacency(graph)
    for i, x in enumerate(sites):
        ch = _shortest_cycle(graph, x, adjacency)
        if ch is None:
            raise ChainNotFound(f"site {i} has no lambda-cycle", site=i, point=net.points[x].tolist())
        chains.append(ch)
    nodes = [(i, j) for i, ch in enumerate(chains) for j in range(len(ch))]
    node_points = np.array([chains[i][j] for i, j in nodes], dtype=np.int64)
    rho = lam / (4 * l)
    for _ in range(MAX_HALVINGS + 1):
        alloc, failed = _allocate_cells(f, node_points, lam, rho, l)
        if alloc is not None:
            break
        rho /= 2
    else:
        raise CellsCollide(
            f"could not place {l} disjoint cells around chain node {nodes[failed]}",
            node=list(nodes[failed]), rho=str(rho * 2),
        )
    centers, cells, closures = alloc
    node_index = {ij: v for v, ij in enumerate(nodes)}
    targets = np.empty(len(centers), dtype=np.int64)
    for v, (i, j) in enumerate(nodes):
        for r in range(l):
            if j + 1 < len(chains[i]):
                targets[v * l + r] = node_index[(i, j + 1)] * l + r
            else:
                targets[v * l + r] = node_index[(i, 0)] * l + (r + 1) % l
    return PerturbPlan(
        f=f, l=l, epsilon=eps, delta_prime=delta_prime, eta=eta, lam=lam, rho=rho,
        sites=sites, chains=chains, nodes=nodes, node_points=node_points, centers=centers,
        cells=cells, closures=closures, targets=targets, seed=seed, omega_inverse=omega_inv,
    )


def build_perturbation(f: SampledMap, plan: PerturbPlan) -> PerturbedMap:
    """g' = next cell centre on cell closures, f outside the lambda-balls, blended between."""
    net = f.net
    metric = net.metric
    K = net.complex
    lam = float(plan.lam)
    clo = float(plan.closure_radius)
    l = plan.l
    indptr, hosts = neighbors(net.points[plan.node_points], net.points, plan.lam, metric)
    rows = np.repeat(np.arange(len(net)), np.diff(indptr))
    a = lam - metric.dist(net.points[rows], net.points[plan.node_points[hosts]])
    best_w = np.zeros(len(net))
    best_cell = np.full(len(net), -1, dtype=np.int64)
    for r in range(l):
        cell = hosts * l + r
        b = np.maximum(0.0, metric.dist(net.points[rows], net.points[plan.centers[cell]]) - clo)
        w = a / (a + b)
        # ties go to the smaller cell id
        better = (w > best_w[rows]) | ((w == best_w[rows]) & (w > 0) & (cell < best_cell[rows]))
        for t in np.flatnonzero(better):
            p = rows[t]
            if w[t] > best_w[p] or (w[t] == best_w[p] and cell[t] < best_cell[p]):
                best_w[p], best_cell[p] = w[t], cell[t]
    exact_f = f.images_exact
    images = f.images.copy()
    images_exact = list(exact_f) if exact_f is not None else None
    reprojected = 0
    for c in range(plan.n_cells):
        for q in plan.closures[c]:
            if best_cell[q] != c or best_w[q] != 1.0:
                raise PremiseViolated("cell closures overlap", cell=c, point=int(q))
    inside = np.flatnonzero(best_w == 1.0)
    tgt = plan.centers[plan.targets[best_cell[inside]]]
    images[inside] = net.points[tgt]
    if images_exact is not None:
        for p, q in zip(inside, tgt):
            images_exact[p] = net.exact[q] if net.exact is not None else as_point(net.points[q])
    mixed = np.flatnonzero((best_cell >= 0) & (best_w < 1.0))
    blended = len(mixed)
    if blended:
        w = best_w[mixed][:, None]
        tgt = plan.centers[plan.targets[best_cell[mixed]]]
        y = (1.0 - w) * f.images[mixed] + w * net.points[tgt]
        if K is not None:
            proj = K.nearest_points_float(y)
            gap = metric.dist(proj, y)
            off = gap > 1e-12
            reprojected = int(off.sum())
            if np.any(gap >= float(plan.delta_prime)):
                bad = int(mixed[np.argmax(gap)])
                raise BlendEscapesComplex("reprojection moved a blended image too far", point=bad, gap=float(gap.max()))
            y[off] = proj[off]
        images[mixed] = y
        if images_exact is not None:
            for p, row in zip(mixed, y):
                images_exact[p] = as_point(row)
    g = SampledMap(net, images, tuple(images_exact) if images_exact is not None else None)
    sup = f.sup_distance(g)
    if sup >= float(plan.delta_prime):
        raise PremiseViolated(
            f"perturbation moved a point by {sup:g}, not below delta' = {float(plan.delta_prime):g}",
            sup_distance=sup,
        )
    orbits = [plan.orbit(i) for i in range(len(plan.sites))]
    return PerturbedMap(g, plan, orbits, sup, blended, reprojected)


def iterate_orbit(g: SampledMap, start: int, max_steps: int) -> list:
    """Follow g on the net from ``start`` while images are net points; stops on return."""
    net = g.net
    out = [int(start)]
    cur = int(start)
    for _ in range(max_steps):
        img = g.images_exact[cur] if g.images_exact is not None else g.images[cur]
        try:
            cur = net.index_of(img)
        except Exception:
            return out + [-1]
        if cur == start:
            return out
        out.append(cur)
    return out + [-1]


def verify_orbits(pm: PerturbedMap) -> dict:
    """Iterate g' from every p_i^0(0); periods must be exactly l (n_i + 1)."""
    plan = pm.plan
    results = []
    for i, ch in enumerate(plan.chains):
        expected = plan.l * len(ch)
        orbit = iterate_orbit(pm.g_prime, plan.centers[plan.cell_id(i, 0, 0)], expected + 1)
        ok = orbit[-1] != -1 and len(orbit) == expected
        distinct = len(set(plan.centers[plan.cell_id(i, 0, r)] for r in range(plan.l))) == plan.l
        results.append({"site": i, "period": len(orbit) if ok else None, "expected": expected,
                        "ok": bool(ok and distinct)})
    return {"orbits": results, "passed": all(r["ok"] for r in results)}


def _second_nearest(points: np.ndarray, queries: np.ndarray, metric) -> np.ndarray:
    if len(points) < 2:
        return np.full(len(queries), np.inf)
    if getattr(metric, "name", "") == "euclidean":
        d, _ = cKDTree(points).query(queries, k=2)
        return d[:, 1]
    out = np.empty(len(queries))
    for start in range(0, len(queries), 256):
        dd = metric.dist(queries[start : start + 256, None, :], points[None, :, :])
        out[start : start + 256] = np.partition(dd, 1, axis=1)[:, 1]
    return out


def verify_density(pm: PerturbedMap, epsilon, chain_epsilon=None) -> dict:
    """Every point of cr(g') should see two designated periodic points closer than epsilon.

    The chain recurrent set is taken at tolerance ``chain_epsilon``, the
    plan's lambda by default.
    """
    eps = to_fraction(epsilon)
    tau = to_fraction(chain_epsilon) if chain_epsilon is not None else pm.plan.lam
    net = pm.g_prime.net
    rep = cr_eps(pm.g_prime, tau)
    per = net.points[pm.periodic_points]
    second = _second_nearest(per, net.points[rep.cr_points], net.metric)
    worst = float(second.max()) if len(second) else 0.0
    failing = rep.cr_points[second >= float(eps)]
    return {
        "epsilon": float(eps),
        "chain_epsilon": float(tau),
        "cr_count": rep.cr_count,
        "periodic_count": int(len(per)),
        "worst_distance": worst,
        "failures": int(len(failing)),
        "first_failure": net.points[failing[0]].tolist() if len(failing) else None,
        "passed": not len(failing),
    }


def _random_nearby(pm: PerturbedMap, beta: float, rng) -> SampledMap:
    g = pm.g_prime
    n, d = g.images.shape
    u = rng.normal(size=(n, d))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    u *= rng.random((n, 1)) ** (1.0 / d)
    y = g.images + 0.5 * beta * u
    K = g.net.complex
    if K is not None:
        y = K.nearest_points_float(y)
    return SampledMap(g.net, y)


def verify_robustness(pm: PerturbedMap, beta, trials: int = 20, seed: int = 0, *, full_cr: bool = False) -> dict:
    """Random maps h within beta of g' must still carry every cell closure into the next cell.

    The certified gap is the cell radius rho: d(h(q), g'(q)) < beta <= rho for
    q in a closure, and g'(q) is the next centre.  Each trial also shows that
    the designated orbit stays a lambda-cycle of h, so cr_lambda(h) meets
    every cell closure.
    """
    plan = pm.plan
    beta = float(beta)
    gap = float(plan.rho)
    if beta > gap or beta < 0:
        raise BetaTooLarge(f"beta = {beta:g} exceeds the certified gap {gap:g}", beta=beta, gap=gap)
    net = pm.g_prime.net
    metric = net.metric
    closure_pts = np.concatenate(plan.closures)
    closure_cell = np.concatenate([np.full(len(c), k) for k, c in enumerate(plan.closures)])
    next_center = net.points[plan.centers[plan.targets[closure_cell]]]
    centers = plan.centers
    succ_center = net.points[centers[plan.targets]]
    results = []
    for t, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        rng = np.random.default_rng(child)
        h = pm.g_prime if beta == 0 else _random_nearby(pm, beta, rng)
        moved = float(metric.dist(h.images, pm.g_prime.images).max()) if len(net) else 0.0
        d_next = metric.dist(h.images[closure_pts], next_center)
        contained = bool(np.all(d_next < gap))
        cyc = metric.dist(h.images[centers], succ_center)
        cycle_ok = bool(np.all(cyc < float(plan.lam)))
        trial = {"trial": t, "sup_distance": moved, "worst_step": float(d_next.max()),
                 "contained": contained, "cycle_ok": cycle_ok}
        if full_cr:
            crs = cr_eps(h, plan.lam).cr_set
            trial["cr_meets_cells"] = all(crs.intersection(c.tolist()) for c in plan.closures)
        trial["ok"] = contained and cycle_ok and trial.get("cr_meets_cells", True)
        results.append(trial)
    closeness = float(plan.delta_prime) - pm.sup_distance
    return {
        "beta": beta,
        "gap": gap,
        "gamma_bounds": {"beta": beta, "closeness_slack": closeness},
        "trials": results,
        "passed": all(r["ok"] for r in results),
    }
