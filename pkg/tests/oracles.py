"""Independent brute-force references for the engine and the subdivision.

Nothing here calls into the grid index, Tarjan or the lattice code: edges
come from an exact O(n^2) double loop, recurrence from boolean transitive
closure, and subdivision counts from a direct chain enumeration.
"""
import math
from fractions import Fraction
from itertools import combinations

import numpy as np


def exact_sq(a, b):
    return sum((Fraction(x) - Fraction(y)) ** 2 for x, y in zip(a, b))


def brute_edges(points, images, eps):
    """Set of (p, q) with |images[p] - points[q]| < eps, decided in rationals."""
    e2 = Fraction(eps) ** 2
    return {(p, q) for p, y in enumerate(images) for q, x in enumerate(points) if exact_sq(y, x) < e2}


def _scaled(rows, den):
    return np.array([[int(Fraction(c) * den) for c in r] for r in rows], dtype=object)


def brute_adjacency(points, images, eps):
    """Exact d(images[p], points[q]) < eps for all pairs, in integers over a common denominator."""
    fr = [Fraction(c) for r in list(points) + list(images) for c in r] + [Fraction(eps)]
    den = 1
    for c in fr:
        den = den * c.denominator // math.gcd(den, c.denominator)
    P, Y = _scaled(points, den), _scaled(images, den)
    e = int(Fraction(eps) * den)
    d2 = ((Y[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
    return d2 < e * e


def adjacency(n, edges):
    A = np.zeros((n, n), dtype=bool)
    for p, q in edges:
        A[p, q] = True
    return A


def transitive_closure(A):
    R = A.copy()
    while True:
        nxt = R | ((R.astype(np.int64) @ R.astype(np.int64)) > 0)
        if (nxt == R).all():
            return R
        R = nxt


def brute_cr(points, images, eps):
    """Points with a directed eps-cycle through them."""
    R = transitive_closure(brute_adjacency(points, images, eps).astype(bool))
    return set(np.flatnonzero(np.diag(R)).tolist())


def face_poset(maximal):
    faces = set()
    for s in maximal:
        for k in range(1, len(s) + 1):
            faces.update(combinations(sorted(s), k))
    return faces


def descending_chains(faces):
    """All nonempty chains S_0 > S_1 > ... under proper inclusion."""
    faces = sorted(faces, key=len)
    below = {s: [t for t in faces if len(t) < len(s) and set(t) < set(s)] for s in faces}
    out = []

    def extend(chain):
        out.append(tuple(chain))
        for t in below[chain[-1]]:
            extend(chain + [t])

    for s in faces:
        extend([s])
    return out


def chain_barycenter(vertices, chain):
    bs = []
    for s in chain:
        pts = [vertices[i] for i in s]
        bs.append(tuple(sum(c) / len(pts) for c in zip(*pts)))
    return tuple(sum(c) / len(bs) for c in zip(*bs))


def fiber_oracle(points, images, y_tol, link, a):
    """F(f, a) by explicit enumeration over every net point as target."""
    pts = np.asarray(points, float)
    imgs = np.asarray(images, float)
    out = set()
    for y in pts:
        fiber = [p for p in range(len(pts)) if np.linalg.norm(imgs[p] - y) < y_tol]
        # link components by flood fill
        left = set(fiber)
        while left:
            comp, stack = set(), [left.pop()]
            while stack:
                u = stack.pop()
                comp.add(u)
                near = [v for v in left if np.linalg.norm(pts[u] - pts[v]) <= link]
                for v in near:
                    left.discard(v)
                    stack.append(v)
            comp = sorted(comp)
            diam = max((np.linalg.norm(pts[u] - pts[v]) for u in comp for v in comp), default=0.0)
            if len(comp) > 1 and diam >= a:
                out.update(comp)
    return out


def closure_chain(f, rng, n, radius):
    """Random nested traps U_0 in ... in U_n with K_i = delta-neighbourhood of f(U_i).

    Each U_i grows from random seeds until it holds every net point within
    ``radius`` of its own image, so the trap premises hold by construction.
    """
    from chainrec.crush import TrapChain
    from chainrec.net import neighbors

    net = f.net
    N = len(net)
    opens, closeds = [], []
    U = np.zeros(N, bool)
    for _ in range(n + 1):
        U = U | (rng.random(N) < 0.02)
        U[rng.integers(N)] = True
        while True:
            _, idx = neighbors(net.points, f.images[np.flatnonzero(U)], radius, inclusive=True)
            grown = U.copy()
            grown[idx] = True
            if (grown == U).all():
                break
            U = grown
        _, idx = neighbors(net.points, f.images[np.flatnonzero(U)], net.delta, inclusive=True)
        Ki = np.zeros(N, bool)
        Ki[idx] = True
        if closeds:
            Ki |= closeds[-1]
        opens.append(U.copy())
        closeds.append(Ki)
    return TrapChain(net, tuple(opens), tuple(closeds))
