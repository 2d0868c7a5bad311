"""Strongly connected components of CSR digraphs.

Tarjan's lowlink algorithm with an explicit call stack instead of
recursion, so graphs with millions of nodes do not hit Python's recursion
limit.  The kernel is compiled with numba when it is importable and runs as
plain Python otherwise; both paths execute the same code.

Components are numbered in the order Tarjan completes them, which is a
reverse topological order of the condensation.
"""
from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _tarjan(indptr, indices, n):
    index = np.full(n, -1, np.int64)
    low = np.zeros(n, np.int64)
    onstack = np.zeros(n, np.bool_)
    comp = np.full(n, -1, np.int64)
    stack = np.empty(n, np.int64)
    call_node = np.empty(n, np.int64)
    call_edge = np.empty(n, np.int64)
    sp = 0
    counter = 0
    ncomp = 0
    for root in range(n):
        if index[root] != -1:
            continue
        depth = 0
        call_node[0] = root
        call_edge[0] = indptr[root]
        index[root] = counter
        low[root] = counter
        counter += 1
        stack[sp] = root
        sp += 1
        onstack[root] = True
        while depth >= 0:
            v = call_node[depth]
            e = call_edge[depth]
            if e < indptr[v + 1]:
                call_edge[depth] = e + 1
                w = indices[e]
                if index[w] == -1:
                    index[w] = counter
                    low[w] = counter
                    counter += 1
                    stack[sp] = w
                    sp += 1
                    onstack[w] = True
                    depth += 1
                    call_node[depth] = w
                    call_edge[depth] = indptr[w]
                elif onstack[w]:
                    if index[w] < low[v]:
                        low[v] = index[w]
                continue
            if low[v] == index[v]:
                while True:
                    sp -= 1
                    w = stack[sp]
                    onstack[w] = False
                    comp[w] = ncomp
                    if w == v:
                        break
                ncomp += 1
            depth -= 1
            if depth >= 0:
                u = call_node[depth]
                if low[v] < low[u]:
                    low[u] = low[v]
    return comp, ncomp


def strongly_connected_components(indptr, indices):
    """Label array (one component id per node) and the component count."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    n = len(indptr) - 1
    if n <= 0:
        return np.zeros(0, np.int64), 0
    comp, ncomp = _tarjan(indptr, indices, n)
    return comp, int(ncomp)


def has_self_loop(indptr, indices) -> np.ndarray:
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    loop = np.zeros(n, dtype=bool)
    loop[rows[indices == rows]] = True
    return loop


def cyclic_nodes(indptr, indices) -> np.ndarray:
    """Boolean mask of nodes lying on a directed cycle (self-loops included)."""
    comp, ncomp = strongly_connected_components(indptr, indices)
    sizes = np.bincount(comp, minlength=ncomp)
    return (sizes[comp] >= 2) | has_self_loop(indptr, indices)
