from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chainrec.complex import VertexMap, close_complex, iterated_subdivision, mesh, mesh_sq
from chainrec.crush import (
    TrapChain,
    crush_report,
    crush_vertex_map,
    poly_pipeline,
    simplicial_approximation,
    skeleton_compress,
    skeleton_trap_chain,
    trap_filter,
)
from chainrec.engine import cr_eps
from chainrec.errors import ApproximationFailed, InputError, PreconditionError, PremiseViolated
from chainrec.net import map_from_function, map_from_vertex_map, neighbors, sample_net

from oracles import brute_cr, chain_barycenter, closure_chain
from shapes import doubling, interval, random_vertex_map, rectangle, square_boundary, triangle


def test_interval_crush_vertex_images():
    pair = crush_vertex_map(interval())
    K1v, K2v = pair.first.vertices, pair.second.vertices
    images = {K2v[v][0]: K1v[a][0] for v, a in enumerate(pair.g.assignment)}
    assert images == {F(0): 0, F(1): 1, F(1, 2): F(1, 2), F(1, 4): 0, F(3, 4): 1}


def test_single_vertex_crush_is_identity():
    K = close_complex([], [(F(2),)])
    pair = crush_vertex_map(K)
    assert pair.g.assignment == (0,)


@pytest.mark.parametrize("K", [triangle(), rectangle()], ids=["tri", "rect"])
def test_first_subdivision_vertices_are_fixed(K):
    pair = crush_vertex_map(K)
    K1v = pair.first.vertices
    for v, p in enumerate(pair.second.vertices):
        if p in K1v:
            assert K1v[pair.g.assignment[v]] == p


@pytest.mark.parametrize("K", [interval(), triangle(), rectangle()], ids=["I", "tri", "rect"])
def test_crush_image_is_last_face_barycenter(K):
    pair = crush_vertex_map(K)
    for v, lab in enumerate(pair.second_labels):
        assert chain_barycenter(K.vertices, lab.chain) == pair.second.vertices[v]
        assert pair.first.vertices[pair.g.assignment[v]] == K.barycenter(lab.last)


@pytest.mark.parametrize("K", [interval(), triangle(), rectangle()], ids=["I", "tri", "rect"])
def test_crush_moves_points_at_most_mesh(K):
    pair = crush_vertex_map(K)
    net = sample_net(K, F(1, 20))
    G = map_from_vertex_map(net, pair.g)
    m2 = mesh_sq(K)
    assert all(sum((a - b) ** 2 for a, b in zip(y, x)) <= m2 for x, y in zip(net.exact, G.images_exact))


def test_interval_trap_chain_levels():
    pair = crush_vertex_map(interval())
    net = sample_net(interval(), F(1, 100))
    ch = skeleton_trap_chain(pair, net)
    x = net.points[:, 0]
    U0 = x[ch.opens[0]]
    assert {0.0, 1.0} <= set(U0) and np.all((U0 < 0.25) | (U0 > 0.75))
    assert np.all(ch.opens[0][(x <= 0.22) | (x >= 0.78)])
    assert set(x[ch.closeds[0]]) == {0.0, 1.0}
    assert ch.opens[1].all() and ch.closeds[1].all()


def test_single_vertex_trap_chain():
    K = close_complex([], [(F(1, 2),)])
    net = sample_net(K, F(1, 10))
    ch = skeleton_trap_chain(crush_vertex_map(K), net)
    assert ch.n == 0 and ch.opens[0].tolist() == [True] and ch.closeds[0].tolist() == [True]


def test_triangle_trap_chain_boundary():
    K = triangle()
    net = sample_net(K, F(1, 40))
    ch = skeleton_trap_chain(crush_vertex_map(K), net)
    on_boundary = np.array([len(K.carrier(p)) <= 2 for p in net.exact])
    assert (ch.closeds[1] == on_boundary).all()
    # a collar of the boundary belongs to U_1
    x, y = net.points[:, 0], net.points[:, 1]
    collar = (x < 0.05) | (y < 0.05) | (x + y > 0.95)
    assert ch.opens[1][collar].all()


def test_interval_trap_filter_and_cr():
    pair = crush_vertex_map(interval())
    net = sample_net(interval(), F(1, 100))
    G = map_from_vertex_map(net, pair.g)
    ch = skeleton_trap_chain(pair, net)
    out = set(trap_filter(G, ch).tolist())
    x = net.points[:, 0]
    want = {i for i in range(len(x)) if x[i] in (0.0, 1.0) or 0.24 - 1e-12 <= x[i] <= 0.76 + 1e-12}
    assert out == want
    eps = F(3, 100)
    cr = brute_cr(net.exact, G.images_exact, eps)
    assert cr <= set(trap_filter(G, ch, eps).tolist())
    for c in (0.0, 0.5, 1.0):
        assert any(abs(x[i] - c) < 1e-12 for i in cr)


def test_constant_map_trap_filter():
    net = sample_net(interval(), F(1, 50))
    c = (F(1, 2),)
    f = map_from_function(net, lambda p: c)
    ball = np.abs(net.points[:, 0] - 0.5) <= 0.1
    ch = TrapChain(net, (ball,), (ball,))
    out = set(trap_filter(f, ch).tolist())
    assert out == set(np.flatnonzero(~ball).tolist()) | set(np.flatnonzero(ball).tolist())
    assert cr_eps(f, F(3, 50)).cr_set <= out


def test_trap_premise_violation():
    net = sample_net(interval(), F(1, 10))
    f = map_from_function(net, lambda p: (F(1),))
    U = net.points[:, 0] < 0.05
    with pytest.raises(PremiseViolated):
        trap_filter(f, TrapChain(net, (U, np.ones(len(net), bool)), (U, np.ones(len(net), bool))))


def test_trap_chain_validation():
    net = sample_net(interval(), F(1, 10))
    a = np.zeros(len(net), bool)
    b = a.copy()
    b[0] = True
    with pytest.raises(InputError):
        TrapChain(net, (a,), (b,))
    with pytest.raises(InputError):
        TrapChain(net, (b, a), (a, a))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["I", "tri"]))
def test_random_trap_chains_are_sound(seed, shape):
    rng = np.random.default_rng(seed)
    K = interval(4) if shape == "I" else triangle()
    delta = F(1, 40) if shape == "I" else F(1, 12)
    net = sample_net(K, delta)
    f = map_from_vertex_map(net, random_vertex_map(rng, K))
    eps = 3 * delta
    ch = closure_chain(f, rng, K.dim, float(eps + 2 * delta))
    out = set(trap_filter(f, ch, eps).tolist())
    assert brute_cr(net.exact, f.images_exact, eps) <= out


def test_compress_identity_approximation():
    L = interval()
    net = sample_net(L, F(1, 100))
    f, k = simplicial_approximation(L, map_from_function(net, lambda p: p))
    assert k == 1 and f.assignment == (0, 1, 0, 0, 1)
    res = skeleton_compress(L, f)
    assert res.k == 1 and res.h == res.pair.g.then(f)
    H = map_from_vertex_map(net, res.h)
    eps = F(3, 100)
    cr = brute_cr(net.exact, H.images_exact, eps)
    assert cr == cr_eps(H, eps).cr_set
    xs = sorted(float(net.exact[i][0]) for i in cr)
    assert xs == [0.0, 0.01, 0.02, 0.98, 0.99, 1.0]


def test_compress_constant():
    L = interval()
    L1 = iterated_subdivision(L, 1)
    f = VertexMap(L1, L, [1] * len(L1.vertices))
    res = skeleton_compress(L, f)
    assert set(res.h.assignment) == {1}
    net = sample_net(L, F(1, 50))
    rep = cr_eps(map_from_vertex_map(net, res.h), F(3, 50))
    assert rep.cr_set == {i for i, p in enumerate(net.exact) if 1 - p[0] < F(3, 50)}


def test_compress_triangle_identity_bound():
    L = triangle()
    net = sample_net(L, F(1, 40))
    f, k = simplicial_approximation(L, map_from_function(net, lambda p: p))
    H = map_from_vertex_map(net, skeleton_compress(L, f, k).h)
    eps = 3 * net.delta
    assert cr_eps(H, eps).d1 <= mesh(L) + float(2 * net.delta + eps)


def test_compress_rejects_wrong_target():
    with pytest.raises(InputError):
        skeleton_compress(interval(), VertexMap.identity(interval(2)))


def test_approximation_fails_when_too_shallow():
    L = interval()
    net = sample_net(L, F(1, 20))
    with pytest.raises(ApproximationFailed):
        simplicial_approximation(L, map_from_function(net, lambda p: p), max_depth=0)


def test_pipeline_interval_identity():
    L = interval(4)
    net = sample_net(L, F(1, 160))
    res = poly_pipeline(L, map_from_function(net, lambda p: p), F(1, 2))
    r = res.report
    assert r["mesh"] == 0.25
    assert r["sup_dist_bound_ok"] and r["d1_bound_ok"]
    assert r["d1_cr"] <= 0.25 + r["slack"]


def test_pipeline_simplicial_input_matches_compress():
    L = interval(2)
    L1 = iterated_subdivision(L, 1)
    net = sample_net(L, F(1, 80))
    f0 = VertexMap(L1, L, [0, 1, 2, 1, 1])
    res = poly_pipeline(L, map_from_vertex_map(net, f0), F(3, 4))
    direct = map_from_vertex_map(net, skeleton_compress(L, res.approximation, res.k).h)
    assert res.H.images_exact == direct.images_exact


def test_pipeline_doubling_bound():
    L = square_boundary(4)
    net = sample_net(L, F(1, 100))
    F_ = map_from_function(net, doubling)
    res = poly_pipeline(L, F_, F(1, 2))
    assert res.report["sup_dist_bound_ok"]
    assert res.report["sup_dist_F_H"] <= 2 * res.report["mesh"]


def test_pipeline_precondition():
    L = interval()
    net = sample_net(L, F(1, 20))
    with pytest.raises(PreconditionError):
        poly_pipeline(L, map_from_function(net, lambda p: p), F(1, 2))


def test_crush_report_interval():
    pair = crush_vertex_map(interval())
    rep = crush_report(pair, sample_net(interval(), F(1, 40)))
    assert rep["sup_dist_ok"] and rep["d1_ok"]
    assert rep["sup_dist_to_id"] == 0.25
