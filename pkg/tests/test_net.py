from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from chainrec.complex import VertexMap
from chainrec.errors import InputError, PointNotInNet
from chainrec.net import (
    EUCLIDEAN,
    Net,
    map_from_function,
    map_from_vertex_map,
    neighbors,
    product_net,
    sample_net,
)

from shapes import annulus, interval, rectangle, triangle


def test_interval_net_quarter():
    net = sample_net(interval(), F(1, 4))
    vals = {p[0] for p in net.exact}
    assert {F(0), F(1, 4), F(1, 2), F(3, 4), F(1)} <= vals


def test_triangle_net_at_diameter_has_vertices():
    K = triangle()
    net = sample_net(K, F(3, 2))
    assert set(K.vertices) <= set(net.exact)


@pytest.mark.parametrize("K", [interval(), triangle(), rectangle(), annulus()], ids=["I", "tri", "rect", "ann"])
def test_net_is_dense_and_inside(K):
    delta = F(1, 8)
    net = sample_net(K, delta)
    assert len(set(net.exact)) == len(net)
    assert all(K.contains(p) for p in net.exact[:: max(1, len(net) // 50)])
    rng = np.random.default_rng(1)
    probes = []
    for s in K.maximal:
        w = rng.dirichlet(np.ones(len(s)), size=20)
        probes.append(w @ K.coords[list(s)])
    probes = np.concatenate(probes)
    assert cdist(probes, net.points).min(axis=1).max() <= float(delta)
    for s in K.simplices:
        assert any(set(K.carrier(p)) <= set(s) for p in net.exact)


def test_nonpositive_delta_rejected():
    with pytest.raises(InputError):
        sample_net(interval(), 0)


def test_index_of():
    net = sample_net(interval(), F(1, 4))
    assert net.index_of((F(1, 2),)) == net.exact.index((F(1, 2),))
    with pytest.raises(PointNotInNet):
        net.index_of((F(1, 3),))
    with pytest.raises(PointNotInNet):
        net.index_of(10**6)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.floats(0.01, 0.5), st.booleans(), st.integers(0, 2**31))
def test_neighbors_match_brute_force(n, r, inclusive, seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    qs = rng.random((n // 2 + 1, 2))
    indptr, indices = neighbors(pts, qs, r, inclusive=inclusive)
    d = cdist(qs, pts)
    for i in range(len(qs)):
        want = np.flatnonzero(d[i] <= r if inclusive else d[i] < r)
        assert indices[indptr[i] : indptr[i + 1]].tolist() == want.tolist()


def test_neighbors_exact_boundary():
    pts = np.array([[0.0], [0.1], [0.3]])
    exact = [(F(0),), (F(1, 10),), (F(3, 10),)]
    q = [(F(2, 10),)]
    indptr, indices = neighbors(pts, [[0.2]], F(1, 10), points_exact=exact, queries_exact=q)
    assert indices.tolist() == []
    indptr, indices = neighbors(pts, [[0.2]], F(1, 10), inclusive=True, points_exact=exact, queries_exact=q)
    assert indices.tolist() == [1, 2]


def test_map_from_vertex_map_identity():
    K = triangle()
    net = sample_net(K, F(1, 4))
    f = map_from_vertex_map(net, VertexMap.identity(K))
    assert f.images_exact == net.exact
    assert f.is_exact


def test_map_from_function_checks_images():
    net = sample_net(interval(), F(1, 4))
    with pytest.raises(Exception):
        map_from_function(net, lambda p: (p[0] + 2,)).check_images()


def test_product_net_metric_and_density():
    a = sample_net(interval(), F(1, 2))
    b = sample_net(interval(), F(1, 2))
    X = product_net([a, b])
    assert len(X) == len(a) * len(b)
    w1, w2 = F(1, 2) / 2, F(1, 4) / 2
    assert X.delta == w1 * F(1, 2) + w2 * F(1, 2)
    p, q = np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]])
    assert X.metric.dist(p, q)[0] == pytest.approx(float(w1 + w2))


def test_sup_distance():
    net = Net(np.array([[0.0], [1.0]]), F(1))
    f = map_from_function(net, lambda p: p)
    g = f.with_images(images=np.array([[0.25], [0.5]]))
    assert f.sup_distance(g) == pytest.approx(0.5)
    assert EUCLIDEAN.dist(np.zeros((1, 2)), np.ones((1, 2)))[0] == pytest.approx(2**0.5)
