from fractions import Fraction as F

import numpy as np
import pytest

from chainrec.crush import crush_vertex_map
from chainrec.engine import cr_eps
from chainrec.errors import BetaTooLarge, InvalidPeriod
from chainrec.net import map_from_function, map_from_vertex_map, sample_net
from chainrec.perturb import (
    build_perturbation,
    iterate_orbit,
    make_plan,
    sampled_modulus_inverse,
    verify_density,
    verify_orbits,
    verify_robustness,
)

from shapes import interval, triangle


def lam_guess(eps, lipschitz):
    # omega^-1(eta/3) for a map with the given Lipschitz constant, capped like make_plan
    eta = F(3, 25) * eps
    return min(F(99, 100) * eta / 3, eta / 3 / lipschitz)


def identity_map(eps, ratio=40):
    net = sample_net(interval(), lam_guess(eps, 1) / ratio)
    return map_from_function(net, lambda p: p)


def crush_map(eps, ratio=40):
    pair = crush_vertex_map(interval())
    net = sample_net(interval(), lam_guess(eps, 2) / ratio)
    return map_from_vertex_map(net, pair.g)


@pytest.fixture(scope="module")
def identity_pm():
    f = identity_map(F(3, 10))
    return build_perturbation(f, make_plan(f, F(3, 10), 2, seed=0))


@pytest.fixture(scope="module")
def crush_pm():
    f = crush_map(F(3, 10))
    return build_perturbation(f, make_plan(f, F(3, 10), 2, seed=0))


def test_parameter_relations(identity_pm):
    plan = identity_pm.plan
    assert plan.eta < plan.epsilon / 4
    assert plan.lam < plan.eta / 3
    assert plan.delta_prime < plan.epsilon / 4
    assert plan.lam >= 3 * plan.f.net.delta


def test_identity_plan_shape(identity_pm):
    plan = identity_pm.plan
    assert all(len(ch) == 1 for ch in plan.chains)
    assert plan.n_cells == 2 * len(plan.sites)
    x = plan.f.net.points[plan.sites, 0]
    assert np.diff(np.sort(x)).min() >= float(plan.eta)


def test_crush_sites_near_fixed_points(crush_pm):
    plan = crush_pm.plan
    x = plan.f.net.points[plan.sites, 0]
    assert np.min(np.abs(x[:, None] - np.array([0.0, 0.5, 1.0])), axis=1).max() <= float(plan.lam)
    for c in (0.0, 0.5, 1.0):
        assert np.abs(x - c).min() <= float(plan.eta)
    assert all(len(ch) == 1 for ch in plan.chains)


def test_period_one_rejected():
    f = identity_map(F(3, 10), 10)
    with pytest.raises(InvalidPeriod):
        make_plan(f, F(3, 10), 1)


@pytest.mark.parametrize("name", ["identity_pm", "crush_pm"])
def test_cells_and_targets(name, request):
    pm = request.getfixturevalue(name)
    plan = pm.plan
    pts = plan.f.net.points
    seen = set()
    for c, clo in enumerate(plan.closures):
        assert not seen.intersection(clo.tolist())
        seen.update(clo.tolist())
        assert plan.centers[c] in set(plan.cells[c].tolist())
        assert set(plan.cells[c].tolist()) <= set(clo.tolist())
        node = plan.node_points[c // plan.l]
        assert np.abs(pts[clo] - pts[node]).max() < float(plan.lam)
    for i, ch in enumerate(plan.chains):
        last = len(ch) - 1
        for r in range(plan.l):
            assert plan.targets[plan.cell_id(i, last, r)] == plan.cell_id(i, 0, (r + 1) % plan.l)


@pytest.mark.parametrize("name", ["identity_pm", "crush_pm"])
def test_g_prime_structure(name, request):
    pm = request.getfixturevalue(name)
    plan, g, f = pm.plan, pm.g_prime, pm.plan.f
    pts = f.net.points
    for c, clo in enumerate(plan.closures):
        target = pts[plan.centers[plan.targets[c]]]
        assert np.allclose(g.images[clo], target, atol=0)
    far = np.ones(len(pts), bool)
    for node in plan.node_points:
        far &= np.abs(pts[:, 0] - pts[node, 0]) >= float(plan.lam)
    assert np.array_equal(g.images[far], f.images[far])
    assert pm.sup_distance < float(plan.delta_prime)


@pytest.mark.parametrize("name", ["identity_pm", "crush_pm"])
def test_designated_orbits(name, request):
    pm = request.getfixturevalue(name)
    plan = pm.plan
    rep = verify_orbits(pm)
    assert rep["passed"]
    for i, o in enumerate(rep["orbits"]):
        assert o["period"] == plan.l * len(plan.chains[i]) >= plan.l
        start = plan.centers[plan.cell_id(i, 0, 0)]
        assert len(iterate_orbit(pm.g_prime, start, 10)) == plan.l
        assert len({plan.centers[plan.cell_id(i, 0, r)] for r in range(plan.l)}) == plan.l


def test_identity_density(identity_pm):
    rep = verify_density(identity_pm, F(3, 10))
    assert rep["passed"] and rep["worst_distance"] < 0.3


def test_density_two_periodic_points(crush_pm):
    pm = crush_pm
    rep = verify_density(pm, F(3, 10))
    assert rep["passed"]
    per = pm.g_prime.net.points[pm.periodic_points, 0]
    for p in cr_eps(pm.g_prime, pm.plan.lam).cr_points:
        x = pm.g_prime.net.points[p, 0]
        assert (np.abs(per - x) < 0.3).sum() >= 2


def test_density_too_small_epsilon_reported(identity_pm):
    rep = verify_density(identity_pm, identity_pm.plan.eta / 4)
    assert rep["passed"] is False and rep["failures"] > 0 and rep["first_failure"] is not None


@pytest.mark.parametrize("name", ["identity_pm", "crush_pm"])
def test_robustness(name, request):
    pm = request.getfixturevalue(name)
    rep = verify_robustness(pm, float(pm.plan.rho) / 2, trials=20, seed=3)
    assert rep["passed"] and len(rep["trials"]) == 20
    assert rep["gamma_bounds"]["closeness_slack"] > 0


def test_robustness_zero_beta_exact(identity_pm):
    rep = verify_robustness(identity_pm, 0.0, trials=2, full_cr=True)
    assert rep["passed"]
    assert all(t["sup_distance"] == 0 for t in rep["trials"])


def test_beta_above_gap(identity_pm):
    with pytest.raises(BetaTooLarge):
        verify_robustness(identity_pm, 2 * float(identity_pm.plan.rho))


def test_plan_is_deterministic():
    f = identity_map(F(3, 10), 20)
    a, b = make_plan(f, F(3, 10), 2, seed=5), make_plan(f, F(3, 10), 2, seed=5)
    assert a.sites == b.sites and np.array_equal(a.centers, b.centers)
    assert a.to_json() == b.to_json()


def test_modulus_inverse_lipschitz():
    f = crush_map(F(3, 10), 20)
    w = sampled_modulus_inverse(f, F(1, 10), F(1, 5))
    assert 0.05 - 2 * float(f.net.delta) <= w <= 0.05 + 2 * float(f.net.delta)


def test_triangle_crush_period_three():
    # the crush map on the triangle is steep, so lambda / delta stays workable only for a large epsilon
    pair = crush_vertex_map(triangle())
    f = map_from_vertex_map(sample_net(triangle(), F(1, 100)), pair.g)
    pm = build_perturbation(f, make_plan(f, F(10), 3, seed=0))
    plan = pm.plan
    rep = verify_orbits(pm)
    assert rep["passed"]
    for i, ch in enumerate(plan.chains):
        assert rep["orbits"][i]["period"] == 3 * len(ch)
        assert len({plan.centers[plan.cell_id(i, 0, r)] for r in range(3)}) == 3
