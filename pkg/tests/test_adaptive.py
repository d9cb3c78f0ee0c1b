import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpgalerkin.adaptive import (
    Action,
    AdaptiveConfig,
    DiscreteSpace,
    center_hat,
    decide_action,
    dorfler_mark,
    fixed_point_step,
    run,
)
from fpgalerkin.assembly import energy_error, load_vector
from fpgalerkin.errors import DomainError, StructureError
from fpgalerkin.linsolve import cg_solve
from fpgalerkin.mesh import NodalFunction, build_initial
from fpgalerkin.problems import problem_registry


def brute_force_dorfler(eta, fraction):
    """All minimum-cardinality subsets reaching the bulk goal."""
    goal = fraction * eta.sum()
    for k in range(1, len(eta) + 1):
        hits = [set(c) for c in itertools.combinations(range(len(eta)), k)
                if eta[list(c)].sum() >= goal]
        if hits:
            return k, hits
    return 0, [set()]


def test_dorfler_examples():
    np.testing.assert_array_equal(dorfler_mark(np.array([16.0, 9, 4, 1]), 0.5), [0])
    eta = np.array([0.0, 2.0, 1.0, 0.5])
    assert set(dorfler_mark(eta, 1 - 1e-12)) == {1, 2, 3}
    assert len(dorfler_mark(np.ones(4), 0.5)) == 2
    assert dorfler_mark(np.zeros(3), 0.5).size == 0
    with pytest.raises(DomainError):
        dorfler_mark(np.array([]), 0.5)
    with pytest.raises(DomainError):
        dorfler_mark(np.array([1.0, -1.0]), 0.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=10), st.floats(0.05, 0.95))
def test_dorfler_matches_brute_force(values, fraction):
    eta = np.array(values)
    marked = dorfler_mark(eta, fraction)
    k, hits = brute_force_dorfler(eta, fraction)
    if eta.sum() == 0:
        assert marked.size == 0
        return
    assert len(marked) == k
    assert eta[marked].sum() >= fraction * eta.sum() * (1 - 1e-12)


def test_decide_action():
    assert decide_action(0.1, 1.0, 0.5) is Action.REFINE
    assert decide_action(1.0, 1.0, 0.5) is Action.ITERATE
    assert decide_action(0.5, 1.0, 0.5) is Action.ITERATE
    assert decide_action(0.0, 0.0, 0.5) is Action.ITERATE


def test_fixed_point_zero_problem():
    m = build_initial("uniform", 3)
    prob = problem_registry("zero", 1.0)
    sp_ = DiscreteSpace(m, 1.0)
    u = fixed_point_step(m, prob, sp_.B, sp_.A, sp_.M, NodalFunction.zeros(m), prob.t)
    assert not u.values.any()


def test_linear_iteration_contracts_to_galerkin_solution():
    m = build_initial("uniform", 6)
    eps = 1e-2
    prob = problem_registry("linear-manufactured", eps)
    sp_ = DiscreteSpace(m, eps)
    # direct Galerkin solution of eps(grad u, grad v) + (u, v) = (g, v);
    # at u = 0 the load vector is exactly (g, v)
    rhs = load_vector(m, prob, NodalFunction.zeros(m))
    uG, _, _ = cg_solve(sp_.B, rhs, rtol=1e-13)
    err = lambda v: np.sqrt((v - uG) @ (sp_.B @ (v - uG)))
    # shrink the step so that alpha > 0 and the ratio is observable
    t = 0.6
    alpha = np.sqrt(1 - 2 * t + t * t)
    u = center_hat(m)
    for _ in range(5):
        un = fixed_point_step(m, prob, sp_.B, sp_.A, sp_.M, u, t, rtol=1e-13)
        assert err(un.interior) <= (alpha + 0.01) * err(u.interior)
        u = un


def test_stationarity_at_fixed_point():
    m = build_initial("uniform", 8)
    prob = problem_registry("paper-ex2", 1e-2)
    sp_ = DiscreteSpace(m, prob.eps)
    u = center_hat(m)
    for _ in range(300):
        u = fixed_point_step(m, prob, sp_.B, sp_.A, sp_.M, u, prob.t, rtol=1e-12)
    un = fixed_point_step(m, prob, sp_.B, sp_.A, sp_.M, u, prob.t, rtol=1e-10)
    assert np.linalg.norm(un.interior - u.interior) <= 10 * 1e-10 * np.linalg.norm(u.interior)


def test_fixed_point_rejects_mismatch():
    m = build_initial("uniform", 3)
    prob = problem_registry("zero", 1.0)
    sp_ = DiscreteSpace(build_initial("uniform", 2), 1.0)
    with pytest.raises(StructureError):
        fixed_point_step(m, prob, sp_.B, sp_.A, sp_.M, NodalFunction.zeros(m), prob.t)


@pytest.fixture(scope="module")
def small_run():
    cfg = AdaptiveConfig(problem_registry("paper-ex2", 1e-4), max_dof=1500)
    mesh = build_initial("paper4")
    seen = []
    res = run(cfg, mesh, center_hat(mesh),
              callback=lambda rec, m, u, est: seen.append((rec, m, u)))
    return cfg, res, seen


def test_run_log_replay(small_run):
    cfg, res, seen = small_run
    assert res.stop_reason == "max_dof"
    acts = [r.action for r in res.records]
    assert Action.ITERATE in acts and Action.REFINE in acts and acts[-1] is Action.STOP
    for r in res.records[:-1]:
        assert (r.action is Action.REFINE) == (r.eta_fp < cfg.theta * r.eta_fem)


def test_run_stays_in_v0h_and_grows(small_run):
    _, res, seen = small_run
    for rec, mesh, u in seen:
        assert u.in_v0h()
    meshes = [m for _, m, _ in seen]
    for (rec, m, _), nxt in zip(seen, meshes[1:]):
        if rec.action is Action.REFINE:
            assert nxt.n_vertices > m.n_vertices
        else:
            assert nxt is m


def test_run_deterministic(small_run):
    cfg, res, _ = small_run
    mesh = build_initial("paper4")
    again = run(cfg, mesh, center_hat(mesh))
    assert again.records == res.records


def test_zero_problem_stops_immediately():
    mesh = build_initial("paper4")
    res = run(AdaptiveConfig(problem_registry("zero", 1.0)), mesh, NodalFunction.zeros(mesh))
    assert len(res.records) == 1
    rec = res.records[0]
    assert rec.eta_fp == 0.0 and rec.eta_fem == 0.0 and rec.action is Action.STOP


def test_max_outer_and_h_min():
    mesh = build_initial("paper4")
    res = run(AdaptiveConfig(problem_registry("paper-ex2", 1.0), max_outer=3), mesh,
              center_hat(mesh))
    assert len(res.records) == 3 and res.stop_reason == "max_outer" and not res.converged
    res = run(AdaptiveConfig(problem_registry("paper-ex2", 1.0), h_min=0.3), mesh,
              center_hat(mesh))
    assert res.stop_reason == "h_min"
    assert res.mesh.h < 0.3


def test_config_validation():
    p = problem_registry("paper-ex2", 1.0)
    for bad in (dict(theta=0.0), dict(marking_fraction=1.0), dict(marking="red"), dict(max_dof=0)):
        with pytest.raises(DomainError):
            AdaptiveConfig(p, **bad)
    mesh = build_initial("paper4")
    with pytest.raises(DomainError):
        run(AdaptiveConfig(p), mesh, NodalFunction(mesh, np.ones(5)))
    with pytest.raises(DomainError):
        center_hat(build_initial("uniform", 1))


def test_manufactured_rate():
    prob = problem_registry("linear-manufactured", 1.0)
    mesh = build_initial("paper4")
    rows = []

    def track(rec, m, u, est):
        if rec.action is not Action.ITERATE:
            rows.append((rec.dof, energy_error(u, prob.exact, prob.exact_grad, 1.0)))

    run(AdaptiveConfig(prob, max_dof=3000), mesh, NodalFunction.zeros(mesh), callback=track)
    dof, err = np.array(rows[-4:]).T
    slope = np.polyfit(np.log(dof), np.log(err), 1)[0]
    assert -0.65 <= slope <= -0.4
