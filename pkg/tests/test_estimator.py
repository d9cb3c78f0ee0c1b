import numpy as np
import pytest

from fpgalerkin.adaptive import DiscreteSpace, center_hat, fixed_point_step
from fpgalerkin.assembly import (
    QUAD_DEG5,
    assemble_stiffness,
    energy_error,
    project_nonlinearity,
)
from fpgalerkin.errors import StructureError
from fpgalerkin.estimator import (
    edge_jump,
    edge_jumps,
    element_indicator,
    element_indicators,
    estimate,
    fem_estimator,
    fp_indicator,
    total_bound,
)
from fpgalerkin.mesh import Mesh, NodalFunction, build_initial, peclet_weights, prolongate, refine_uniform
from fpgalerkin.problems import problem_registry


def _hat_at(mesh, point):
    k = np.flatnonzero(np.all(np.isclose(mesh.vertices, point), axis=1))[0]
    return NodalFunction(mesh, np.eye(mesh.n_vertices)[k])


def _diagonal_edge(mesh):
    return int(mesh.interior_edges[0])


def test_jump_two_triangle_patch():
    m = build_initial("uniform", 1)
    w = _hat_at(m, (1.0, 0.0))
    E = _diagonal_edge(m)
    # hand value: grad = (1, -1) below the diagonal, 0 above, normal (-1, 1)/sqrt(2)
    lower = int(np.flatnonzero(np.all(np.isclose(m.vertices[m.triangles], (1.0, 0.0)), axis=2)
                               .any(axis=1))[0])
    np.testing.assert_allclose(w.gradients()[lower], [1.0, -1.0], atol=1e-15)
    assert abs(edge_jump(m, E, w)) == pytest.approx(np.sqrt(2), abs=1e-12)
    assert edge_jump(m, E, w) == pytest.approx(-edge_jump(m, E, -w), abs=1e-15)
    affine = NodalFunction.interpolate(m, lambda x: 2 * x[..., 0] - x[..., 1] + 1)
    assert edge_jump(m, E, affine) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(StructureError):
        edge_jump(m, int(np.flatnonzero(m.boundary_edge)[0]), w)


def test_jump_by_flux_oracle():
    # elementwise integration by parts (P1 has no Laplacian): for an interior
    # vertex z, (grad w, grad phi_z) = sum_E [[grad w]] h_E / 2 over edges at z
    m = refine_uniform(build_initial("paper4"), 4)
    rng = np.random.default_rng(0)
    w = NodalFunction(m, rng.standard_normal(m.n_vertices))
    J = edge_jumps(m, w)
    E = m.interior_edges
    h = m.edge_lengths[E]
    A = assemble_stiffness(m, full=True)
    for z in m.interior_vertices[:10]:
        touches = np.any(m.edges[E] == z, axis=1)
        lhs = 0.5 * np.sum(h[touches] * J[touches])
        assert lhs == pytest.approx((A @ w.values)[z], rel=1e-10, abs=1e-12)


def test_element_indicator_examples():
    tri = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    z = NodalFunction.zeros(tri)
    one = NodalFunction(tri, np.ones(3))
    assert element_indicator(tri, 0, z, z, one, 0.3, 1.0) == pytest.approx(0.045, rel=1e-14)
    m = build_initial("uniform", 3)
    aff = NodalFunction.interpolate(m, lambda x: x[..., 0] - 3 * x[..., 1])
    zero_f = NodalFunction.zeros(m)
    np.testing.assert_allclose(element_indicators(m, aff, aff, zero_f, 0.3, 1.0), 0.0, atol=1e-28)


def _frozen_state(mesh, eps, steps=3):
    prob = problem_registry("paper-ex2", eps)
    sp_ = DiscreteSpace(mesh, eps)
    u = center_hat(mesh)
    for _ in range(steps):
        u = fixed_point_step(mesh, prob, sp_.B, sp_.A, sp_.M, u, prob.t)
    un = fixed_point_step(mesh, prob, sp_.B, sp_.A, sp_.M, u, prob.t)
    fh = project_nonlinearity(mesh, sp_.M_full, prob, u)
    return prob, sp_, un, u, fh


def test_volume_term_matches_quadrature():
    m = refine_uniform(build_initial("paper4"), 3)
    prob, sp_, un, u, fh = _frozen_state(m, 1e-2)
    t = prob.t
    wts = peclet_weights(m, prob.eps)
    r = t * fh - (un - u)
    lam, w = QUAD_DEG5
    rq = r.values[m.triangles] @ lam.T
    vol = wts.alpha_T**2 * m.areas * ((rq * rq) @ w)
    # drop the edge terms by making the jump weight vanish
    edge_free = type(wts)(wts.alpha_T, np.zeros_like(wts.alpha_E))
    np.testing.assert_allclose(element_indicators(m, un, u, fh, t, prob.eps, edge_free), vol,
                               rtol=1e-12)


def test_edge_terms_counted_once():
    m = refine_uniform(build_initial("paper4"), 3)
    prob, sp_, un, u, fh = _frozen_state(m, 1e-3)
    wts = peclet_weights(m, prob.eps)
    no_vol = type(wts)(np.zeros_like(wts.alpha_T), wts.alpha_E)
    eta = element_indicators(m, un, u, fh, prob.t, prob.eps, no_vol)
    w = (un - u) + prob.t * u
    J = edge_jumps(m, w)
    h = m.edge_lengths[m.interior_edges]
    direct = np.sum(prob.eps**-0.5 * wts.alpha_E * (prob.eps * J) ** 2 * h)
    assert eta.sum() == pytest.approx(direct, rel=1e-12)


def test_fem_estimator_identity():
    m = refine_uniform(build_initial("paper4"), 4)
    prob, sp_, un, u, fh = _frozen_state(m, 1e-4)
    eta, eta_T, osc = fem_estimator(m, prob, un, u, fh, prob.t)
    assert eta**2 - prob.t * osc**2 == pytest.approx(eta_T.sum(), rel=1e-12)
    assert np.all(eta_T >= 0) and osc >= 0
    b = estimate(m, prob, sp_.B, un, u, fh, prob.t)
    assert b.total == b.eta_fem + b.eta_fp


def test_fem_estimator_zero_residual():
    m = build_initial("uniform", 2)
    prob = problem_registry("zero", 1.0)
    z = NodalFunction.zeros(m)
    eta, eta_T, osc = fem_estimator(m, prob, z, z, z, prob.t)
    assert eta == 0.0 and osc == 0.0


def test_fp_indicator():
    m = build_initial("uniform", 4)
    B = DiscreteSpace(m, 1.0).B
    rng = np.random.default_rng(5)
    a, b = (NodalFunction.from_interior(m, rng.standard_normal(m.dof)) for _ in range(2))
    assert fp_indicator(B, a, a) == 0.0
    c = NodalFunction.from_interior(m, 2 * b.interior - a.interior)
    assert fp_indicator(B, c, a) == pytest.approx(2 * fp_indicator(B, b, a), rel=1e-14)
    assert fp_indicator(B, b.interior, a.interior) == fp_indicator(B, b, a)


def test_total_bound():
    assert total_bound(0.0, 0.0) == 0.0
    assert total_bound(0.3, 0.1) == pytest.approx(0.4)
    assert total_bound(0.3, 0.2) > total_bound(0.3, 0.1)
    assert total_bound(0.4, 0.1) > total_bound(0.3, 0.1)


def _converged_linear(mesh, prob, u0=None):
    sp_ = DiscreteSpace(mesh, prob.eps)
    u = NodalFunction.zeros(mesh) if u0 is None else u0
    for _ in range(3):
        un = fixed_point_step(mesh, prob, sp_.B, sp_.A, sp_.M, u, prob.t, rtol=1e-12)
        fh = project_nonlinearity(mesh, sp_.M_full, prob, u)
        prev, u = u, un
    return fem_estimator(mesh, prob, u, prev, fh, prob.t)[0], u


def test_refinement_reduces_estimator():
    prob = problem_registry("linear-manufactured", 1.0)
    m = build_initial("uniform", 4)
    eta0, u = _converged_linear(m, prob)
    f = refine_uniform(m, 2)
    eta1, _ = _converged_linear(f, prob, prolongate(prolongate(u, f.parent), f))
    assert eta1 / eta0 < 1


def test_effectivity_sanity_linear():
    prob = problem_registry("linear-manufactured", 1.0)
    m = build_initial("uniform", 8)
    eta, u = _converged_linear(m, prob)
    err = energy_error(u, prob.exact, prob.exact_grad, prob.eps)
    assert 0.1 <= eta / err <= 10


def test_weights_saturate_as_eps_vanishes():
    m = refine_uniform(build_initial("paper4"), 4)
    prob, sp_, un, u, fh = _frozen_state(m, 1e-4)
    vals = []
    for eps in (1e-4, 1e-6, 1e-8, 1e-10):
        w = peclet_weights(m, eps)
        vals.append(element_indicators(m, un, u, fh, prob.t, eps, w).sum())
    vals = np.array(vals)
    assert np.all(np.isfinite(vals)) and vals.min() > 0
    assert vals.max() / vals.min() < 1e3
    # h_T >= sqrt(eps) everywhere from 1e-6 on, so only the eps factor of the edge term moves
    w6, w8 = peclet_weights(m, 1e-6), peclet_weights(m, 1e-8)
    np.testing.assert_array_equal(w6.alpha_T, w8.alpha_T)
    np.testing.assert_array_equal(w8.alpha_T, 1.0)
