import numpy as np
import pytest

from peakdescent.cones import (nehari_residuals, peak_select, project_ray)
from peakdescent.errors import DegenerateRay, DomainViolation
from peakdescent.fields import Field
from peakdescent.mesh import build_structured_mesh, nodal_interpolate
from peakdescent.problems import IndefiniteProblem, SystemProblem

from _oracles import duffy_integrate_p1, random_field


@pytest.fixture(scope="module")
def indef0():
    return IndefiniteProblem(build_structured_mesh(8), 0.0, p=4.0)


@pytest.fixture(scope="module")
def indef21():
    return IndefiniteProblem(build_structured_mesh(16), -21.0, p=4.0)


@pytest.fixture(scope="module")
def sys_comp():
    # competitive coupling, inside the admissible range
    return SystemProblem(build_structured_mesh(8), [1.0, 4.0],
                         [[0.0, -1.0], [-1.0, 0.0]])


def h_norm(problem, u):
    return problem.h_norm(u)


# -- closed-form selections ---------------------------------------------


def test_indefinite_ray_only_closed_form(indef0, rng):
    # dim E = 0: maximize t -> t^2 a/2 - t^4 b/4 along the normalized ray
    u = random_field(indef0.mesh, rng)
    cone = indef0.cone()
    w = project_ray(cone, u)
    a = w.data[0] @ (indef0.K.matrix @ w.data[0])
    b = duffy_integrate_p1(indef0.mesh, w.vertex_values(), lambda s: s**4)
    t_star = np.sqrt(a / b)
    res = peak_select(cone, indef0, u)
    assert res.params[-1] == pytest.approx(t_star, rel=1e-8)
    assert indef0.energy(res.point) == pytest.approx(a * a / (4 * b), rel=1e-8)
    assert res.grad_norm <= 1e-10
    assert res.params[-1] > 0


def test_system_single_component_closed_form(rng):
    mesh = build_structured_mesh(8)
    prob = SystemProblem(mesh, [2.5], [[0.0]])
    u = random_field(mesh, rng)
    a1 = u.data[0] @ (prob.stiffness.matrix @ u.data[0])
    b1 = duffy_integrate_p1(mesh, u.vertex_values(), lambda s: s**4)
    res = peak_select(prob.cone(), prob, u)
    assert res.params[0] == pytest.approx(np.sqrt(a1 / (2.5 * b1)), rel=1e-8)


def test_system_uncoupled_pair_decouples(rng):
    mesh = build_structured_mesh(8)
    prob = SystemProblem(mesh, [1.0, 4.0], [[0.0, 0.0], [0.0, 0.0]])
    u = random_field(mesh, rng, k=2)
    res = peak_select(prob.cone(), prob, u)
    for i, mu in enumerate((1.0, 4.0)):
        a = u.data[i] @ (prob.stiffness.matrix @ u.data[i])
        b = duffy_integrate_p1(mesh, u.vertex_values()[i], lambda s: s**4)
        assert res.params[i] == pytest.approx(np.sqrt(a / (mu * b)), rel=1e-8)


def _two_by_two_oracle(prob, u):
    """Positive stationary point of the inner problem in s_i = t_i^2."""
    mesh = u.mesh
    vv = u.vertex_values()
    a = [u.data[i] @ (prob.stiffness.matrix @ u.data[i]) for i in range(2)]
    b = [duffy_integrate_p1(mesh, vv[i], lambda s: s**4) for i in range(2)]
    c = duffy_integrate_p1(mesh, vv, lambda s1, s2: s1 * s1 * s2 * s2)
    beta = prob.beta[0, 1]
    mat = np.array([[prob.mu[0] * b[0], beta * c],
                    [beta * c, prob.mu[1] * b[1]]])
    s = np.linalg.solve(mat, np.array(a))
    return s


def test_system_coupled_matches_linear_oracle(sys_comp, rng):
    for _ in range(20):
        u = random_field(sys_comp.mesh, rng, k=2)
        s = _two_by_two_oracle(sys_comp, u)
        assert np.all(s > 0)
        res = peak_select(sys_comp.cone(), sys_comp, u)
        assert np.allclose(res.params, np.sqrt(s), rtol=1e-8, atol=0)


def test_inner_hessian_negative_definite_at_optimum(sys_comp, rng):
    # admissible-range couplings make the stationary point a strict maximum
    u = random_field(sys_comp.mesh, rng, k=2)
    res = peak_select(sys_comp.cone(), sys_comp, u)
    t = res.params
    quad = sys_comp.quad
    svals = quad.values(u.data)
    s2 = svals * svals
    G = (s2 * quad.weights) @ s2.T
    coup = sys_comp.beta * G
    np.fill_diagonal(coup, sys_comp.mu * np.diagonal(G))
    a = np.array([u.data[i] @ (sys_comp.stiffness.matrix @ u.data[i])
                  for i in range(2)])
    H = -2.0 * coup * np.outer(t, t)
    H[np.diag_indices_from(H)] += a - coup @ (t * t)
    assert np.linalg.eigvalsh(H).max() < 0.0


# -- ray projection ------------------------------------------------------


def test_project_ray_unit_norm(indef21, rng):
    u = random_field(indef21.mesh, rng)
    w = project_ray(indef21.cone(), u)
    assert h_norm(indef21, w) == pytest.approx(1.0, abs=1e-10)


def test_project_ray_scale_invariant(indef21, rng):
    u = random_field(indef21.mesh, rng)
    cone = indef21.cone()
    w1 = project_ray(cone, u)
    w2 = project_ray(cone, 7.5 * u)
    assert np.allclose(w1.data, w2.data, rtol=0, atol=1e-12)


def test_project_ray_removes_subspace_part(indef21):
    basis = indef21.basis
    assert basis.dim == 1
    e = Field(indef21.mesh, basis.vectors[:, 0])
    w0 = nodal_interpolate(indef21.mesh,
                           lambda x, y: np.sin(2 * np.pi * x) * np.sin(np.pi * y))
    cone = indef21.cone()
    w_pure = project_ray(cone, w0)
    w_mixed = project_ray(cone, w0 + 3.0 * e)
    assert np.allclose(w_mixed.data, w_pure.data, rtol=0, atol=1e-9)


def test_project_ray_system_componentwise(sys_comp, rng):
    u = random_field(sys_comp.mesh, rng, k=2)
    w = project_ray(sys_comp.cone(), u)
    A = sys_comp.stiffness.matrix
    for i in range(2):
        assert w.data[i] @ (A @ w.data[i]) == pytest.approx(1.0, abs=1e-10)


def test_domain_violation_small_component(sys_comp, rng):
    u = random_field(sys_comp.mesh, rng, k=2)
    tiny = Field(u.mesh, np.vstack([u.data[0], 1e-12 * u.data[1]]))
    with pytest.raises(DomainViolation):
        peak_select(sys_comp.cone(), sys_comp, tiny)
    with pytest.raises(DomainViolation):
        project_ray(sys_comp.cone(), tiny)


def test_domain_violation_subspace_input(indef21):
    e = Field(indef21.mesh, indef21.basis.vectors[:, 0])
    with pytest.raises(DomainViolation):
        peak_select(indef21.cone(), indef21, e)


# -- degenerate rays -----------------------------------------------------


def test_degenerate_ray_collapses_second_component():
    mesh = build_structured_mesh(8)
    prob = SystemProblem(mesh, [1.0, 4.0], [[0.0, 1.2], [1.2, 0.0]])
    assert not prob.admissible_range
    seed = nodal_interpolate(mesh, lambda x, y: x * y * (1 - x) * (1 - y))
    u = Field(mesh, np.repeat(seed.data, 2, axis=0))
    with pytest.raises(DegenerateRay) as err:
        peak_select(prob.cone(), prob, u)
    assert err.value.vanished == (1,)


# -- first-order conditions ----------------------------------------------


def test_nehari_residual_scripted_value(rng):
    mesh = build_structured_mesh(8)
    u = random_field(mesh, rng)
    a1 = float(u.data[0] @ (assembled(mesh) @ u.data[0]))
    scaled = u * (1.0 / np.sqrt(a1))     # now |grad u|^2 integrates to 1
    b1 = duffy_integrate_p1(mesh, scaled.vertex_values(), lambda s: s**4)
    prob = SystemProblem(mesh, [2.0 / b1], [[0.0]])
    r = nehari_residuals(prob, scaled)
    assert r[0] == pytest.approx(-1.0, rel=1e-10)


def assembled(mesh):
    from peakdescent.fem import assemble_stiffness

    return assemble_stiffness(mesh).matrix


def test_residuals_vanish_at_selection(indef21, sys_comp, rng):
    for prob in (indef21, sys_comp):
        for _ in range(5):
            u = random_field(prob.mesh, rng, k=prob.k)
            before = nehari_residuals(prob, u)
            sel = peak_select(prob.cone(), prob, u).point
            after = nehari_residuals(prob, sel)
            scale = h_norm(prob, sel) ** 2
            assert np.abs(after).max() <= 1e-8 * scale
            assert np.abs(before).max() >= 1e-2  # generic start is far off


def test_selection_idempotent(indef21, sys_comp, rng):
    for prob in (indef21, sys_comp):
        for _ in range(5):
            u = random_field(prob.mesh, rng, k=prob.k)
            v = peak_select(prob.cone(), prob, u).point
            vv = peak_select(prob.cone(), prob, v).point
            assert h_norm(prob, vv - v) <= 1e-7


def test_selection_constant_on_cone_interior(indef21, rng):
    cone = indef21.cone()
    u = random_field(indef21.mesh, rng)
    v_sel = peak_select(cone, indef21, u).point
    ray = project_ray(cone, u)
    e = Field(indef21.mesh, indef21.basis.vectors[:, 0])
    for c, t in ((0.8, 2.5), (-1.2, 0.4)):
        v = c * e + t * ray
        w_sel = peak_select(cone, indef21, v).point
        assert h_norm(indef21, w_sel - v_sel) <= 1e-7


def test_selection_constant_on_cone_interior_system(sys_comp, rng):
    cone = sys_comp.cone()
    u = random_field(sys_comp.mesh, rng, k=2)
    v_sel = peak_select(cone, sys_comp, u).point
    v = Field(u.mesh, u.data * np.array([[0.35], [2.1]]))
    w_sel = peak_select(cone, sys_comp, v).point
    assert h_norm(sys_comp, w_sel - v_sel) <= 1e-7


def test_gradient_orthogonal_to_cone_span_at_selection(indef21, rng):
    u = random_field(indef21.mesh, rng)
    sel = peak_select(indef21.cone(), indef21, u).point
    g, gnorm = indef21.riesz_gradient(sel)
    A = indef21.stiffness.matrix
    bound = 1e-6 * gnorm * h_norm(indef21, sel) + 1e-8
    for j in range(indef21.basis.dim):
        inner = g.data[0] @ (A @ indef21.basis.vectors[:, j])
        assert abs(inner) <= bound
    ray = project_ray(indef21.cone(), sel)
    assert abs(g.data[0] @ (A @ ray.data[0])) <= bound


def test_warm_start_reproduces_selection(sys_comp, rng):
    u = random_field(sys_comp.mesh, rng, k=2)
    cone = sys_comp.cone()
    first = peak_select(cone, sys_comp, u)
    again = peak_select(cone, sys_comp, u, warm_start=first.params)
    assert np.allclose(again.params, first.params, rtol=0, atol=1e-10)
    with pytest.raises(ValueError):
        peak_select(cone, sys_comp, u, warm_start=np.ones(5))


def test_uniqueness_probe_is_quiet(indef0, rng):
    import warnings

    u = random_field(indef0.mesh, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        peak_select(indef0.cone(), indef0, u, check_uniqueness=True)
