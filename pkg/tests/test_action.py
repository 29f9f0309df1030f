import numpy as np
import pytest

from nlsground import (ActionParams, DomainSpec, Field, InvalidSpec,
                       LambdaBelowThreshold, NonpositiveQuotient,
                       SolverOptions, ZeroField, action, build_grid,
                       dirichlet_eigenpairs, energy, ground_state, kappa,
                       nehari_project, nehari_scale, norms, pde_residual,
                       ray_action)

from conftest import tridiag_eigenvalue


def _phi1(grid):
    return dirichlet_eigenpairs(grid, 1)[0].vector


def test_action_energy_zero_field(grid255):
    zero = Field(grid255, np.zeros(grid255.size))
    assert action(zero, ActionParams(4.0, 3.0)) == 0.0
    assert energy(zero, 4.0) == 0.0
    assert pde_residual(zero, ActionParams(4.0, 3.0)) == 0.0


def test_params_validation():
    with pytest.raises(InvalidSpec):
        ActionParams(2.0, 1.0)
    with pytest.raises(InvalidSpec):
        ActionParams(4.0, np.inf)


def test_energy_action_identity(grid255):
    # E = J - (lambda/2) ||u||_2^2 for every field, algebraically
    rng = np.random.default_rng(5)
    for lam in (-3.0, 0.0, 7.5):
        vals = rng.standard_normal(grid255.size)
        u = Field(grid255, vals)
        params = ActionParams(4.0, lam)
        e = energy(u, 4.0)
        j = action(u, params)
        l2 = grid255.l2_sq(vals)
        assert e == pytest.approx(j - 0.5 * lam * l2, rel=1e-12, abs=1e-12)


def test_first_mode_projection_value(grid511):
    # p=4, lambda=0: projecting sqrt(2) sin(pi x) lands exactly at
    # (lambda_1^h)^2 / 6 because the discrete trig sums are exact
    # (continuum limit pi^4/6)
    p = 4.0
    params = ActionParams(p, 0.0)
    phi = grid511.sample(lambda x: np.sqrt(2.0) * np.sin(np.pi * x))
    lam1 = tridiag_eigenvalue(1, grid511.n)
    scale = nehari_scale(phi, params)
    assert scale == pytest.approx(np.sqrt(lam1 / 1.5), rel=5e-12)
    assert scale == pytest.approx(np.sqrt(2.0 * np.pi**2 / 3.0), rel=1e-4)
    projected = nehari_project(phi, params)
    val = action(projected, params)
    assert val == pytest.approx(lam1**2 / 6.0, rel=5e-12)
    assert val == pytest.approx(np.pi**4 / 6.0, rel=1e-4)
    assert ray_action(phi, params) == pytest.approx(val, rel=1e-12)


def test_projection_identity_case(grid255):
    params = ActionParams(6.0, 2.0)
    u = grid255.sample(lambda x: np.sin(np.pi * x) * (1.0 + 0.3 * x))
    w = nehari_project(u, params)
    assert nehari_scale(w, params) == pytest.approx(1.0, rel=1e-12)
    l2, lp, gr = norms(w, 6.0)
    assert abs(gr + 2.0 * l2 - lp) <= 1e-10 * lp


def test_projection_errors(grid255):
    phi = _phi1(grid255)
    lam1 = dirichlet_eigenpairs(grid255, 1)[0].value
    with pytest.raises(NonpositiveQuotient):
        nehari_project(phi, ActionParams(4.0, -2.0 * lam1))
    with pytest.raises(ZeroField):
        nehari_project(Field(grid255, np.zeros(grid255.size)), ActionParams(4.0, 0.0))


def test_ground_state_beats_first_mode(grid511):
    # the first eigenmode is admissible but not optimal
    st = ground_state(grid511, ActionParams(4.0, 0.0))
    lam1 = tridiag_eigenvalue(1, grid511.n)
    assert st.action_value < lam1**2 / 6.0


def test_ground_state_contracts(grid511):
    p, lam = 6.0, 5.0
    st = ground_state(grid511, ActionParams(p, lam))
    l2, lp, gr = norms(st.u, p)
    assert abs(gr + lam * l2 - lp) <= 1e-10 * lp
    assert st.action_value == pytest.approx(kappa(p) * lp, rel=1e-12)
    assert st.energy == pytest.approx(st.action_value - 0.5 * lam * st.mass,
                                      rel=1e-12)
    assert st.residual <= 1e-8
    assert pde_residual(st.u, ActionParams(p, lam)) <= 1e-8
    assert st.node_count == 0
    assert np.all(st.u.values >= 0.0)


def test_ground_state_init_invariance(grid255):
    params = ActionParams(4.0, 3.0)
    base = ground_state(grid255, params)
    scaled_init = Field(grid255, 7.25 * _phi1(grid255).values)
    st2 = ground_state(grid255, params, init_field=scaled_init)
    assert st2.action_value == pytest.approx(base.action_value, rel=1e-9)
    st3 = ground_state(grid255, params, SolverOptions(init="random", seed=4))
    assert st3.action_value == pytest.approx(base.action_value, rel=1e-8)


def test_threshold_refusal(grid255):
    lam1 = dirichlet_eigenpairs(grid255, 1)[0].value
    for lam in (-lam1, -lam1 + 1e-9, -2 * lam1):
        with pytest.raises(LambdaBelowThreshold):
            ground_state(grid255, ActionParams(4.0, lam))


def test_level_vanishes_at_threshold(grid511):
    # J(lambda) decreases to zero as lambda comes down to -lambda_1
    lam1 = dirichlet_eigenpairs(grid511, 1)[0].value
    values = [ground_state(grid511, ActionParams(4.0, -lam1 + d)).action_value
              for d in (4.0, 2.0, 1.0, 0.5)]
    assert all(b < a for a, b in zip(values, values[1:]))
    # quadratic decay for p=4: J ~ delta^{p/(p-2)} = delta^2
    assert values[-1] <= values[0] * (0.5 / 4.0) ** 2 * 1.5


def test_soliton_limit_large_interval():
    # closed-form bound state at unit frequency, p=6:
    #   u(x) = 3^(1/4) sech(2x)^(1/2),
    #   mass = sqrt(3) pi / 2,  level = sqrt(3) pi / 4 (quadrature oracle)
    grid = build_grid(DomainSpec.interval(-10.0, 10.0), 2047)
    st = ground_state(grid, ActionParams(6.0, 1.0), SolverOptions(tol=1e-9))
    assert st.action_value == pytest.approx(np.sqrt(3.0) * np.pi / 4.0, rel=1e-4)
    assert st.mass == pytest.approx(np.sqrt(3.0) * np.pi / 2.0, rel=1e-4)


def test_2d_ground_state_and_p_cap(unit_square):
    grid = build_grid(unit_square, 31)
    p, lam = 4.0, 5.0
    st = ground_state(grid, ActionParams(p, lam), SolverOptions(tol=1e-9))
    l2, lp, gr = norms(st.u, p)
    assert abs(gr + lam * l2 - lp) <= 1e-10 * lp
    assert st.node_count == 0
    with pytest.raises(InvalidSpec):
        ground_state(grid, ActionParams(11.0, 5.0))


def test_unscaled_mode_is_not_a_solution(grid255):
    # the linear mode solves only the linear problem; without the right
    # amplitude the nonlinear residual stays bounded away from zero
    phi = _phi1(grid255)
    lam1 = dirichlet_eigenpairs(grid255, 1)[0].value
    res = pde_residual(phi, ActionParams(4.0, -lam1))
    lp = grid255.lp_p(phi.values, 4.0)
    assert res > 0.1 * lp


def test_unreachable_tolerance_is_reported(grid511):
    # storage rounding bounds the attainable residual; an impossible
    # tolerance must surface as a failure, not a silent loose answer
    with pytest.raises(Exception) as err:
        ground_state(grid511, ActionParams(4.0, 10.0), SolverOptions(tol=1e-16))
    assert "residual" in str(err.value)
