import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlsground import (DomainSpec, Field, GridMismatch, InvalidSpec,
                       apply_laplacian, build_grid, load_field, node_count,
                       norms, save_field, split)

from conftest import tridiag_eigenvalue


def test_unit_interval_n3():
    grid = build_grid(DomainSpec.interval(0.0, 1.0), 3)
    assert grid.h == (0.25,)
    assert np.allclose(grid.coords[0], [0.25, 0.5, 0.75])
    assert grid.weight == 0.25


def test_unit_square_n4():
    grid = build_grid(DomainSpec.rectangle(0.0, 1.0, 0.0, 1.0), 4)
    assert grid.size == 16
    assert grid.weight == pytest.approx(0.04, abs=1e-15)


def test_degenerate_bounds_rejected():
    with pytest.raises(InvalidSpec):
        DomainSpec.interval(1.0, 1.0)
    with pytest.raises(InvalidSpec):
        DomainSpec.interval(0.0, np.inf)
    with pytest.raises(InvalidSpec):
        build_grid(DomainSpec.interval(0.0, 1.0), 2)


def test_star_center_must_be_interior():
    with pytest.raises(InvalidSpec):
        DomainSpec.interval(0.0, 1.0, star_center=1.0)
    spec = DomainSpec.rectangle(0.0, 1.0, 0.0, 2.0)
    assert spec.star_center == (0.5, 1.0)


def test_laplacian_discrete_eigenrelation(grid511):
    # sampled sine modes are exact eigenvectors of the stencil
    for j in (1, 2, 3):
        u = grid511.sample(lambda x, j=j: np.sin(j * np.pi * x))
        exact = tridiag_eigenvalue(j, grid511.n)
        out = apply_laplacian(grid511, u)
        assert np.max(np.abs(out.values - exact * u.values)) <= 1e-10 * exact


def test_laplacian_zero_field(grid255):
    zero = Field(grid255, np.zeros(grid255.size))
    assert np.all(apply_laplacian(grid255, zero).values == 0.0)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_laplacian_self_adjoint(seed):
    grid = build_grid(DomainSpec.interval(-1.0, 2.0), 100)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(grid.size)
    v = rng.standard_normal(grid.size)
    au_v = grid.weight * (grid.laplacian(u) @ v)
    u_av = grid.weight * (u @ grid.laplacian(v))
    scale = grid.l2_norm(u) * grid.l2_norm(v)
    assert abs(au_v - u_av) <= 1e-12 * scale


def test_laplacian_self_adjoint_2d():
    grid = build_grid(DomainSpec.rectangle(0.0, 1.0, 0.0, 2.0), 24)
    rng = np.random.default_rng(7)
    u = rng.standard_normal(grid.size)
    v = rng.standard_normal(grid.size)
    gap = abs(grid.weight * (grid.laplacian(u) @ v)
              - grid.weight * (u @ grid.laplacian(v)))
    assert gap <= 1e-12 * grid.l2_norm(u) * grid.l2_norm(v)


def test_norms_of_first_sine_mode(grid511):
    # sqrt(2) sin(pi x): the discrete sums of sin^2 and sin^4 are exact,
    # so l2_sq = 1 and the quartic norm is 3/2 on every uniform grid
    phi = grid511.sample(lambda x: np.sqrt(2.0) * np.sin(np.pi * x))
    l2_sq, lp_p, grad_sq = norms(phi, 4.0)
    assert l2_sq == pytest.approx(1.0, rel=1e-13)
    assert lp_p == pytest.approx(1.5, rel=1e-13)
    lam1 = tridiag_eigenvalue(1, grid511.n)
    assert grad_sq == pytest.approx(lam1, rel=5e-12)
    assert grad_sq == pytest.approx(np.pi**2, rel=1e-4)


def test_norms_zero_and_validation(grid255):
    zero = Field(grid255, np.zeros(grid255.size))
    assert norms(zero, 4.0) == (0.0, 0.0, 0.0)
    with pytest.raises(InvalidSpec):
        norms(zero, 2.0)


@given(c=st.floats(min_value=-50.0, max_value=50.0).filter(lambda v: abs(v) > 1e-3),
       seed=st.integers(0, 2**16))
@settings(max_examples=20, deadline=None)
def test_norms_homogeneity(c, seed, grid255):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid255.size)
    p = 4.0
    l2, lp, gr = norms(Field(grid255, vals), p)
    l2c, lpc, grc = norms(Field(grid255, c * vals), p)
    assert l2c == pytest.approx(c**2 * l2, rel=1e-12)
    assert lpc == pytest.approx(abs(c)**p * lp, rel=1e-12)
    assert grc == pytest.approx(c**2 * gr, rel=1e-12)


def test_quadrature_convergence_order(unit_interval):
    # smooth polynomial with known integrals; dyadic refinement triple
    exact = {"l2": 1.0 / 30.0, "lp": 1.0 / 630.0, "grad": 1.0 / 3.0}
    errors = {"l2": [], "lp": [], "grad": []}
    for n in (63, 127, 255):
        grid = build_grid(unit_interval, n)
        u = grid.sample(lambda x: x * (1.0 - x))
        l2, lp, gr = norms(u, 4.0)
        errors["l2"].append(abs(l2 - exact["l2"]))
        errors["lp"].append(abs(lp - exact["lp"]))
        errors["grad"].append(abs(gr - exact["grad"]))
    for key, errs in errors.items():
        order1 = np.log2(errs[0] / errs[1])
        order2 = np.log2(errs[1] / errs[2])
        assert min(order1, order2) >= 1.9, (key, errs)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_split_reassembles_bitwise(seed, grid255):
    rng = np.random.default_rng(seed)
    u = Field(grid255, rng.standard_normal(grid255.size))
    plus, minus = split(u)
    assert np.all(plus.values >= 0.0)
    assert np.all(minus.values <= 0.0)
    assert np.array_equal(plus.values + minus.values, u.values)


def test_split_sign_structure(grid511):
    u = grid511.sample(lambda x: np.sin(2.0 * np.pi * x))
    plus, minus = split(u)
    x = grid511.coords[0]
    assert np.all(plus.values[x > 0.5 + grid511.h[0]] == 0.0)
    assert np.all(minus.values[x < 0.5 - grid511.h[0]] == 0.0)
    nonneg = Field(grid511, np.abs(u.values))
    _, neg = split(nonneg)
    assert np.all(neg.values == 0.0)


def test_node_count_1d(grid511):
    assert node_count(grid511.sample(lambda x: np.sin(2 * np.pi * x))) == 1
    assert node_count(grid511.sample(lambda x: np.sin(3 * np.pi * x))) == 2
    assert node_count(grid511.sample(lambda x: np.abs(np.sin(np.pi * x)))) == 0
    assert node_count(Field(grid511, np.zeros(grid511.size))) == 0


def test_node_count_2d(unit_square):
    grid = build_grid(unit_square, 31)
    u = grid.sample(lambda x, y: np.sin(2 * np.pi * x) * np.sin(np.pi * y))
    assert node_count(u) == 1
    u4 = grid.sample(lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
    assert node_count(u4) == 3


def test_grid_mismatch_guard(grid255, grid511):
    u = Field(grid511, np.ones(grid511.size))
    with pytest.raises(GridMismatch):
        apply_laplacian(grid255, u)
    with pytest.raises(GridMismatch):
        Field(grid255, np.ones(grid511.size))


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_field_dump_roundtrip_bit_exact(seed, tmp_path_factory):
    rng = np.random.default_rng(seed)
    grid = build_grid(DomainSpec.interval(-2.0, 3.0, star_center=0.25), 17)
    vals = rng.standard_normal(17) * 10.0 ** rng.integers(-12, 12, size=17)
    u = Field(grid, vals)
    path = tmp_path_factory.mktemp("dumps") / f"f{seed}.field"
    save_field(u, path)
    back = load_field(path)
    assert back.grid == grid
    assert np.array_equal(back.values, u.values)
    assert back.grid.spec.star_center == grid.spec.star_center


def test_field_dump_roundtrip_2d(tmp_path):
    grid = build_grid(DomainSpec.rectangle(0.0, 1.0, -1.0, 1.5), 9)
    u = grid.sample(lambda x, y: np.sin(np.pi * x) * y)
    save_field(u, tmp_path / "g.field")
    back = load_field(tmp_path / "g.field")
    assert back.grid == grid
    assert np.array_equal(back.values, u.values)


def test_discrete_poincare(grid255):
    # the Dirichlet energy dominates lambda_1^h times the squared norm
    from nlsground import dirichlet_eigenpairs
    lam1 = dirichlet_eigenpairs(grid255, 1)[0].value
    rng = np.random.default_rng(3)
    for _ in range(5):
        u = Field(grid255, rng.standard_normal(grid255.size))
        l2, _, gr = norms(u, 4.0)
        assert gr >= lam1 * l2 * (1.0 - 1e-12)
