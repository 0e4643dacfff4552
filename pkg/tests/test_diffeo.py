import numpy as np
import pytest
from conftest import fd_grad, rel_err
from hypothesis import given
from hypothesis import strategies as st

from pfm.diffeo import DiffeoModel, init_diffeo, ode_solve, phi, phi_inverse, project_submanifold
from pfm.numerics import autodiff as ad
from pfm.numerics import init_mlp, make_rng


def random_model(seed, d=3, hidden=16, n_layers=3, scale=1.0, d_prime=1, n_steps=10):
    rng = make_rng(seed)
    field = init_mlp(d, d, hidden, n_layers, rng, time_embed=True)
    field = field.with_arrays([a * scale for a in field.arrays()])
    return DiffeoModel(field, rng.normal(size=d), d_prime, n_steps)


def exp_error(n):
    z = ode_solve(lambda z, t: z, np.array([[1.0]]), n_steps=n)
    return abs(z[0, 0] - np.e)


def test_rk4_exponential():
    assert exp_error(10) < 1e-5


def test_rk4_order_four():
    ratio = exp_error(10) / exp_error(20)
    assert 14.0 <= ratio <= 18.0


def test_zero_field_is_identity_both_ways(rng):
    z0 = rng.normal(size=(5, 2))
    zero = lambda z, t: np.zeros_like(z)  # noqa: E731
    np.testing.assert_array_equal(ode_solve(zero, z0), z0)
    np.testing.assert_array_equal(ode_solve(zero, z0, "backward"), z0)


def test_constant_field_round_trip(rng):
    c = np.array([0.5, -2.0])
    z0 = rng.normal(size=(4, 2))
    f = lambda z, t: np.broadcast_to(c, z.shape)  # noqa: E731
    fwd = ode_solve(f, z0, n_steps=7)
    np.testing.assert_allclose(fwd, z0 + c, atol=1e-14)
    np.testing.assert_allclose(ode_solve(f, fwd, "backward", n_steps=7), z0, atol=1e-14)


def test_single_state_promoted():
    out = ode_solve(lambda z, t: z, np.array([1.0]), n_steps=10)
    assert out.shape == (1,)


def test_non_finite_state_raises():
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(ad.NumericError) as info:
        ode_solve(lambda z, t: z * 1e200, np.array([[1e200]]), n_steps=4)
    assert "RK4 step 0" in str(info.value)


def test_init_diffeo_is_translation(rng):
    x = rng.normal(size=(20, 3))
    m = init_diffeo(x, 1, make_rng(0), hidden=8, n_layers=3)
    np.testing.assert_allclose(m.mu, x.mean(axis=0))
    np.testing.assert_array_equal(phi(m, x), x - m.mu)
    np.testing.assert_allclose(phi_inverse(m, x - m.mu), x, rtol=0, atol=1e-15)


def test_zero_field_mu_zero():
    m = init_diffeo(np.zeros((2, 2)), 1, make_rng(0), hidden=4, n_layers=2)
    x = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(phi(m, x), x)


@given(st.integers(0, 2**31 - 1))
def test_round_trip_fine_steps(seed):
    m = random_model(seed, scale=0.5, n_steps=100)
    x = make_rng(seed, 1).uniform(-2, 2, size=(100, 3))
    back = phi_inverse(m, phi(m, x))
    assert np.max(np.abs(back - x)) < 1e-5


def test_injective_on_distinct_points(rng):
    m = random_model(5)
    x = rng.normal(size=(50, 3))
    z = phi(m, x)
    d = np.linalg.norm(z[:, None] - z[None], axis=2) + np.eye(50)
    assert d.min() > 0


def test_dimension_mismatch(rng):
    m = random_model(0)
    with pytest.raises(ad.ShapeError):
        phi(m, rng.normal(size=(2, 4)))


def test_invalid_model_fields():
    field = init_mlp(2, 2, 4, 2, make_rng(0), time_embed=True)
    with pytest.raises(ValueError):
        DiffeoModel(field, np.zeros(2), d_prime=3)
    with pytest.raises(NotImplementedError):
        DiffeoModel(field, np.zeros(2), 1, chart="sphere")


def test_project_submanifold():
    np.testing.assert_array_equal(project_submanifold(np.array([2.0, 5.0, 7.0]), 1), [2.0, 0.0, 0.0])
    z = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(project_submanifold(z, 3), z)
    p = project_submanifold(z, 2)
    np.testing.assert_array_equal(project_submanifold(p, 2), p)


def test_gradient_through_phi(rng):
    m = random_model(9, d=2, hidden=6, n_layers=2, n_steps=5)
    x = rng.normal(size=(4, 2))
    w = rng.normal(size=(4, 2))

    def loss(arrs):
        z = ode_solve(m.field.with_arrays(arrs), x - m.mu, n_steps=5)
        return ad.total(ad.mul(ad.square(z), w))

    g = ad.grad(loss, m.field.arrays())
    num = fd_grad(lambda a: float(ad.value(loss(a))), m.field.arrays())
    assert rel_err(g, num) < 1e-4
