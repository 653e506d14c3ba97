import math

import numpy as np
import pytest

from bosefp import oracle as O
from bosefp.errors import ConfigurationError, DomainError, InputError


def _gaussian(s, amp=1.0, dim=3, R=10.0, h=0.005):
    return O.RadialFunction.sample(lambda r: amp * np.exp(-0.5 * r * r / (s * s)), O.uniform_nodes(R, h), dim)


def _gaussian_evolved(r, t, s, amp=1.0, dim=3):
    # e^{dt} (G_nu * f)(e^t v) for f = amp exp(-|w|^2 / (2 s^2))
    lam = math.expm1(2 * t)
    v = lam + s * s
    return math.exp(dim * t) * amp * (s * s / v) ** (dim / 2) * np.exp(-0.5 * math.exp(2 * t) * r * r / v)


def test_kernel_integrates_to_scaling():
    # the kernel integrates over w to e^{dt}
    t = 0.3
    w = np.linspace(-10, 10, 20001)
    vals = O.fp_kernel(t, 0.4, w)
    assert np.trapezoid(vals, w) == pytest.approx(math.exp(t), rel=1e-10)
    with pytest.raises(DomainError):
        O.fp_kernel(0.0, 0.1, 0.2)


@pytest.mark.parametrize("dim", [1, 3])
@pytest.mark.parametrize("t", [0.01, 0.2, 1.0])
def test_semigroup_matches_gaussian_closed_form(dim, t):
    f = _gaussian(0.6, dim=dim)
    r = np.linspace(0, 3, 31)
    out = O.apply_semigroup(f, t, r)
    ref = _gaussian_evolved(r, t, 0.6, dim=dim)
    # piecewise-linear data: O(h^2) error relative to the peak
    assert np.max(np.abs(out.values - ref)) <= 2e-5 * ref.max()


def test_semigroup_gradient_matches_closed_form():
    f, t = _gaussian(0.6), 0.1
    r = np.linspace(0.0, 2.5, 21)
    grad = O.apply_semigroup(f, t, r, derivative=1).values
    v = math.expm1(2 * t) + 0.36
    ref = -math.exp(2 * t) * r / v * _gaussian_evolved(r, t, 0.6)
    assert np.allclose(grad, ref, rtol=1e-4, atol=1e-6 * np.abs(ref).max())
    with pytest.raises(ConfigurationError):
        O.apply_semigroup(f, t, r, derivative=2)


def test_semigroup_preserves_mass():
    f = _gaussian(0.5)
    out = O.apply_semigroup(f, 0.5, O.uniform_nodes(10.0, 0.005))
    assert out.mass() == pytest.approx(f.mass(), rel=1e-6)


def test_monte_carlo_agrees_with_radial_reduction():
    f, t = _gaussian(0.6), 0.2
    radii = np.array([0.0, 0.5, 1.2])
    mc = O.monte_carlo_kernel_check(f, t, radii, samples=400_000, seed=3)
    rad = O.apply_semigroup(f, t, radii).values
    assert np.allclose(mc, rad, rtol=1e-2)


def test_monte_carlo_drift_matches_radial_drift():
    # drift row applied to theta = f gives the same as the brute-force expectation
    f, t = _gaussian(0.6), 0.2
    radii = np.array([0.3, 0.9])
    mc = O.monte_carlo_kernel_check(f, t, radii, samples=400_000, seed=5, kind="drift")
    sig = math.sqrt(math.expm1(2 * t))
    rows = O._conv_rows(f.r, math.exp(t) * radii, sig, 3, "drift")
    rad = math.exp(3 * t) * rows @ f.values
    assert np.allclose(mc, rad, rtol=3e-2, atol=1e-2 * np.abs(rad).max())


def test_radial_function_validation_and_norms():
    with pytest.raises(InputError):
        O.RadialFunction(np.array([0.1, 0.2]), np.array([1.0, 1.0]))
    with pytest.raises(ConfigurationError):
        O.RadialFunction(np.array([0.0, 1.0]), np.array([1.0, 1.0]), dim=2)
    f = _gaussian(1.0)
    assert f.norm(math.inf) == 1.0
    assert f.mass() == pytest.approx((2 * math.pi) ** 1.5, rel=1e-5)
    assert f.norm(2.0) == pytest.approx(math.pi ** 0.75, rel=1e-5)


def test_duhamel_linear_limit_is_semigroup():
    f_in = lambda r: 0.5 * np.exp(-r * r / 0.98)
    res = O.duhamel_solve(f_in, 0.05, 0.5, nonlinear_scale=0.0, steps=4)
    ref = O.apply_semigroup(O.RadialFunction.sample(f_in, O.uniform_nodes(8.0, 0.0025)), 0.05, res.r)
    assert res.iterations <= 2
    assert np.allclose(res.final.values, ref.values, atol=1e-10)


def test_duhamel_zero_data_stays_zero():
    res = O.duhamel_solve(lambda r: np.zeros_like(r), 0.05, 0.5, steps=4)
    assert np.all(res.values == 0.0)


def test_duhamel_conserves_mass_and_contracts():
    f_in = lambda r: 0.5 * np.exp(-r * r / 0.98)
    res = O.duhamel_solve(f_in, 0.05, 0.5, steps=6)
    m0 = O.RadialFunction.sample(f_in, res.r).mass()
    assert res.final.mass() == pytest.approx(m0, rel=1e-5)
    assert res.contraction < 0.5
    with pytest.raises(DomainError):
        O.duhamel_solve(f_in, 0.05, 0.0)
    with pytest.raises(InputError):
        O.duhamel_solve(lambda r: -np.ones_like(r), 0.05, 0.5)


def test_theta_eps():
    s = np.array([0.1, 0.5])
    assert np.allclose(O.theta_eps(s, 0.1), s * s)
    assert np.allclose(O.theta_eps(s, 0.0), s * s)
    assert np.all(np.isfinite(O.theta_eps(np.array([1e6]), 0.1)))


def test_smoothing_exponents():
    assert O.smoothing_exponent(1.0, math.inf, 0) == -1.5
    assert O.smoothing_exponent(1.0, math.inf, 1) == -2.0
    assert O.smoothing_exponent(2.0, 2.0, 1) == -0.5
    with pytest.raises(ConfigurationError):
        O.extremal_data(2.0, math.inf, 0)


def test_smoothing_check_holds_on_gaussian():
    f = _gaussian(0.3)
    for t in (2.0 ** -6, 2.0 ** -3):
        res = O.smoothing_check(f, t, 1.0, math.inf, 0)
        assert res.ratio <= 1.0 + 1e-9
    with pytest.raises(DomainError):
        O.smoothing_check(f, 2.0, 1.0, 2.0, 0)


@pytest.mark.parametrize("q", [1.0, 2.0, math.inf])
def test_appendix_bound(q):
    for t in (0.01, 0.3):
        out = O.appendix_bound_check(0.7, t, q)
        # Young's inequality is sharp for q = 1 and a positive kernel
        assert out["ratio"] <= 1.0 + 1e-12
