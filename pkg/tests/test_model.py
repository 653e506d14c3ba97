import math

import numpy as np
import pytest
from scipy import integrate

from bosefp import model as M
from bosefp.errors import ConfigurationError, DomainError

# Independent reference values, computed outside the package and frozen here:
#   m_c(1, 3)   = 2 sqrt(2) pi^(3/2) zeta(3/2)                 (scipy.special.zeta)
#   m(1; 1, 3)  = 2 sqrt(2) pi^(3/2) sum_k e^-k / k^(3/2)       (direct series, 200 terms)
#   m_c(2, 3)   = 4 pi int_0^inf (e^{r^2} - 1)^(-1/2) r^2 dr   (mpmath tanh-sinh, 30 digits)
MC_G1_D3 = 41.14389277361704
M_THETA1_G1_D3 = 6.747774454806228
MC_G2_D3 = 18.85271373847994


def test_params_validation():
    with pytest.raises(ConfigurationError):
        M.ModelParams(1.0, 2, 0.1)  # gamma d / 2 = 1
    with pytest.raises(ConfigurationError):
        M.ModelParams(0.5, 3, 0.1)
    with pytest.raises(ConfigurationError):
        M.ModelParams(1.0, 3, 1.5)
    p = M.ModelParams(1.0, 3, 0.1)
    assert p.c_gamma == pytest.approx(2.0)
    assert p.c_d == pytest.approx(4 * math.pi)
    assert p.profile_regime
    assert not M.ModelParams(1.0, 5, 0.1).profile_regime
    assert M.ModelParams(2.0, 3).c_gamma == pytest.approx(1.0)


def test_critical_mass_gamma1_two_paths():
    a = M.critical_mass(1.0, 3)
    b = M.steady_mass_series(0.0, 1.0, 3)
    assert a == pytest.approx(MC_G1_D3, rel=1e-9)
    assert b == pytest.approx(MC_G1_D3, rel=1e-12)


def test_critical_mass_gamma2():
    assert M.critical_mass(2.0, 3) == pytest.approx(MC_G2_D3, rel=1e-8)


def test_steady_mass_theta1():
    assert M.steady_mass(1.0) == pytest.approx(M_THETA1_G1_D3, rel=1e-9)
    assert M.steady_mass_series(1.0) == pytest.approx(M_THETA1_G1_D3, rel=1e-12)


def test_steady_mass_decreasing_in_theta():
    th = [0.0, 0.01, 0.1, 1.0, 3.0]
    ms = [M.steady_mass(t) for t in th]
    assert all(a > b for a, b in zip(ms, ms[1:]))


def test_steady_density_sentinel():
    assert M.steady_density(0.0, 0.0) is M.UNBOUNDED
    assert repr(M.UNBOUNDED) == "UNBOUNDED" and M.UNBOUNDED is type(M.UNBOUNDED)()
    arr = M.steady_density(0.0, np.array([0.0, 1.0]))
    assert np.isinf(arr[0]) and arr[1] == pytest.approx(1.0 / math.expm1(0.5))
    with pytest.raises(DomainError):
        M.steady_density(-1.0, 1.0)


def test_critical_profile_power_law_near_origin():
    r = np.array([1e-4, 1e-3, 1e-2])
    ratio = M.critical_profile(r) * r ** 2 / 2.0
    assert np.allclose(ratio, 1.0, rtol=1e-4)


def test_mobility_and_regularization():
    s = np.array([0.0, 0.5, 3.0, 50.0])
    assert np.allclose(M.mobility(s), s * (1 + s))
    # below the threshold 1/eps the regularised mobility is the original one
    assert np.allclose(M.regularized_mobility(s[:3], 0.1), M.mobility(s[:3]))
    # beyond 2/eps it is linear in s with slope 1 + eps^-1 * plateau
    eps = 0.1
    big = np.array([30.0, 60.0])
    h = M.regularized_mobility(big, eps)
    slope = 1.0 + M.cutoff(1.0).eta_plateau / eps
    assert (h[1] - h[0]) / 30.0 == pytest.approx(slope)
    with pytest.raises(DomainError):
        M.regularized_mobility(-1.0, 0.1)


def test_regularized_mobility_ordered_in_eps():
    s = np.linspace(0, 100, 1001)
    h1, h2 = M.regularized_mobility(s, 0.1), M.regularized_mobility(s, 0.05)
    assert np.all(h2 >= h1 - 1e-12)
    assert np.all(M.mobility(s) >= h2 - 1e-9)


def test_cutoff_shape():
    prof = M.cutoff(1.0)
    assert prof.eta(0.5) == pytest.approx(0.5)
    assert prof.eta(3.0) == pytest.approx(prof.eta_plateau)
    assert prof.eta_plateau == pytest.approx(1.5)
    s = np.linspace(1e-3, 4, 400)
    assert np.all(np.diff(prof.eta(s) / s) <= 1e-13)


def test_regularized_slope_derivative():
    eps, s = 0.05, np.linspace(0.1, 80, 50)
    h = 1e-5
    fd = (M.regularized_mobility(s + h, eps) - M.regularized_mobility(s - h, eps)) / (2 * h)
    assert np.allclose(M.regularized_mobility_slope(s, eps), fd, rtol=1e-6)


@pytest.mark.parametrize("gamma", [1.0, 2.0, 1.5])
def test_potential_closed_form_vs_quadrature(gamma):
    for s in (0.01, 0.7, 5.0):
        assert float(M.potential(s, gamma)) == pytest.approx(M.potential_quadrature(s, gamma), rel=1e-9)


def test_potential_gamma1_value():
    # Phi(2) = int_0^2 log(x / (1 + x)) dx, evaluated in closed form by hand
    assert float(M.potential(2.0)) == pytest.approx(-2 * math.log(1.5) - math.log(3.0), rel=1e-13)


@pytest.mark.parametrize("gamma", [1.0, 2.0])
def test_slope_inverse_roundtrip(gamma):
    s = np.logspace(-6, 6, 41)
    assert np.allclose(M.slope_inverse(M.potential_slope(s, gamma), gamma), s, rtol=1e-10)
    with pytest.raises(DomainError):
        M.slope_inverse(0.0)
    with pytest.raises(DomainError):
        M.potential_slope(0.0)


def test_potential_curvature_is_inverse_mobility():
    s = np.array([0.3, 2.0])
    h = 1e-6
    fd = (M.potential_slope(s + h) - M.potential_slope(s - h)) / (2 * h)
    assert np.allclose(fd, M.potential_curvature(s), rtol=1e-7)


def test_regularized_potential_matches_below_threshold():
    eps = 0.1
    s = np.array([0.5, 3.0, 9.0])
    assert np.allclose(M.regularized_potential_slope(s, eps), M.potential_slope(s), rtol=1e-12)


def test_regularized_potential_slope_quadrature():
    eps = 0.1
    for s in (15.0, 25.0, 60.0):
        assert float(M.regularized_potential_slope(s, eps)) == pytest.approx(
            M.regularized_potential_slope_quadrature(s, eps), rel=1e-7, abs=1e-10)


def test_minimizer_subcritical():
    m = 0.5 * MC_G1_D3
    mm = M.minimizer(m)
    assert mm.condensate == 0.0 and mm.theta > 0
    assert M.steady_mass(mm.theta) == pytest.approx(m, rel=1e-9)
    assert mm.regular_mass == pytest.approx(m, rel=1e-9)


def test_minimizer_supercritical():
    mm = M.minimizer(2 * MC_G1_D3)
    assert mm.theta == 0.0
    assert mm.condensate == pytest.approx(MC_G1_D3, rel=1e-9)
    with pytest.raises(DomainError):
        M.minimizer(-1.0)


def test_minimizer_energy_below_gaussian():
    m = 0.5 * MC_G1_D3
    H = M.minimizer_energy(m)
    # a Gaussian of the same mass has larger free energy
    g = M.gaussian_density(m, 1.0)
    Hg = M.free_energy_density(lambda r: float(g(r)))
    assert H < Hg


def test_gaussian_density_mass():
    g = M.gaussian_density(3.0, 0.7)
    val = 4 * math.pi * integrate.quad(lambda r: g(r) * r * r, 0, 20)[0]
    assert val == pytest.approx(3.0, rel=1e-10)


def test_critical_partial_mass_limit():
    assert float(M.critical_partial_mass(12.0)) * 4 * math.pi == pytest.approx(MC_G1_D3, rel=1e-9)
    # near the origin the partial mass is that of 2 r^-2: 2 r
    assert float(M.critical_partial_mass(1e-3)) == pytest.approx(2e-3, rel=1e-6)
