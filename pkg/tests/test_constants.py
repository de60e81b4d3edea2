import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from obslab import constants
from obslab.constants import (
    FitError,
    IntervalSineBasis,
    SpectralWindowError,
    SphereCapBasis,
    chain_check,
    eig_curve,
    fit_k_heat,
    fit_k_sigma,
    heat_curve,
    heat_from_wave_bound,
    kernel_bound_eval,
    lambda_mu_check,
    lambda_mu_converse,
    loc_eig_log,
    loc_heat,
    loc_sigma,
    loc_sigma_log,
    miller_cstar,
    sigma_curve,
    small_ball_scaling,
    transmutation_integral,
)


def brute_force_loc(basis, lam, omega, rng, n_random=100000):
    """Random-search + local-refinement oracle for the Rayleigh infimum."""
    idx = np.nonzero(basis.lambdas <= lam)[0]
    G = basis.gram(omega, idx)
    cs = rng.standard_normal((n_random, len(idx)))
    cs /= np.linalg.norm(cs, axis=1, keepdims=True)
    vals = np.einsum("ij,jk,ik->i", cs, G, cs)
    best = cs[np.argmin(vals)]
    res = minimize(lambda c: (c @ G @ c) / (c @ c), best, method="BFGS",
                   options={"gtol": 1e-14, "maxiter": 2000})
    return math.sqrt(max(res.fun, 0.0))


# ---------------------------------------------------------------------------
# loc_sigma


def test_loc_sigma_full_domain_is_one():
    b = IntervalSineBasis(12, omega=(0.0, 1.0))
    for lam in (15.0, 200.0, 1e4):
        assert loc_sigma(b, lam) == pytest.approx(1.0, abs=1e-10)


def test_loc_sigma_single_mode_window():
    b = IntervalSineBasis(8, omega=(0.0, 0.4))
    lam1 = float(b.lambdas[0])
    assert loc_sigma(b, lam1 + 0.1) == pytest.approx(
        math.exp(loc_eig_log(b, 0)), rel=1e-12)


def test_loc_sigma_brute_force_oracle(rng):
    b = IntervalSineBasis(8, omega=(0.0, 0.4))
    for j in (3, 5, 6):
        lam = (j * math.pi) ** 2 + 1.0
        exact = loc_sigma(b, lam)
        oracle = brute_force_loc(b, lam, (0.0, 0.4), rng)
        assert oracle >= exact - 1e-9
        assert abs(oracle - exact) <= 1e-6


def test_loc_sigma_nonincreasing_in_lambda():
    b = IntervalSineBasis(14, omega=(0.0, 0.35))
    vals = [loc_sigma_log(b, float(l)) for l in b.lambdas]
    assert all(y <= x + 1e-10 for x, y in zip(vals, vals[1:]))


def test_loc_sigma_monotone_in_omega():
    b = IntervalSineBasis(10)
    lam = float(b.lambdas[5]) + 1.0
    small = loc_sigma(b, lam, omega=(0.0, 0.25))
    big = loc_sigma(b, lam, omega=(0.0, 0.40))
    assert big >= small - 1e-12


def test_loc_sigma_empty_window():
    b = IntervalSineBasis(5, omega=(0.0, 0.5))
    with pytest.raises(SpectralWindowError):
        loc_sigma(b, 1.0)


def test_interval_full_gram_identity():
    b = IntervalSineBasis(15)
    G = b.full_gram()
    assert np.max(np.abs(G - np.eye(15))) < 1e-8


def test_extended_precision_path_smooth():
    # deep truncation on a small interval: double precision would bottom out
    b = IntervalSineBasis(16, omega=(0.45, 0.55))
    val = loc_sigma_log(b, float(b.lambdas[-1]) + 1.0)
    assert val < -20.0  # far below double-eig floors, still finite and negative
    assert math.isfinite(val)


# ---------------------------------------------------------------------------
# loc_heat


def test_loc_heat_single_mode_closed_form():
    b = IntervalSineBasis(1, omega=(0.0, 1.0))
    lam = float(b.lambdas[0])
    T = 1.2
    exact = math.sqrt((math.exp(2 * lam * T) - 1.0) / (2.0 * lam))
    assert loc_heat(b, T) == pytest.approx(exact, rel=1e-12)


def test_loc_heat_time_quadrature_oracle():
    # closed-form time integral vs dense trapezoid on a 3x3 truncation
    b = IntervalSineBasis(3, omega=(0.0, 0.6))
    T = 0.002
    idx = np.arange(3)
    G = b.gram((0.0, 0.6), idx)
    lams = b.lambdas
    ts = np.linspace(0.0, T, 401)
    B_quad = np.empty((3, 3))
    B_closed = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            s = lams[i] + lams[j]
            B_quad[i, j] = G[i, j] * np.trapezoid(np.exp(-s * ts), ts)
            B_closed[i, j] = G[i, j] * (1.0 - math.exp(-s * T)) / s
    assert np.max(np.abs(B_quad - B_closed)) <= 1e-8


def test_loc_heat_truncation_guard():
    b = IntervalSineBasis(2, omega=(0.0, 0.5))
    with pytest.raises(SpectralWindowError):
        loc_heat(b, 0.01)  # lambda_max * T < 10


def test_loc_heat_truncation_sweep():
    # enlarging the truncation changes Loc_heat only at exp(-trunc) level
    b = IntervalSineBasis(30, omega=(0.0, 0.3))
    T = 0.06
    v1 = constants.loc_heat_log(b, T, trunc=25.0)
    v2 = constants.loc_heat_log(b, T, trunc=40.0)
    assert v2 <= v1 + 1e-12  # larger space, smaller infimum
    assert abs(v2 - v1) < 1e-3


# ---------------------------------------------------------------------------
# curves, fits, chain


def test_fit_k_sigma_interval_lower_bound():
    a = 0.3
    b = IntervalSineBasis(20, omega=(0.0, a))
    fit = fit_k_sigma(sigma_curve(b))
    assert fit.constant >= 0.95 * (1.0 - a) / 2.0


def test_fit_k_sigma_full_domain_zero():
    b = IntervalSineBasis(12, omega=(0.0, 1.0))
    fit = fit_k_sigma(sigma_curve(b))
    assert abs(fit.constant) < 1e-8


def test_fit_k_heat_interval_lower_bound():
    a = 0.3
    b = IntervalSineBasis(30, omega=(0.0, a))
    curve = heat_curve(b, [0.04, 0.05, 0.06, 0.07, 0.085, 0.1, 0.12, 0.16])
    fit = fit_k_heat(curve)
    assert fit.constant >= 0.9 * (1.0 - a) ** 2 / 4.0


def test_chain_on_interval():
    a = 0.3
    b = IntervalSineBasis(30, omega=(0.0, a))
    fs = fit_k_sigma(sigma_curve(b))
    fe = fit_k_sigma(eig_curve(b))
    fh = fit_k_heat(heat_curve(b, [0.04, 0.05, 0.06, 0.07, 0.085, 0.1, 0.12, 0.16]))
    assert chain_check(fe, fh, fs).ok


def test_sphere_cap_constants(sphere_family):
    from obslab import agmon

    r = 0.6
    sb = SphereCapBasis(sphere_family, omega=r)
    fs = fit_k_sigma(sigma_curve(sb))
    # spectral constant dominates the closed-form distance lower bound
    assert fs.constant >= agmon.agmon_closed_sphere(r) - 0.02
    fe = fit_k_sigma(eig_curve(sb))
    fh = fit_k_heat(heat_curve(sb, [0.02, 0.025, 0.03, 0.04, 0.05, 0.065, 0.08, 0.1]))
    assert chain_check(fe, fh, fs).ok


def test_fit_preconditions():
    b = IntervalSineBasis(4, omega=(0.0, 0.5))
    curve = sigma_curve(b)
    with pytest.raises(FitError):
        fit_k_sigma(curve)  # only 4 points


def test_curve_csv_export(tmp_path):
    b = IntervalSineBasis(8, omega=(0.0, 0.4))
    curve = sigma_curve(b)
    path = tmp_path / "curve.csv"
    curve.export_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "lambda,loc,log10_loc"
    assert len(lines) == 9


# ---------------------------------------------------------------------------
# constant algebra


def test_miller_cstar_values():
    assert miller_cstar(0.0, 5.0) == pytest.approx(5.0, abs=1e-12)
    assert miller_cstar(1.0, 0.0) == pytest.approx(4.0, abs=1e-12)
    assert miller_cstar(1.0, 1.0) == pytest.approx(7.0 + 4.0 * math.sqrt(3.0), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(1e-6, 1e3), b=st.floats(1e-6, 1e3))
def test_miller_cstar_identity(a, b):
    value = miller_cstar(a, b)  # raises if the two closed forms disagree
    assert value >= b


def test_heat_from_wave_bound():
    assert heat_from_wave_bound(1.0, 0.0, 2.0, 3.0) == pytest.approx(2.0)
    assert heat_from_wave_bound(1.0, 1.0, 1.0, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        heat_from_wave_bound(-1.0, 1.0, 1.0, 1.0)


def test_lambda_mu_check_huge_X():
    assert lambda_mu_check(2.0, 1e9, 0.5, 1.0, 1.0)


def test_lambda_mu_check_property(rng):
    # X built as the sup (over a dense grid through the branch points) of the
    # smallest admissible value: the conclusion must then hold
    for _ in range(300):
        Lam = float(rng.uniform(0.05, 5.0))
        K = float(rng.uniform(0.0, 1.0))
        mu0 = float(rng.uniform(0.0, 5.0))
        alpha = float(rng.uniform(0.01, 3.0))
        mus = np.concatenate([
            np.linspace(mu0 + 1e-9, mu0 + 20.0, 400),
            [max(Lam + alpha, mu0 + 1e-9), max(mu0, 1e-9) + 1e-12],
        ])
        X = float(np.max((1.0 / Lam - 1.0 / mus) * np.exp(-K * mus)))
        X = max(X, 0.0)
        assert lambda_mu_check(Lam, X, K, mu0, alpha)


@settings(max_examples=100, deadline=None)
@given(Lam=st.floats(1.0, 50.0), K=st.floats(0.0, 2.0))
def test_lambda_mu_converse(Lam, K):
    F = lambda mu: math.exp(K * mu)
    X = 1.0 / F(Lam)
    mus = np.geomspace(1e-3, 100.0, 200)
    assert lambda_mu_converse(Lam, X, F, mus)


def test_transmutation_calibration_and_scaling():
    base = transmutation_integral(1.0, 1.0)
    assert base.ratio == pytest.approx(1.0, abs=1e-9)  # calibrated here
    r4 = transmutation_integral(1.0, 4.0).ratio
    r16 = transmutation_integral(1.0, 16.0).ratio
    assert 0.5 <= r16 / r4 <= 2.0
    for x in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0):
        tb = transmutation_integral(1.0, x)
        assert tb.log_value >= tb.log_lower_bound - 1e-12


def test_transmutation_scale_invariance():
    a = transmutation_integral(1.0, 8.0)
    b = transmutation_integral(0.5, 4.0)  # same alpha/T
    assert b.ratio == pytest.approx(a.ratio, rel=1e-9)


def test_transmutation_log_domain_underflow():
    tb = transmutation_integral(1.0, 200.0)
    assert tb.value == 0.0 or tb.value < 1e-300
    assert math.isfinite(tb.log_value)
    assert tb.log_value >= tb.log_lower_bound - 1e-12


def test_transmutation_precondition():
    with pytest.raises(ValueError):
        transmutation_integral(1.0, 0.5)


def test_kernel_bound():
    assert kernel_bound_eval(0.5, 0.0, 1.0, 1.0, 0.5) == 0.0
    # alpha >= S^2 (1+delta)/delta makes the exponent nonpositive: bound <= |s|
    S, delta = 0.7, 0.5
    alpha = S**2 * (1.0 + delta) / delta
    for s in np.linspace(-S, S, 11):
        for t in (0.1, 0.5, 0.9):
            assert kernel_bound_eval(t, float(s), 1.0, alpha, delta) <= abs(s) + 1e-12
    # monotone decreasing in alpha
    v1 = kernel_bound_eval(0.3, 0.5, 1.0, 1.0, 0.5)
    v2 = kernel_bound_eval(0.3, 0.5, 1.0, 2.0, 0.5)
    assert v2 < v1


def test_kernel_bound_domain():
    with pytest.raises(ValueError):
        kernel_bound_eval(1.5, 0.1, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        kernel_bound_eval(0.5, 0.1, 1.0, 1.0, 1.5)


# ---------------------------------------------------------------------------
# small-ball scaling


def test_small_ball_scaling_fit():
    b = IntervalSineBasis(16)
    radii = [0.04, 0.02, 0.01, 0.005]
    lambdas = [(j * math.pi) ** 2 for j in range(4, 15)]
    rep = small_ball_scaling(b, 0.5, radii, lambdas)
    assert rep.r2 >= 0.95
    assert rep.C1 > 0
    assert math.isfinite(rep.envelope_factor)


def test_small_ball_marginal_sqrt_lambda_growth():
    # at fixed r the exponent grows ~ C1 sqrt(lambda)
    b = IntervalSineBasis(16)
    r = 0.02
    lams = [(j * math.pi) ** 2 for j in (4, 8, 12)]
    ys = [-loc_sigma_log(b, lam, (0.5 - r, 0.5 + r)) for lam in lams]
    assert ys[1] / ys[0] == pytest.approx(math.sqrt(lams[1] / lams[0]), rel=0.35)
    assert ys[2] > ys[1] > ys[0]


def test_small_ball_full_domain_limit():
    b = IntervalSineBasis(10)
    val = -loc_sigma_log(b, float(b.lambdas[5]), (-1.0, 2.0))
    assert abs(val) < 1e-10


def test_small_ball_span_validation():
    b = IntervalSineBasis(10)
    with pytest.raises(ValueError):
        small_ball_scaling(b, 0.5, [0.1, 0.05], [(4 * math.pi) ** 2, (10 * math.pi) ** 2])
