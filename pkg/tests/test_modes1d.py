import math

import numpy as np
import pytest

from obslab import agmon, geometry, modes1d
from obslab.modes1d import (
    RegressionError,
    agmon_decay_check,
    ball_norm,
    harmonic_prediction,
    log_ball_norm,
    solve_family,
    solve_reduced,
    sphere_ck2,
    sphere_exact_norm,
    sphere_quadrature_norm,
    sphere_radial,
    vanishing_order,
    wallis_sin_integral,
)


def test_sphere_eigenvalues_k1_k10(sphere):
    lam1 = solve_reduced(sphere, 1, 0, 2000).mode(1, 0).lam
    assert lam1 == pytest.approx(2.0, rel=1e-4)
    lam10 = solve_reduced(sphere, 10, 0, 2000).mode(10, 0).lam
    assert lam10 == pytest.approx(110.0, rel=1e-4)


def test_sphere_overtone_eigenvalues(sphere):
    # lambda_{k,n} = (k+n)(k+n+1) on the round sphere
    fam = solve_reduced(sphere, 5, 2, 2000)
    for n in range(3):
        l = 5 + n
        assert fam.mode(5, n).lam == pytest.approx(l * (l + 1), rel=2e-4)


def test_harmonic_prediction_sphere_exact(sphere, sphere_eq):
    for k in (1, 3, 10, 25):
        assert harmonic_prediction(sphere, k, sphere_eq) == pytest.approx(
            k * (k + 1), abs=1e-9)
    assert harmonic_prediction(sphere, 0, sphere_eq) == 0.0


def test_harmonic_prediction_scaled_sphere():
    p = geometry.make_profile("scaled-sphere", {"a": 2.0})
    assert harmonic_prediction(p, 4) == pytest.approx(5.0, abs=1e-10)


def test_perturbed_sphere_prediction_crosses_solver(perturbed_sphere):
    lam = solve_reduced(perturbed_sphere, 10, 0, 2000).mode(10, 0).lam
    pred = harmonic_prediction(perturbed_sphere, 10)
    assert lam == pytest.approx(pred, rel=0.05)


def test_eigenvalue_barrier_lower_bound(sphere_family, sphere_eq):
    for k in sphere_family.ks:
        lam = sphere_family.mode(k, 0).lam
        assert lam >= k**2 / sphere_eq.Rmax**2


def test_mode_normalization(sphere_family):
    for k in (1, 7, 40):
        m = sphere_family.mode(k, 0)
        total = 2.0 * math.pi * float(np.sum(m.weights * m.f**2))
        assert total == pytest.approx(1.0, abs=1e-8)


def test_grid_refinement_second_order(sphere):
    lams = [solve_reduced(sphere, 8, 0, g).mode(8, 0).lam for g in (500, 1000, 2000)]
    e1 = abs(lams[1] - lams[0])
    e2 = abs(lams[2] - lams[1])
    assert e2 <= e1 / 3.0


def test_cutoff_robustness(sphere):
    for k in (5, 10):
        dlam, dball = modes1d.cutoff_sensitivity(sphere, k, 2000, r_probe=1.0)
        assert dlam < 1e-6
        assert dball < 1e-6


def test_sphere_radial_cross_validation(sphere_family):
    for k in (5, 10, 20):
        m = sphere_family.mode(k, 0)
        mask = (m.grid > 0.5) & (m.grid < math.pi - 0.5)
        exact = sphere_radial(k, m.grid[mask])
        rel = np.abs(m.f[mask] - exact) / np.abs(exact)
        assert np.max(rel) < 1e-3


def test_wallis_and_ck():
    assert wallis_sin_integral(0) == 2.0
    assert wallis_sin_integral(1) == pytest.approx(4.0 / 3.0, abs=1e-15)
    assert sphere_ck2(1) == pytest.approx(3.0 / (8.0 * math.pi), abs=1e-15)


def test_ck_asymptotic_constant():
    sn = sphere_exact_norm(200, 0.5)
    ck = math.sqrt(sn.ck2)
    target = 1.0 / (math.sqrt(2.0) * math.pi**0.75)
    assert ck * 200 ** -0.25 == pytest.approx(target, rel=0.01)
    assert sn.ck_asymptotic == pytest.approx(ck, rel=0.01)


def test_exact_norm_remainder_bound():
    for k in (5, 10, 20, 40):
        for r in (0.3, 0.6, 1.2):
            sn = sphere_exact_norm(k, r)
            quadr = sphere_quadrature_norm(k, r)
            assert abs(quadr - sn.value) <= sn.value * sn.remainder_bound


def test_exact_norm_small_radius_slope():
    # value ~ r^{2k+2} as r -> 0: log-log slope 2k+2
    k = 6
    rs = [2.0**-j for j in range(2, 8)]
    vals = [sphere_quadrature_norm(k, r) for r in rs]
    slope, _ = modes1d._least_squares_slope(np.log(rs), np.log(vals))
    assert slope == pytest.approx(2 * k + 2, rel=0.02)


def test_ball_norm_full_sphere(sphere_family):
    m = sphere_family.mode(10, 0)
    assert ball_norm(m, math.pi) == pytest.approx(1.0, abs=1e-12)


def test_ball_norm_monotone(sphere_family):
    m = sphere_family.mode(10, 0)
    rs = np.linspace(0.2, math.pi, 25)
    vals = [log_ball_norm(m, float(r)) for r in rs]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_ball_norm_matches_exact_formula(sphere_family):
    m = sphere_family.mode(10, 0)
    sn = sphere_exact_norm(10, 0.6)
    assert ball_norm(m, 0.6) == pytest.approx(sn.value, rel=sn.remainder_bound)


def test_ball_norm_tail_direct_consistency(sphere_family):
    # the Riccati tail and the eigenvector sum agree where both are valid
    m = sphere_family.mode(25, 0)
    r = float(m._tail.s_match)
    direct = log_ball_norm(m, r)
    tail = math.log(2.0 * math.pi) + m._tail.log_partial_norm2(r)
    assert direct == pytest.approx(tail, abs=5e-3)


def test_ball_norm_deep_tail_against_quadrature(sphere_family):
    for k, r in ((25, 0.1), (40, 0.05)):
        m = sphere_family.mode(k, 0)
        got = log_ball_norm(m, r)
        want = math.log(sphere_quadrature_norm(k, r))
        assert got == pytest.approx(want, abs=5e-3)


def test_decay_slopes_dominate_agmon(sphere_family):
    report = agmon_decay_check(sphere_family, [0.3, 0.6])
    for row in report.rows:
        assert row.passed
        assert row.slope >= 0.95 * row.dA_Rmax
        assert row.slope == pytest.approx(row.dA_Rmax, rel=0.05)


def test_decay_slope_at_equator_radius_near_zero(sphere_family, sphere_eq):
    # B(N, pi/2) has mass 1/2 for every k by symmetry: slope ~ 0
    vals = [log_ball_norm(sphere_family.mode(k, 0), sphere_eq.s0) for k in (10, 20, 40)]
    assert np.allclose(vals, math.log(0.5), atol=1e-3)


def test_decay_blowup_ratio(sphere_family):
    radii = [2.0**-j for j in range(2, 6)]
    report = agmon_decay_check(sphere_family, radii)
    for r, ratio in report.blowup_ratios():
        assert 0.8 <= ratio <= 1.2


def test_decay_report_json_schema(tmp_path, sphere_family):
    import json

    report = agmon_decay_check(sphere_family, [0.5])
    path = tmp_path / "decay.json"
    report.to_json(path)
    rows = json.loads(path.read_text())
    assert set(rows[0]) == {"r", "slope", "stderr", "dA_Rmax", "pass"}


def test_decay_needs_enough_points(sphere):
    fam = solve_family(sphere, range(1, 5), 0, 500)
    with pytest.raises(RegressionError):
        agmon_decay_check(fam, [0.5])


def test_family_export_csv(tmp_path, sphere):
    fam = solve_family(sphere, range(1, 4), 1, 500)
    eig = tmp_path / "eig.csv"
    rad = tmp_path / "radial.csv"
    fam.export_csv(eig, rad)
    lines = eig.read_text().splitlines()
    assert lines[0] == "k,n,lambda"
    assert len(lines) == 1 + 3 * 2
    assert rad.read_text().splitlines()[0] == "k,n,s,f"


def test_vanishing_order_monomial():
    # f(x) = x^k on R: ||f||_{B(0,r)} = c r^{k + 1/2}, implied order k
    for k in (1, 3, 6):
        norms = [(r, math.sqrt(2.0 * r ** (2 * k + 1) / (2 * k + 1)))
                 for r in np.geomspace(0.01, 0.5, 8)]
        est = vanishing_order(norms, dim=1)
        assert est.D_hat == pytest.approx(k + 0.5, abs=1e-9)
        assert est.implied_order == k


def test_vanishing_order_constant():
    norms = [(r, math.sqrt(2.0 * r)) for r in np.geomspace(0.01, 0.5, 8)]
    est = vanishing_order(norms, dim=1)
    assert est.D_hat == pytest.approx(0.5, abs=1e-9)
    assert est.implied_order == 0


def test_vanishing_order_sphere_mode(sphere_family):
    # near the pole the k-th mode vanishes to order ~ k in a 2D chart
    k = 10
    m = sphere_family.mode(k, 0)
    norms = [(r, math.exp(0.5 * log_ball_norm(m, r)))
             for r in np.geomspace(0.02, 0.3, 8)]
    est = vanishing_order(norms, dim=2)
    floor = math.sqrt(m.lam) - 2.0  # R(s0) sqrt(lambda) - C with R = 1
    assert est.implied_order >= math.floor(floor) - 1
    assert est.implied_order == k


def test_vanishing_order_validation():
    with pytest.raises(RegressionError):
        vanishing_order([(0.1, 1.0)] * 3, dim=1)
    with pytest.raises(ValueError):
        vanishing_order([(r, -1.0) for r in np.geomspace(0.01, 0.5, 6)], dim=1)


def test_solver_preconditions(sphere):
    with pytest.raises(ValueError):
        solve_reduced(sphere, 1, 0, 100)
    with pytest.raises(ValueError):
        solve_reduced(sphere, -1, 0, 500)


def test_k0_constant_mode(sphere):
    fam = solve_reduced(sphere, 0, 0, 800)
    m = fam.mode(0, 0)
    assert abs(m.lam) < 1e-8
    assert np.max(np.abs(m.f - m.f[0])) < 1e-6 * abs(m.f[0])
