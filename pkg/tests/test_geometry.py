import math

import numpy as np
import pytest

from obslab import geometry
from obslab.geometry import GeometryError


def test_sphere_equator_exact(sphere, sphere_eq):
    assert sphere.L == math.pi
    assert sphere_eq.s0 == pytest.approx(math.pi / 2, abs=1e-14)
    assert sphere_eq.Rmax == pytest.approx(1.0, abs=1e-14)
    assert sphere_eq.R2 == pytest.approx(-1.0, abs=1e-12)
    assert sphere_eq.c0 == pytest.approx(1.0, abs=1e-12)


def test_scaled_sphere_equator_symbolic():
    # R(s) = 2 sin(s/2) on [0, 2 pi]: maximum 2 at s = pi, R'' = -1/2, c0 = 1/16.
    p = geometry.make_profile("scaled-sphere", {"a": 2.0})
    eq = geometry.equator_data(p)
    assert eq.s0 == pytest.approx(math.pi, abs=1e-12)
    assert eq.Rmax == pytest.approx(2.0, abs=1e-12)
    assert eq.R2 == pytest.approx(-0.5, abs=1e-12)
    assert eq.c0 == pytest.approx(1.0 / 16.0, abs=1e-12)


def test_sphere_validation_all_zero_residuals(sphere):
    rep = geometry.validate_profile(sphere)
    assert rep.passed
    for name, res, _ in rep.checks:
        assert abs(res) < 1e-12, name


def test_sampled_sine_matches_sphere(sphere_eq):
    s = np.linspace(0.0, math.pi, 2001)
    p = geometry.make_profile("sampled", {"s": s, "R": np.sin(s)})
    eq = geometry.equator_data(p)
    h = s[1] - s[0]
    assert eq.s0 == pytest.approx(sphere_eq.s0, abs=h / 50)
    assert eq.Rmax == pytest.approx(1.0, abs=10 * h**2)
    assert eq.c0 == pytest.approx(1.0, rel=5e-3)


def test_pole_violation_rejected():
    s = np.linspace(0.0, math.pi, 500)
    r = np.sin(s) + 0.1  # R(0) = 0.1
    with pytest.raises(GeometryError):
        geometry.make_profile("sampled", {"s": s, "R": r})


def test_flat_top_rejected():
    # Plateau around the maximum: degenerate R''(s0).
    s = np.linspace(0.0, math.pi, 2001)
    r = np.minimum(np.sin(s), 0.92)
    with pytest.raises(GeometryError):
        geometry.equator_data(geometry._sampled_profile(s, r))


def test_two_distant_maxima_rejected():
    s = np.linspace(0.0, math.pi, 4001)
    r = np.sin(s) * (1.0 + 0.3 * np.sin(2 * s) ** 2)  # camel back
    prof = geometry._sampled_profile(s, r)
    with pytest.raises(GeometryError):
        geometry.equator_data(prof)


def test_perturbed_sphere_shifts_equator(perturbed_sphere):
    eq = geometry.equator_data(perturbed_sphere)
    assert abs(eq.s0 - math.pi / 2) > 5e-4
    # curvature stays within 10% of the round value
    assert abs(eq.R2 + 1.0) < 0.1
    assert geometry.validate_profile(perturbed_sphere).passed
    # independent argmax refinement oracle on a dense grid
    grid = np.linspace(0.0, math.pi, 200001)[1:-1]
    vals = perturbed_sphere.R(grid)
    assert eq.s0 == pytest.approx(grid[np.argmax(vals)], abs=2e-4)


def test_perturbed_sphere_strong_shift():
    p = geometry.make_profile("perturbed-sphere",
                              {"eps": 0.05, "center": 1.0, "width": 0.9})
    eq = geometry.equator_data(p)
    assert eq.s0 < math.pi / 2 - 0.01


def test_equator_grid_refinement_second_order():
    s_coarse = np.linspace(0.0, math.pi, 1001)
    s_fine = np.linspace(0.0, math.pi, 2001)
    eqc = geometry.equator_data(geometry._sampled_profile(s_coarse, np.sin(s_coarse)))
    eqf = geometry.equator_data(geometry._sampled_profile(s_fine, np.sin(s_fine)))
    for attr in ("Rmax", "c0"):
        err_c = abs(getattr(eqc, attr) - 1.0)
        err_f = abs(getattr(eqf, attr) - 1.0)
        assert err_f <= err_c / 3.0 or err_f < 1e-10


def test_csv_roundtrip(tmp_path):
    s = np.linspace(0.0, math.pi, 1001)
    path = tmp_path / "profile.csv"
    with open(path, "w") as fh:
        fh.write("s,R\n")
        for si, ri in zip(s, np.sin(s)):
            fh.write(f"{si:.17g},{ri:.17g}\n")
    p = geometry.load_profile_csv(path)
    eq = geometry.equator_data(p)
    assert eq.Rmax == pytest.approx(1.0, abs=1e-5)


def test_csv_requires_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.0,0.0\n1.0,0.8\n")
    with pytest.raises(GeometryError):
        geometry.load_profile_csv(path)


def test_unknown_preset():
    with pytest.raises(GeometryError):
        geometry.make_profile("torus", {})
