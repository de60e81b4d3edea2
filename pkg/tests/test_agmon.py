import math

import numpy as np
import pytest

from obslab import agmon, geometry
from obslab.agmon import AgmonDomainError


def test_closed_sphere_values():
    assert agmon.agmon_closed_sphere(math.pi / 2) == 0.0
    assert agmon.agmon_closed_sphere(math.pi / 6) == pytest.approx(math.log(2.0), abs=1e-14)
    assert agmon.agmon_closed_sphere(math.pi - 0.1) == pytest.approx(
        abs(math.log(math.sin(0.1))), abs=1e-12)


def test_closed_disk_values():
    assert agmon.agmon_closed_disk(1.0) == 0.0
    alpha = math.acosh(2.0)
    assert agmon.agmon_closed_disk(0.5) == pytest.approx(alpha - math.tanh(alpha), abs=1e-14)
    assert agmon.agmon_closed_disk(0.5) == pytest.approx(0.450932493140378, abs=1e-12)
    # log(1/r) + log 2 - 1 asymptote at small radius
    r = 0.01
    assert agmon.agmon_closed_disk(r) == pytest.approx(
        math.log(1.0 / r) + math.log(2.0) - 1.0, abs=1e-3)


def test_disk_derivative_identity():
    for r in (0.2, 0.5, 0.9):
        h = 1e-6
        fd = (agmon.agmon_closed_disk(r + h) - agmon.agmon_closed_disk(r - h)) / (2 * h)
        assert fd == pytest.approx(agmon.agmon_closed_disk_derivative(r), abs=1e-6)


def test_domain_errors(sphere):
    with pytest.raises(AgmonDomainError):
        agmon.agmon_closed_sphere(0.0)
    with pytest.raises(AgmonDomainError):
        agmon.agmon_closed_disk(1.5)
    with pytest.raises(AgmonDomainError):
        agmon.agmon_distance(sphere, math.pi)
    with pytest.raises(AgmonDomainError):
        agmon.agmon_asymptote_residual(sphere, sphere.L / 2)


def test_quadrature_matches_closed_form_random(sphere, sphere_eq, rng):
    ss = rng.uniform(1e-3, math.pi - 1e-3, size=100)
    for s in ss:
        got = agmon.agmon_distance(sphere, float(s), sphere_eq)
        assert abs(got - agmon.agmon_closed_sphere(float(s))) <= 1e-8


def test_equator_value_zero(sphere, sphere_eq):
    assert agmon.agmon_distance(sphere, sphere_eq.s0, sphere_eq) == 0.0
    assert agmon.agmon_distance(sphere, sphere_eq.s0 + 1e-9, sphere_eq) < 1e-12


def test_sphere_symmetry(sphere, sphere_eq):
    for s in (0.3, 0.9, 1.4):
        a = agmon.agmon_distance(sphere, s, sphere_eq)
        b = agmon.agmon_distance(sphere, math.pi - s, sphere_eq)
        assert a == pytest.approx(b, abs=1e-10)


def test_pole_asymptote_residual_sequence(sphere, sphere_eq):
    # exact residual is -log(sin s / s), monotone and below 0.1 for s <= 1/8
    residuals = [agmon.agmon_asymptote_residual(sphere, 2.0**-j, sphere_eq)
                 for j in range(3, 13)]
    assert all(abs(r) <= 0.1 for r in residuals)
    assert all(residuals[i] <= residuals[i - 1] + 1e-12 for i in range(1, len(residuals)))
    # closed form of the residual at s = 0.01
    s = 0.01
    assert agmon.agmon_asymptote_residual(sphere, s, sphere_eq) == pytest.approx(
        -math.log(math.sin(s) / s), abs=1e-8)


def test_perturbed_sphere_residual_bounded(perturbed_sphere):
    eq = geometry.equator_data(perturbed_sphere)
    residuals = [agmon.agmon_asymptote_residual(perturbed_sphere, 2.0**-j, eq)
                 for j in range(3, 11)]
    spread = max(residuals) - min(residuals)
    assert spread < 0.05  # bounded along the shrinking sequence
    assert max(abs(r) for r in residuals) < 1.0


def test_table_eikonal_identity(sphere, sphere_eq):
    # bulk window: the spec constant assumes O(1) derivative scales, which
    # fails within ~0.5 of the poles where d_A''' blows up like 2/s^3
    grid = np.linspace(0.7, math.pi - 0.7, 401)
    table = agmon.agmon_table(sphere, grid, sphere_eq)
    h = grid[1] - grid[0]
    fd = np.gradient(table.dA, h, edge_order=2)
    v = 1.0 / np.sin(grid) ** 2 - 1.0
    interior = np.zeros_like(grid, dtype=bool)
    interior[2:-2] = True
    mask = interior & (np.abs(grid - sphere_eq.s0) > 5 * h)
    assert np.max(np.abs(fd[mask] ** 2 - v[mask])) <= 10 * h**2
    # tabulated derivative is the exact eikonal root
    assert np.allclose(table.dAprime**2, v, atol=1e-12)


def test_table_monotone_about_equator(sphere, sphere_eq):
    grid = np.linspace(0.2, math.pi - 0.2, 301)
    table = agmon.agmon_table(sphere, grid, sphere_eq)
    left = grid < sphere_eq.s0
    right = grid > sphere_eq.s0
    assert np.all(np.diff(table.dA[left]) < 0)
    assert np.all(np.diff(table.dA[right]) > 0)


def test_table_csv_export(tmp_path, sphere, sphere_eq):
    grid = np.linspace(0.5, 2.5, 21)
    table = agmon.agmon_table(sphere, grid, sphere_eq)
    path = tmp_path / "agmon.csv"
    table.export_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,dA,dAprime"
    assert len(lines) == 22


def test_disk_distance_small_radius_asymptote():
    # d_A(r) = log(1/r) + log 2 - 1 + o(1): ratio creeps up to 1 from below
    ratios = []
    for j in range(4, 14):
        r = 2.0**-j
        ratios.append(agmon.agmon_closed_disk(r) / math.log(1.0 / r))
    assert all(0.85 < q < 1.0 for q in ratios)
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
