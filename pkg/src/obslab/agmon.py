"""Agmon distance to the equator for revolution profiles, and its disk analogue.

The distance solves the eikonal equation (d_A')^2 = 1/R(s)^2 - 1/R(s0)^2 with
d_A(s0) = 0, i.e. d_A(s) = |∫_{s0}^{s} sqrt(1/R(y)^2 - 1/R(s0)^2) dy|.  The
integrand has a square-root cusp at the equator and a 1/y blow-up at the
poles; both are removed by substitutions before quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .geometry import EquatorData, RevolutionProfile, equator_data

_QUAD_OPTS = dict(epsabs=1e-11, epsrel=1e-11, limit=200)


class AgmonDomainError(ValueError):
    """Evaluation point outside the admissible range."""


def agmon_closed_sphere(s: float) -> float:
    """|log sin s| on (0, pi): the unit-sphere distance in closed form."""
    if not 0.0 < s < math.pi:
        raise AgmonDomainError(f"s={s} outside (0, pi)")
    return abs(math.log(math.sin(s)))


def agmon_closed_disk(r: float) -> float:
    """alpha(r) - tanh(alpha(r)) with alpha = arccosh(1/r), on (0, 1]."""
    if not 0.0 < r <= 1.0:
        raise AgmonDomainError(f"r={r} outside (0, 1]")
    alpha = math.acosh(1.0 / r)
    return alpha - math.tanh(alpha)


def agmon_closed_disk_derivative(r: float) -> float:
    """d/dr of the disk distance: -sqrt(1/r^2 - 1)."""
    if not 0.0 < r <= 1.0:
        raise AgmonDomainError(f"r={r} outside (0, 1]")
    return -math.sqrt(max(1.0 / r**2 - 1.0, 0.0))


def _integrand_factory(p: RevolutionProfile, inv_rmax2: float):
    def g(y):
        v = 1.0 / float(p.R(y)) ** 2 - inv_rmax2
        return math.sqrt(max(v, 0.0))

    return g


def _quad_plain(g, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    val, _ = quad(g, a, b, **_QUAD_OPTS)
    return val


def _quad_equator(g, a: float, s0: float) -> float:
    # y = s0 - t^2 removes the sqrt cusp at the equator (left side; right side
    # is handled by the caller through reflection of the integration order).
    if s0 <= a:
        return 0.0
    tmax = math.sqrt(s0 - a)
    val, _ = quad(lambda t: 2.0 * t * g(s0 - t * t), 0.0, tmax, **_QUAD_OPTS)
    return val


def _quad_pole(g, a: float, b: float, left: bool, L: float) -> float:
    # Near a pole the integrand behaves like 1/y (resp. 1/(L-y)); y = e^{-u}
    # turns the logarithmic build-up into a bounded integrand linear in u.
    if b <= a:
        return 0.0
    if left:
        u_hi, u_lo = -math.log(a), -math.log(b)
        val, _ = quad(lambda u: g(math.exp(-u)) * math.exp(-u), u_lo, u_hi, **_QUAD_OPTS)
    else:
        u_hi, u_lo = -math.log(L - b), -math.log(L - a)
        val, _ = quad(lambda u: g(L - math.exp(-u)) * math.exp(-u), u_lo, u_hi, **_QUAD_OPTS)
    return val


def agmon_distance(
    p: RevolutionProfile, s: float, eq: EquatorData | None = None
) -> float:
    """Agmon distance d_A(s) by adaptive quadrature with singularity handling."""
    if not 0.0 < s < p.L:
        raise AgmonDomainError(f"s={s} outside (0, {p.L})")
    eq = eq or equator_data(p)
    s0 = eq.s0
    g = _integrand_factory(p, 1.0 / eq.Rmax**2)

    if s == s0:
        return 0.0

    lo, hi = (s, s0) if s < s0 else (s0, s)
    # Split [lo, hi] into pole zone / bulk / equator zone.
    pole_left = s < s0
    pole_cut = 0.1 * p.L if pole_left else 0.9 * p.L
    eq_halfwidth = 0.25 * min(s0, p.L - s0)

    total = 0.0
    if pole_left:
        cut1 = min(pole_cut, hi)
        if lo < cut1:
            total += _quad_pole(g, lo, cut1, left=True, L=p.L)
            lo = cut1
        cut2 = max(s0 - eq_halfwidth, lo)
        total += _quad_plain(g, lo, cut2)
        total += _quad_equator(g, cut2, s0)
    else:
        cut1 = max(pole_cut, lo)
        if cut1 < hi:
            total += _quad_pole(g, cut1, hi, left=False, L=p.L)
            hi = cut1
        cut2 = min(s0 + eq_halfwidth, hi)
        total += _quad_plain(g, cut2, hi)
        # reflect to reuse the left-side cusp substitution
        total += _quad_equator(lambda t: g(2.0 * s0 - t), 2.0 * s0 - cut2, s0)
    if not math.isfinite(total):
        raise ArithmeticError(f"quadrature failed for d_A({s})")
    return total


def agmon_asymptote_residual(
    p: RevolutionProfile, s: float, eq: EquatorData | None = None
) -> float:
    """d_A(s) + log(s) near the left pole, d_A(s) + log(L - s) near the right.

    Only defined in the pole neighborhoods (s < L/10 or s > 9L/10); the
    residual stays bounded along any sequence shrinking into a pole.
    """
    if 0.0 < s < p.L / 10.0:
        return agmon_distance(p, s, eq) + math.log(s)
    if 9.0 * p.L / 10.0 < s < p.L:
        return agmon_distance(p, s, eq) + math.log(p.L - s)
    raise AgmonDomainError(f"s={s} not in a pole neighborhood of (0, {p.L})")


@dataclass(frozen=True)
class AgmonTable:
    """Sampled distance, derivative, and pole-asymptote residuals on a grid."""

    grid: np.ndarray
    dA: np.ndarray
    dAprime: np.ndarray
    residual_left: np.ndarray   # d_A + log s for grid points with s < L/10
    residual_right: np.ndarray  # d_A + log(L-s) for grid points with s > 9L/10
    s0: float

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "dA", "dAprime"])
            for s, d, dp in zip(self.grid, self.dA, self.dAprime):
                w.writerow([f"{s:.17g}", f"{d:.17g}", f"{dp:.17g}"])


def agmon_table(
    p: RevolutionProfile, grid: np.ndarray, eq: EquatorData | None = None
) -> AgmonTable:
    """Tabulate d_A and d_A' = sign(s-s0) sqrt(1/R^2 - 1/Rmax^2) on a grid."""
    eq = eq or equator_data(p)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0.0) or np.any(grid >= p.L):
        raise AgmonDomainError("grid must lie strictly inside (0, L)")
    dA = np.array([agmon_distance(p, float(s), eq) for s in grid])
    v = 1.0 / np.asarray(p.R(grid), dtype=float) ** 2 - 1.0 / eq.Rmax**2
    dAprime = np.sign(grid - eq.s0) * np.sqrt(np.maximum(v, 0.0))
    left = grid < p.L / 10.0
    right = grid > 9.0 * p.L / 10.0
    res_l = np.where(left, dA + np.log(np.where(left, grid, 1.0)), np.nan)
    res_r = np.where(right, dA + np.log(np.where(right, p.L - grid, 1.0)), np.nan)
    return AgmonTable(
        grid=grid, dA=dA, dAprime=dAprime,
        residual_left=res_l, residual_right=res_r, s0=eq.s0,
    )
