"""Bessel machinery and whispering-gallery modes of the Dirichlet disk.

J_n(z_{n,1} r) e^{i n theta} is the first radial Dirichlet eigenfunction in
the angular sector n; for large n it hugs the boundary and decays like
exp(-n * d_A(r)) toward the center, with d_A the disk Agmon distance.
Production evaluation of J_n uses the ascending series where it is
cancellation-free and a normalized backward recurrence elsewhere; tests
cross-check against the uniform trapezoid rule on the oscillatory integral
representation, which is spectrally accurate for periodic integrands.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .agmon import agmon_closed_disk
from .modes1d import DecayReport, DecayRow, RegressionError, _least_squares_slope


class BesselError(ArithmeticError):
    """Evaluation or zero-bracketing failure."""


_RESCALE = 1e250


def _series(n: int, z: float) -> float:
    # Ascending series sum_m (-1)^m (z/2)^{n+2m} / (m! (n+m)!): safe whenever
    # the terms decrease from the start (z^2/4 < n+1) or z is small.
    half = 0.5 * z
    try:
        term = math.exp(n * math.log(half) - math.lgamma(n + 1)) if z > 0 else (1.0 if n == 0 else 0.0)
    except ValueError:
        return 1.0 if n == 0 else 0.0
    total = term
    m = 0
    while m < 600:
        m += 1
        term *= -(half * half) / (m * (n + m))
        total += term
        if abs(term) <= 1e-18 * max(abs(total), 1e-280):
            break
    return total


def _backward_recurrence(n_max: int, z: float) -> np.ndarray:
    # Normalized backward (Miller) recurrence: J_{m-1} = (2m/z) J_m - J_{m+1},
    # seeded high above the turning order, normalized by J_0 + 2 sum J_{2m} = 1.
    if z <= 0.0:
        raise BesselError("backward recurrence needs z > 0")
    start = max(n_max, int(math.ceil(z))) + 16 + int(2.0 * math.sqrt(max(n_max, z, 1.0)))
    if start % 2 == 1:
        start += 1
    jp, j = 0.0, 1e-300
    out = np.zeros(n_max + 1)
    norm = 0.0
    scale_log = 0.0
    for m in range(start, 0, -1):
        jm = (2.0 * m / z) * j - jp
        jp, j = j, jm
        if m - 1 <= n_max:
            out[m - 1] = jm
        if (m - 1) % 2 == 0:
            norm += 2.0 * jm
        if abs(jm) > _RESCALE:
            jp /= _RESCALE
            j /= _RESCALE
            out /= _RESCALE
            norm /= _RESCALE
    norm -= j  # J_0 counted twice in the even sum
    if norm == 0.0 or not math.isfinite(norm):
        raise BesselError(f"normalization failed at z={z}")
    return out / norm


def bessel_j(n: int, z: float) -> float:
    """J_n(z) for integer n >= 0 and z >= 0."""
    if n < 0 or z < 0.0:
        raise ValueError("need n >= 0 and z >= 0")
    if z == 0.0:
        return 1.0 if n == 0 else 0.0
    if z > 1e8:
        raise BesselError("argument too large for reliable evaluation")
    if z * z < 4.0 * (n + 1.0) or z <= 10.0:
        return _series(n, z)
    return float(_backward_recurrence(n, z)[n])


def bessel_j_integral(n: int, z: float, points: int | None = None) -> float:
    """J_n(z) via the uniform trapezoid rule on its full-period integral form."""
    if points is None:
        points = max(256, 8 * (int(z) + n) + 64)
    theta = -math.pi + 2.0 * math.pi * np.arange(points) / points
    return float(np.mean(np.cos(z * np.sin(theta) - n * theta)))


def bessel_first_zero(n: int) -> float:
    """First positive zero z_{n,1}, bracketed in (n, n + 4(n+1)^{1/3} + 4].

    Scans for the first sign change, then bisects to 1e-12.  The invariant
    z_{n,1} > n is asserted on the result.
    """
    from scipy.optimize import brentq

    lo = max(n, 1e-9)
    hi = n + 4.0 * (n + 1.0) ** (1.0 / 3.0) + 4.0
    xs = np.linspace(lo, hi, 600)[1:]
    vals = [bessel_j(n, float(x)) for x in xs]
    bracket = None
    for i in range(len(xs) - 1):
        if vals[i] == 0.0:
            bracket = (xs[i], xs[i])
            break
        if vals[i] * vals[i + 1] < 0.0:
            bracket = (xs[i], xs[i + 1])
            break
    if bracket is None:
        raise BesselError(f"no sign change of J_{n} in ({lo}, {hi}]")
    a, b = bracket
    z1 = a if a == b else brentq(lambda x: bessel_j(n, x), a, b, xtol=1e-13, rtol=1e-15)
    if not z1 > n:
        raise BesselError(f"computed zero {z1} violates z_(n,1) > n")
    return float(z1)


@dataclass(frozen=True)
class WhisperingMode:
    """First radial Dirichlet mode in angular sector n."""

    n: int
    z1: float
    lam: float
    norm2: float  # integral_0^1 J_n(z1 r)^2 r dr, before the 2 pi factor

    @property
    def l2_norm(self) -> float:
        return math.sqrt(2.0 * math.pi * self.norm2)


def whispering_mode(n: int) -> WhisperingMode:
    z1 = bessel_first_zero(n)
    # Dirichlet normalization integral in closed form: J_{n+1}(z1)^2 / 2.
    norm2 = 0.5 * bessel_j(n + 1, z1) ** 2
    return WhisperingMode(n=n, z1=z1, lam=z1 * z1, norm2=norm2)


def decay_bound_pair(n: int, alpha: float) -> tuple[float, float]:
    """(|J_n(n / cosh(alpha))|, exp(n (tanh(alpha) - alpha))); first <= second."""
    if n < 1 or alpha < 0.0:
        raise ValueError("need n >= 1 and alpha >= 0")
    value = abs(bessel_j(n, n / math.cosh(alpha)))
    bound = math.exp(n * (math.tanh(alpha) - alpha))
    return value, bound


def disk_decay_check(
    ns,
    r: float,
    beta: float = 3.0,
    window: float = 0.5,
    slope_tol: float = 0.10,
    sup_samples: int = 200,
) -> DecayReport:
    """Regress -log of normalized sup-norms on B(0, r) against sqrt(lambda).

    Only angular numbers with r <= 1 - beta * n^{-2/3} participate (the decay
    estimate needs the ball to stay clear of the caustic annulus).  The slope
    must match the closed-form disk distance d_A(r) within slope_tol.
    """
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie in (0, 1)")
    usable = [int(n) for n in ns if r <= 1.0 - beta * float(n) ** (-2.0 / 3.0)]
    if len(usable) < 5:
        raise RegressionError(
            f"fewer than 5 usable angular numbers at r={r} (beta={beta})"
        )
    usable.sort()
    n_lo = usable[0] + int(math.ceil((usable[-1] - usable[0]) * (1.0 - window)))
    used = [n for n in usable if n >= n_lo]
    if len(used) < 5:
        raise RegressionError("regression window has fewer than 5 points")

    rhos = np.linspace(r / sup_samples, r, sup_samples)
    xs, ys = [], []
    for n in used:
        wm = whispering_mode(n)
        sup = max(abs(bessel_j(n, float(wm.z1 * rho))) for rho in rhos)
        if sup == 0.0:
            raise BesselError(f"sup underflowed at n={n}, r={r}")
        xs.append(wm.z1)
        ys.append(-math.log(sup / wm.l2_norm))
    # Fit y = slope * sqrt(lambda) + c * lambda^{1/6} + d: the lambda^{1/6}
    # regressor absorbs the subleading correction of the sup-norm estimate,
    # which would otherwise bias the slope by O(n^{-2/3}).
    x = np.array(xs)
    y = np.array(ys)
    design = np.column_stack([x, np.cbrt(x), np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(design, y, rcond=None)
    slope = float(coef[0])
    dof = max(x.size - 3, 1)
    rss = float(res[0]) if res.size else float(np.sum((y - design @ coef) ** 2))
    cov = np.linalg.inv(design.T @ design) * (rss / dof)
    err = math.sqrt(max(cov[0, 0], 0.0))
    target = agmon_closed_disk(r)
    row = DecayRow(r=r, slope=slope, stderr=err, dA_Rmax=target,
                   passed=abs(slope - target) <= slope_tol * target)
    return DecayReport(rows=[row], k_window=(used[0], used[-1]))
