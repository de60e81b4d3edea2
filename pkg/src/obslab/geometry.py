"""Rotationally symmetric geometries described by a profile R(s) on [0, L].

A profile gives the distance to the symmetry axis as a function of arclength
along a meridian.  Valid profiles vanish at both poles with unit slope
(R'(0)=1, R'(L)=-1) and reach a strict non-degenerate interior maximum at the
equator s0.  The equator data (s0, R(s0), R''(s0)) feeds every eigenvalue
prediction and Agmon-distance computation downstream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class GeometryError(ValueError):
    """Profile violates a pole condition or lacks a usable equator."""


@dataclass(frozen=True)
class RevolutionProfile:
    """Profile of a surface of revolution, immutable after construction.

    R, dR, d2R are vectorized callables on [0, L].  Analytic presets carry
    exact derivative accessors; sampled profiles use finite differences.
    """

    L: float
    R: Callable[[np.ndarray], np.ndarray]
    dR: Callable[[np.ndarray], np.ndarray]
    d2R: Callable[[np.ndarray], np.ndarray]
    kind: str
    s0_hint: float | None = None
    grid_step: float = 0.0  # 0 for analytic profiles

    @property
    def is_analytic(self) -> bool:
        return self.grid_step == 0.0


@dataclass(frozen=True)
class EquatorData:
    """Equator location and the curvature data entering eigenvalue asymptotics."""

    s0: float
    Rmax: float
    R2: float  # R''(s0) < 0
    c0: float  # |R''(s0)| / R(s0)^3

    def __post_init__(self):
        if not (self.Rmax > 0 and self.R2 < 0 and self.c0 > 0):
            raise GeometryError(
                f"degenerate equator data: Rmax={self.Rmax}, R2={self.R2}, c0={self.c0}"
            )


@dataclass
class ValidationReport:
    """Per-condition residuals from validate_profile."""

    checks: list[tuple[str, float, float]] = field(default_factory=list)

    def add(self, name: str, residual: float, tol: float) -> None:
        self.checks.append((name, float(residual), float(tol)))

    @property
    def passed(self) -> bool:
        return all(abs(res) <= tol for _, res, tol in self.checks)

    def failures(self) -> list[str]:
        return [name for name, res, tol in self.checks if abs(res) > tol]


# Quartic mollifier exp(1 - 1/(1-t^4)): compactly supported on |t| < 1 and
# flat near its center, so a perturbation moves the equator without changing
# the curvature there much.


def _bump(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti**4))
    return out


def _bump_d1(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    one = 1.0 - ti**4
    q1 = -4.0 * ti**3 / one**2
    out[inside] = q1 * np.exp(1.0 - 1.0 / one)
    return out


def _bump_d2(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    one = 1.0 - ti**4
    q1 = -4.0 * ti**3 / one**2
    q2 = -12.0 * ti**2 / one**2 - 32.0 * ti**6 / one**3
    out[inside] = (q2 + q1 * q1) * np.exp(1.0 - 1.0 / one)
    return out


def _sphere_profile() -> RevolutionProfile:
    return RevolutionProfile(
        L=math.pi,
        R=np.sin,
        dR=np.cos,
        d2R=lambda s: -np.sin(s),
        kind="sphere",
        s0_hint=math.pi / 2,
    )


def _scaled_sphere_profile(a: float) -> RevolutionProfile:
    # R(s) = a sin(s/a) on [0, a*pi]; pole slopes stay +-1.
    if a <= 0:
        raise GeometryError("scale must be positive")
    return RevolutionProfile(
        L=a * math.pi,
        R=lambda s: a * np.sin(np.asarray(s, dtype=float) / a),
        dR=lambda s: np.cos(np.asarray(s, dtype=float) / a),
        d2R=lambda s: -np.sin(np.asarray(s, dtype=float) / a) / a,
        kind="scaled-sphere",
        s0_hint=a * math.pi / 2,
    )


def _perturbed_sphere_profile(eps: float, center: float, width: float) -> RevolutionProfile:
    # R(s) = sin(s) (1 + eps*b((s-center)/width)); b compactly supported, so the
    # pole conditions of the round sphere are preserved exactly.
    if not (0.0 < center - width and center + width < math.pi):
        raise GeometryError("bump support must stay inside (0, pi)")

    def R(s):
        s = np.asarray(s, dtype=float)
        return np.sin(s) * (1.0 + eps * _bump((s - center) / width))

    def dR(s):
        s = np.asarray(s, dtype=float)
        t = (s - center) / width
        b, b1 = _bump(t), _bump_d1(t) / width
        return np.cos(s) * (1.0 + eps * b) + np.sin(s) * eps * b1

    def d2R(s):
        s = np.asarray(s, dtype=float)
        t = (s - center) / width
        b, b1, b2 = _bump(t), _bump_d1(t) / width, _bump_d2(t) / width**2
        return -np.sin(s) * (1.0 + eps * b) + 2.0 * np.cos(s) * eps * b1 + np.sin(s) * eps * b2

    return RevolutionProfile(L=math.pi, R=R, dR=dR, d2R=d2R, kind="perturbed-sphere")


def _sampled_profile(s: np.ndarray, r: np.ndarray) -> RevolutionProfile:
    from scipy.interpolate import CubicSpline

    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    if s.ndim != 1 or s.size < 8:
        raise GeometryError("sampled profile needs at least 8 points")
    if not np.all(np.diff(s) > 0):
        raise GeometryError("sample abscissae must be strictly increasing")
    if abs(s[0]) > 1e-12:
        raise GeometryError("sample abscissae must start at 0")
    if np.any(r[1:-1] <= 0):
        raise GeometryError("sampled R must be strictly positive inside (0, L)")
    L = float(s[-1])
    h = float(np.max(np.diff(s)))

    spline = CubicSpline(s, r)

    # Centered differences inside, one-sided second-order stencils at the ends.
    d1 = np.gradient(r, s, edge_order=2)
    d2 = np.gradient(d1, s, edge_order=2)
    sp1 = CubicSpline(s, d1)
    sp2 = CubicSpline(s, d2)

    def clip(x):
        return np.clip(np.asarray(x, dtype=float), 0.0, L)

    return RevolutionProfile(
        L=L,
        R=lambda x: spline(clip(x)),
        dR=lambda x: sp1(clip(x)),
        d2R=lambda x: sp2(clip(x)),
        kind="sampled",
        grid_step=h,
    )


def load_profile_csv(path) -> RevolutionProfile:
    """Load a sampled profile from CSV with header and columns (s, R)."""
    ss, rr = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 2 or header[0].strip().lower() != "s":
            raise GeometryError(f"expected header starting with 's,R', got {header!r}")
        for row in reader:
            if not row:
                continue
            ss.append(float(row[0]))
            rr.append(float(row[1]))
    return make_profile("sampled", {"s": np.array(ss), "R": np.array(rr)})


_PRESETS = ("sphere", "scaled-sphere", "perturbed-sphere", "sampled")


def make_profile(kind: str, params: dict | None = None) -> RevolutionProfile:
    """Build a preset profile and validate it.

    Presets: "sphere"; "scaled-sphere" {a}; "perturbed-sphere"
    {eps, center=1.0, width=0.3}; "sampled" {s, R} or {csv}.
    """
    params = dict(params or {})
    if kind == "sphere":
        p = _sphere_profile()
    elif kind == "scaled-sphere":
        p = _scaled_sphere_profile(float(params.get("a", 2.0)))
    elif kind == "perturbed-sphere":
        p = _perturbed_sphere_profile(
            float(params.get("eps", 0.05)),
            float(params.get("center", 1.3)),
            float(params.get("width", 1.2)),
        )
    elif kind == "sampled":
        if "csv" in params:
            return load_profile_csv(params["csv"])
        p = _sampled_profile(params["s"], params["R"])
    else:
        raise GeometryError(f"unknown preset {kind!r}; choose one of {_PRESETS}")

    report = validate_profile(p)
    if not report.passed:
        raise GeometryError(f"profile fails validation: {report.failures()}")
    return p


def validate_profile(p: RevolutionProfile) -> ValidationReport:
    """Check pole conditions and the existence of a strict interior maximum."""
    rep = ValidationReport()
    if p.is_analytic:
        tol_val, tol_der = 1e-10, 1e-8
    else:
        tol_val, tol_der = 10.0 * p.grid_step**2, 10.0 * p.grid_step

    rep.add("R(0) = 0", float(p.R(0.0)), tol_val)
    rep.add("R(L) = 0", float(p.R(p.L)), tol_val)
    rep.add("R'(0) = 1", float(p.dR(0.0)) - 1.0, tol_der)
    rep.add("R'(L) = -1", float(p.dR(p.L)) + 1.0, tol_der)

    s = np.linspace(0.0, p.L, 2001)[1:-1]
    r = np.asarray(p.R(s), dtype=float)
    rep.add("R > 0 inside", min(0.0, float(np.min(r))), 0.0)

    try:
        eq = equator_data(p)
        rep.add("strict interior maximum", 0.0, 1.0)
        rep.add("R''(s0) < 0", max(0.0, eq.R2), 0.0)
    except GeometryError:
        rep.add("strict interior maximum", 1.0, 0.0)
    return rep


def _refine_newton(p: RevolutionProfile, s_init: float) -> float:
    s = s_init
    for _ in range(60):
        g = float(p.dR(s))
        H = float(p.d2R(s))
        if H >= 0:
            break
        step = g / H
        s_new = min(max(s - step, 0.0), p.L)
        if abs(s_new - s) < 1e-15 * p.L:
            return s_new
        s = s_new
    return s


def _refine_golden(f, a: float, b: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def equator_data(p: RevolutionProfile, scan_points: int = 4001) -> EquatorData:
    """Locate the equator by dense argmax plus local refinement.

    Analytic profiles refine with Newton on R' (machine precision); sampled
    profiles use golden-section search on the interpolant.  Rejects profiles
    whose grid maximum is attained at two well-separated points, or whose
    curvature at the maximum is numerically degenerate.
    """
    grid = np.linspace(0.0, p.L, scan_points)[1:-1]
    vals = np.asarray(p.R(grid), dtype=float)
    i_max = int(np.argmax(vals))
    h = grid[1] - grid[0]

    # Strictness: a second near-maximal point far from the argmax is rejected.
    near = np.nonzero(vals >= vals[i_max] - 1e-9 * max(1.0, vals[i_max]))[0]
    if np.any(np.abs(grid[near] - grid[i_max]) > 20.0 * h):
        raise GeometryError("maximum of R is not strict (two distant grid maxima)")

    if p.is_analytic:
        s0 = _refine_newton(p, float(grid[i_max]))
    else:
        a = max(grid[i_max] - 2 * h, 0.0)
        b = min(grid[i_max] + 2 * h, p.L)
        s0 = _refine_golden(lambda x: float(p.R(x)), a, b, tol=h / 200.0)

    Rmax = float(p.R(s0))
    R2 = float(p.d2R(s0))
    if R2 >= -1e-6 * max(1.0, Rmax / p.L**2):
        raise GeometryError(f"degenerate maximum: R''(s0) = {R2:.3e}")
    return EquatorData(s0=s0, Rmax=Rmax, R2=R2, c0=abs(R2) / Rmax**3)
