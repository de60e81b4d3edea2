"""Reduced radial eigenproblem on surfaces of revolution and its mode families.

The angular sector k of the Laplace-Beltrami operator reduces to the weighted
Sturm-Liouville problem -(1/R)(R f')' + (k^2/R^2) f = lambda f on (0, L) with
weight R(s) ds.  Modes are computed on a pole-truncated interval with a
symmetric flux-form discretization.  Ball norms deep inside the classically
forbidden region fall far below the eigenvector noise floor of double
precision, so they are evaluated there through a log-domain Riccati
integration of the radial equation, spliced onto the eigenvector where it is
trustworthy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import eigh_tridiagonal

from . import agmon
from .geometry import EquatorData, RevolutionProfile, equator_data

_TRUST_FRACTION = 1e-5  # eigenvector components below this (relative) are noise-suspect


class SolverError(RuntimeError):
    """Eigensolve failed or produced an inconsistent spectrum."""


class RegressionError(RuntimeError):
    """Too few usable points for a decay regression."""


@dataclass
class Mode:
    """One radial eigenmode, normalized to 2*pi * sum(w * f^2) = 1."""

    k: int
    n: int
    lam: float
    grid: np.ndarray
    f: np.ndarray
    weights: np.ndarray
    profile: RevolutionProfile
    delta: float

    @cached_property
    def _fmax(self) -> float:
        return float(np.max(np.abs(self.f)))

    @cached_property
    def _trust_start(self) -> int:
        """Index of the first grid point with |f| above the noise-trust floor."""
        above = np.nonzero(np.abs(self.f) >= _TRUST_FRACTION * self._fmax)[0]
        return int(above[0]) if above.size else 0

    @cached_property
    def _cum_trapz(self) -> np.ndarray:
        """Cumulative trapezoid of f^2 R from the left cutoff to each node.

        The mode vanishes at the cutoffs, so summing to the last node
        reproduces the normalization rule exactly.
        """
        h = float(self.grid[1] - self.grid[0])
        dens = self.weights / h * self.f**2  # R_i f_i^2
        out = np.empty_like(dens)
        out[0] = 0.5 * h * dens[0]
        np.cumsum(0.5 * h * (dens[:-1] + dens[1:]), out=out[1:])
        out[1:] += out[0]
        return out

    @cached_property
    def _tail(self):
        if self.n != 0:
            raise SolverError("log-domain tail evaluation requires a nodeless (n=0) mode")
        if self.k < 1:
            raise SolverError("log-domain tail evaluation requires k >= 1")
        return _TailSolution(self)


class _TailSolution:
    """Pole-regular radial solution integrated outward in log-derivative form.

    State: u = f'/f, ell = log(f/f(s_a)), and the rescaled trailing integral
    m(s) = exp(-2 ell(s)) * integral_{0}^{s} exp(2 ell) R dy, which obeys
    m' = -2 u m + R.  Outward integration is stable in the forbidden region
    (the pole-regular solution is the growing one) and f has no zeros for
    n = 0, so u stays finite.
    """

    def __init__(self, mode: Mode):
        p = mode.profile
        k, lam = mode.k, mode.lam
        self.s_a = mode.delta / 4.0
        i_match = max(mode._trust_start, 1)
        i_peak = int(np.argmax(np.abs(mode.f)))
        i_match = min(i_match, max(i_peak - 1, 1))
        self.s_match = float(mode.grid[i_match])

        u0 = k * float(p.dR(self.s_a)) / float(p.R(self.s_a))
        m0 = self._pole_piece(p, k, self.s_a)

        def rhs(s, y):
            u, _, m = y
            r = float(p.R(s))
            dr = float(p.dR(s))
            du = -u * u - (dr / r) * u - (lam - (k / r) ** 2)
            return (du, u, -2.0 * u * m + r)

        sol = solve_ivp(
            rhs, (self.s_a, self.s_match), (u0, 0.0, m0),
            method="RK45", dense_output=True, rtol=1e-10, atol=(1e-8, 1e-12, 1e-16),
            max_step=(self.s_match - self.s_a) / 50.0,
        )
        if not sol.success:
            raise SolverError(f"tail integration failed for k={k}: {sol.message}")
        self._sol = sol
        ell_match = float(sol.y[1, -1])
        f_match = float(mode.f[i_match])
        self.offset = math.log(abs(f_match)) - ell_match

    @staticmethod
    def _pole_piece(p: RevolutionProfile, k: int, s_a: float) -> float:
        # Below s_a the regular solution behaves like (R(s)/R(s_a))^k.
        ra = float(p.R(s_a))
        val, _ = quad(
            lambda y: (float(p.R(y)) / ra) ** (2 * k) * float(p.R(y)),
            0.0, s_a, epsabs=0.0, epsrel=1e-10,
        )
        return val

    def log_partial_norm2(self, r: float) -> float:
        """log( integral_0^r f^2 R ds ) for the spliced radial solution."""
        if r <= self.s_a:
            raise ValueError("radius below the tail start")
        if r > self.s_match * (1.0 + 1e-12):
            raise ValueError("radius beyond the matching point; use the eigenvector")
        u, ell, m = (float(v) for v in self._sol.sol(min(r, self.s_match)))
        if m <= 0:
            raise SolverError("trailing integral lost positivity")
        return 2.0 * (ell + self.offset) + math.log(m)


def harmonic_prediction(
    p: RevolutionProfile, k: int, eq: EquatorData | None = None
) -> float:
    """Two-term eigenvalue prediction k^2/Rmax^2 + k sqrt(|R''(s0)|/Rmax^3)."""
    eq = eq or equator_data(p)
    return k**2 / eq.Rmax**2 + k * math.sqrt(eq.c0)


@dataclass
class ModeFamily:
    """Modes indexed by (k, n) on a shared profile and discretization."""

    profile: RevolutionProfile
    grid_size: int
    n_max: int
    delta: float
    modes: dict = field(default_factory=dict)

    @property
    def ks(self) -> list[int]:
        return sorted({k for k, _ in self.modes})

    def mode(self, k: int, n: int = 0) -> Mode:
        return self.modes[(k, n)]

    def add(self, mode: Mode) -> None:
        self.modes[(mode.k, mode.n)] = mode

    def check_monotonicity(self) -> None:
        for k in self.ks:
            lams = [self.modes[(k, n)].lam for n in range(self.n_max + 1) if (k, n) in self.modes]
            if any(b <= a for a, b in zip(lams, lams[1:])):
                raise SolverError(f"eigenvalues not increasing in n at k={k}")
        ground = [self.modes[(k, 0)].lam for k in self.ks if (k, 0) in self.modes]
        if any(b <= a for a, b in zip(ground, ground[1:])):
            raise SolverError("ground eigenvalues not increasing in k")

    def export_csv(self, eigen_path, radial_path=None) -> None:
        with open(eigen_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "n", "lambda"])
            for (k, n) in sorted(self.modes):
                w.writerow([k, n, f"{self.modes[(k, n)].lam:.17g}"])
        if radial_path is not None:
            with open(radial_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["k", "n", "s", "f"])
                for (k, n) in sorted(self.modes):
                    m = self.modes[(k, n)]
                    for s, v in zip(m.grid, m.f):
                        w.writerow([k, n, f"{s:.17g}", f"{v:.17g}"])


def _default_delta(p: RevolutionProfile, grid_size: int) -> float:
    return max(5.0 * p.L / grid_size, 1e-3 * p.L)


def solve_reduced(
    p: RevolutionProfile,
    k: int,
    n_max: int = 0,
    grid_size: int = 2000,
    delta: float | None = None,
) -> ModeFamily:
    """Solve the weighted radial problem for one angular number k.

    Discretizes (1/R)(R f')' in flux form on (delta, L - delta): Dirichlet
    cutoffs for k >= 1 (the k^2/R^2 barrier makes modes negligible there),
    natural reflecting conditions for k = 0.  The scaled matrix is symmetric
    tridiagonal, so eigenvalues are real and eigenvectors R h-orthogonal.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if grid_size < 200:
        raise ValueError("grid_size must be >= 200")
    delta = delta if delta is not None else _default_delta(p, grid_size)
    a, b = delta, p.L - delta
    h = (b - a) / grid_size
    nodes = a + h * np.arange(grid_size + 1)
    r_nodes = np.asarray(p.R(nodes), dtype=float)
    r_mid = np.asarray(p.R(nodes[:-1] + 0.5 * h), dtype=float)

    if k >= 1:
        s = nodes[1:-1]
        r = r_nodes[1:-1]
        w = r * h
        diag = (r_mid[:-1] + r_mid[1:]) / h + h * k**2 / r
        off = -r_mid[1:-1] / h
    else:
        s = nodes
        r = r_nodes
        w = r * h
        w[0] *= 0.5
        w[-1] *= 0.5
        diag = np.empty_like(r)
        diag[0] = r_mid[0] / h
        diag[-1] = r_mid[-1] / h
        diag[1:-1] = (r_mid[:-1] + r_mid[1:]) / h
        off = -r_mid / h

    scale = np.sqrt(w)
    d = diag / w
    e = off / (scale[:-1] * scale[1:])
    try:
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, n_max))
    except Exception as exc:  # pragma: no cover - LAPACK failure surface
        raise SolverError(f"eigensolve failed for k={k}: {exc}") from exc

    fam = ModeFamily(profile=p, grid_size=grid_size, n_max=n_max, delta=delta)
    for n in range(n_max + 1):
        f = vecs[:, n] / scale
        norm2 = 2.0 * math.pi * float(np.sum(w * f * f))
        f = f / math.sqrt(norm2)
        i_peak = int(np.argmax(np.abs(f)))
        if f[i_peak] < 0:
            f = -f
        fam.add(Mode(k=k, n=n, lam=float(vals[n]), grid=s.copy(), f=f,
                     weights=w.copy(), profile=p, delta=delta))
    return fam


def solve_family(
    p: RevolutionProfile,
    ks,
    n_max: int = 0,
    grid_size: int = 2000,
    delta: float | None = None,
) -> ModeFamily:
    """Solve for a range of angular numbers into one family."""
    fam = ModeFamily(profile=p, grid_size=grid_size, n_max=n_max,
                     delta=delta if delta is not None else _default_delta(p, grid_size))
    for k in ks:
        sub = solve_reduced(p, int(k), n_max, grid_size, fam.delta)
        for m in sub.modes.values():
            fam.add(m)
    fam.check_monotonicity()
    return fam


def log_ball_norm(mode: Mode, r: float) -> float:
    """log of the squared L2 norm of the mode on the geodesic ball B(N, r).

    Uses the eigenvector quadrature where components are trusted and the
    Riccati tail below that, so values like exp(-300) remain meaningful.
    """
    p = mode.profile
    if not 0.0 < r <= p.L:
        raise ValueError(f"r={r} outside (0, L]")
    s_trust = mode.grid[mode._trust_start]
    if r >= s_trust:
        # Trapezoid to the last node below r plus a linearly interpolated
        # partial segment: consistent with the normalization rule, and the
        # cutoff-position quantization stays below 1e-6 relative.
        h = float(mode.grid[1] - mode.grid[0])
        dens = mode.weights / h * mode.f**2
        j = int(np.searchsorted(mode.grid, r, side="right")) - 1
        if j >= mode.grid.size - 1:
            total = float(mode._cum_trapz[-1]) + 0.5 * h * float(dens[-1])
        else:
            frac = (r - mode.grid[j]) / h
            d_r = dens[j] + (dens[j + 1] - dens[j]) * frac
            total = float(mode._cum_trapz[j]) + 0.5 * (r - mode.grid[j]) * (dens[j] + d_r)
        total *= 2.0 * math.pi
        if total > 0.0:
            return math.log(min(total, 1.0))
        # all-noise window; fall through to the tail
    tail = mode._tail
    if r <= tail.s_a:
        ra = float(p.R(tail.s_a))
        val, _ = quad(lambda y: (float(p.R(y)) / ra) ** (2 * mode.k) * float(p.R(y)),
                      0.0, r, epsabs=0.0, epsrel=1e-10)
        return math.log(2.0 * math.pi * val) + 2.0 * tail.offset
    return math.log(2.0 * math.pi) + tail.log_partial_norm2(r)


def ball_norm(mode: Mode, r: float) -> float:
    """Squared L2 norm on B(N, r); may underflow to 0.0 for deep tails."""
    return math.exp(log_ball_norm(mode, r))


# ---------------------------------------------------------------------------
# Closed-form sphere norms


def wallis_sin_integral(k: int) -> float:
    """integral_0^pi sin(s)^(2k+1) ds = 2 * prod_{j<=k} 2j/(2j+1), exactly."""
    out = 2.0
    for j in range(1, k + 1):
        out *= (2.0 * j) / (2.0 * j + 1.0)
    return out


def sphere_ck2(k: int) -> float:
    """Normalization c_k^2 of the equatorial mode c_k sin(s)^k e^{ik theta}."""
    return 1.0 / (2.0 * math.pi * wallis_sin_integral(k))


@dataclass(frozen=True)
class SphereNorm:
    value: float            # central value of the squared ball norm
    remainder_bound: float  # relative bound on the neglected remainder
    ck2: float
    ck_asymptotic: float    # k^{1/4} / (2^{1/2} pi^{3/4})


def sphere_exact_norm(k: int, r: float) -> SphereNorm:
    """Closed-form squared norm of the equatorial sphere mode on B(N, r).

    value = (c_k^2 pi / (k+1)) sin(r)^{2k+2} / cos(r); the true squared norm
    is value * (1 + rho) with |rho| <= tan(r)^2 / (2k+2).
    """
    if not 0.0 < r < math.pi / 2:
        raise ValueError(f"r={r} outside (0, pi/2)")
    ck2 = sphere_ck2(k)
    value = ck2 * math.pi / (k + 1) * math.sin(r) ** (2 * k + 2) / math.cos(r)
    bound = math.tan(r) ** 2 / (2 * k + 2)
    ck_asym = k ** 0.25 / (math.sqrt(2.0) * math.pi ** 0.75) if k > 0 else 0.0
    return SphereNorm(value=value, remainder_bound=bound, ck2=ck2, ck_asymptotic=ck_asym)


def sphere_quadrature_norm(k: int, r: float) -> float:
    """Squared ball norm 2 pi c_k^2 * integral_0^r sin^{2k+1}, by quadrature."""
    if not 0.0 < r < math.pi:
        raise ValueError(f"r={r} outside (0, pi)")
    val, _ = quad(lambda s: math.sin(s) ** (2 * k + 1), 0.0, r,
                  epsabs=0.0, epsrel=1e-13, limit=200)
    return 2.0 * math.pi * sphere_ck2(k) * val


def sphere_radial(k: int, s: np.ndarray) -> np.ndarray:
    """Exact normalized radial part c_k sin(s)^k of the equatorial mode."""
    return math.sqrt(sphere_ck2(k)) * np.sin(np.asarray(s, dtype=float)) ** k


# ---------------------------------------------------------------------------
# Decay regression and vanishing order


@dataclass(frozen=True)
class DecayRow:
    r: float
    slope: float
    stderr: float
    dA_Rmax: float
    passed: bool

    def as_dict(self) -> dict:
        return {"r": self.r, "slope": self.slope, "stderr": self.stderr,
                "dA_Rmax": self.dA_Rmax, "pass": self.passed}


@dataclass
class DecayReport:
    rows: list[DecayRow]
    k_window: tuple[int, int]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def blowup_ratios(self) -> list[tuple[float, float]]:
        """(r, slope/|log r|) for rows with r < 1: the log-blowup diagnostic."""
        return [(row.r, row.slope / abs(math.log(row.r)))
                for row in self.rows if 0.0 < row.r < 1.0]

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([row.as_dict() for row in self.rows], fh, indent=2)
            fh.write("\n")


def _least_squares_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    resid = y - ym - slope * (x - xm)
    dof = max(n - 2, 1)
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return slope, stderr


def agmon_decay_check(
    family: ModeFamily,
    radii,
    window: float = 0.5,
    slope_tol: float = 0.05,
    eq: EquatorData | None = None,
) -> DecayReport:
    """Regress -log ||mode_k||_{B(N,r)} against sqrt(lambda_k) per radius.

    The fitted slope must dominate d_A(r) * R(s0) up to slope_tol; the ratio
    slope/|log r| is also reported for shrinking radii (logarithmic blow-up
    of the localization exponent).
    """
    eq = eq or equator_data(family.profile)
    ks = [k for k in family.ks if k >= 1]
    if len(ks) < 5:
        raise RegressionError("need at least 5 angular numbers")
    k_lo = ks[0] + int(math.ceil((ks[-1] - ks[0]) * (1.0 - window)))
    used = [k for k in ks if k >= k_lo]
    if len(used) < 5:
        raise RegressionError("regression window has fewer than 5 points")

    rows = []
    for r in radii:
        xs, ys = [], []
        for k in used:
            m = family.mode(k, 0)
            xs.append(math.sqrt(m.lam))
            ys.append(-0.5 * log_ball_norm(m, float(r)))
        slope, err = _least_squares_slope(np.array(xs), np.array(ys))
        target = agmon.agmon_distance(family.profile, float(r), eq) * eq.Rmax
        rows.append(DecayRow(r=float(r), slope=slope, stderr=err, dA_Rmax=target,
                             passed=slope >= (1.0 - slope_tol) * target))
    return DecayReport(rows=rows, k_window=(used[0], used[-1]))


@dataclass(frozen=True)
class VanishingOrder:
    D_hat: float
    implied_order: int


def vanishing_order(norms, dim: int, tol: float = 0.25) -> VanishingOrder:
    """Log-log slope of ball norms and the derivative-vanishing order it implies.

    A bound ||f||_{L2(B(0,r))} <= C r^D forces all derivatives of order
    < D - dim/2 to vanish at 0; the estimate floors D_hat - dim/2 with a
    small slack for regression noise.
    """
    pts = [(float(r), float(v)) for r, v in norms]
    if len(pts) < 5:
        raise RegressionError("need at least 5 radii")
    rs = np.array([r for r, _ in pts])
    vs = np.array([v for _, v in pts])
    if np.any(vs <= 0.0):
        raise ValueError("norms must be positive")
    if rs.max() / rs.min() < 10.0:
        raise RegressionError("radii must span at least a decade")
    slope, _ = _least_squares_slope(np.log(rs), np.log(vs))
    implied = max(0, math.floor(slope - dim / 2.0 + tol))
    return VanishingOrder(D_hat=slope, implied_order=implied)


def cutoff_sensitivity(
    p: RevolutionProfile, k: int, grid_size: int, r_probe: float | None = None
) -> tuple[float, float]:
    """Relative change of (lambda, ball norm) when the pole cutoff is halved."""
    d0 = _default_delta(p, grid_size)
    m1 = solve_reduced(p, k, 0, grid_size, delta=d0).mode(k, 0)
    m2 = solve_reduced(p, k, 0, grid_size, delta=d0 / 2.0).mode(k, 0)
    dlam = abs(m2.lam - m1.lam) / m1.lam
    if r_probe is None:
        return dlam, 0.0
    b1 = log_ball_norm(m1, r_probe)
    b2 = log_ball_norm(m2, r_probe)
    return dlam, abs(math.expm1(b2 - b1))
