"""Convexified Carleman weights and discrete verification of their estimates.

Weights phi = e^{lambda Psi} with f = 2 lambda^2 |grad Psi|_g^2 make the
pointwise quantities

    B(X) = 2 Hess(phi)(X, X) - (Lap phi) |X|_g^2 + f |X|_g^2,
    E    = 2 Hess(phi)(grad phi, grad phi) + (Lap phi) |grad phi|_g^2
           - f |grad phi|_g^2,

positive once lambda exceeds a finite threshold; their minima certify the
constant C0 in the weighted inequality

    (C0/3) (tau^3 ||e^{tau phi} v grad phi||^2 + tau ||e^{tau phi} grad v||^2)
        <= ||e^{tau phi} Lap_g v||^2        (v compactly supported),

valid for tau above an explicit threshold built from f, Lap phi and C0.  All
fields live on uniform grids with Lipschitz metrics; Hessians carry the
Christoffel correction, which uses only first derivatives of the metric.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class WeightError(ValueError):
    """Weight construction failed (vanishing gradient, bad parameters)."""


class MetricClassError(ValueError):
    """Metric violates the requested ellipticity/Lipschitz class."""


# ---------------------------------------------------------------------------
# Grids and metric fields


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the unit interval (dim 1) or unit square (dim 2)."""

    dim: int
    n: int

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        x = np.linspace(0.0, 1.0, self.n)
        return (x,) * self.dim

    def meshgrid(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def interior(self, band: int) -> tuple[slice, ...]:
        return (slice(band, self.n - band),) * self.dim


@dataclass
class MetricField:
    """Nodewise metric: scalar g in 1D; symmetric (g11, g12, g22) in 2D."""

    grid: Grid
    comps: tuple[np.ndarray, ...]  # (g,) or (g11, g12, g22)

    @classmethod
    def flat(cls, grid: Grid) -> "MetricField":
        shape = (grid.n,) * grid.dim
        one = np.ones(shape)
        if grid.dim == 1:
            return cls(grid, (one,))
        return cls(grid, (one.copy(), np.zeros(shape), one.copy()))

    @property
    def det(self) -> np.ndarray:
        if self.grid.dim == 1:
            return self.comps[0]
        g11, g12, g22 = self.comps
        return g11 * g22 - g12 * g12

    @property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(self.det)

    def inverse(self) -> tuple[np.ndarray, ...]:
        if self.grid.dim == 1:
            return (1.0 / self.comps[0],)
        g11, g12, g22 = self.comps
        d = self.det
        return (g22 / d, -g12 / d, g11 / d)

    def eig_bounds(self) -> tuple[float, float]:
        """Nodewise extreme eigenvalues relative to the flat metric."""
        if self.grid.dim == 1:
            g = self.comps[0]
            return float(np.min(g)), float(np.max(g))
        g11, g12, g22 = self.comps
        mean = 0.5 * (g11 + g22)
        rad = np.sqrt((0.5 * (g11 - g22)) ** 2 + g12**2)
        return float(np.min(mean - rad)), float(np.max(mean + rad))

    def lipschitz_seminorm(self) -> float:
        h = self.grid.h
        worst = 0.0
        for c in self.comps:
            grads = np.gradient(c, h) if self.grid.dim == 1 else np.gradient(c, h, h)
            if self.grid.dim == 1:
                grads = (grads,)
            for gr in grads:
                worst = max(worst, float(np.max(np.abs(gr))))
        return worst

    def check_class(self, eps: float, D: float) -> None:
        lo, hi = self.eig_bounds()
        if lo < eps - 1e-12 or hi > D + 1e-12:
            raise MetricClassError(f"eigenvalue range [{lo:.4f}, {hi:.4f}] outside [{eps}, {D}]")
        lip = max(self.lipschitz_seminorm(), hi)
        if lip > D + 1e-12:
            raise MetricClassError(f"W^(1,inf) size {lip:.4f} exceeds {D}")


def sample_metric(
    grid: Grid,
    rng: np.random.Generator,
    eps: float = 0.8,
    D: float = 1.25,
    amplitude: float = 0.02,
    slope: float = 0.03,
) -> MetricField:
    """Random smooth member of the Lipschitz class around the flat metric.

    Amplitude and slope keep the samples well inside the class so that a
    single weight certified on the flat metric survives the whole family;
    class membership is verified, not assumed.
    """
    mesh = grid.meshgrid()

    def scalar_field():
        p = int(rng.integers(1, 3))
        q = int(rng.integers(1, 3))
        ph1, ph2 = rng.uniform(0, 2 * math.pi, size=2)
        freq = max(p, q)
        a = min(amplitude, slope / (math.pi * freq)) * rng.uniform(0.3, 1.0)
        if grid.dim == 1:
            return a * np.sin(math.pi * p * mesh[0] + ph1)
        return a * np.sin(math.pi * p * mesh[0] + ph1) * np.sin(math.pi * q * mesh[1] + ph2)

    if grid.dim == 1:
        m = MetricField(grid, (1.0 + scalar_field(),))
    else:
        g11 = 1.0 + scalar_field()
        g22 = 1.0 + scalar_field()
        g12 = 0.5 * scalar_field()
        m = MetricField(grid, (g11, g12, g22))
    m.check_class(eps, D)
    return m


# ---------------------------------------------------------------------------
# Differential operators (centered differences; one-sided at edges)


def _grad(F: np.ndarray, grid: Grid) -> tuple[np.ndarray, ...]:
    h = grid.h
    if grid.dim == 1:
        return (np.gradient(F, h, edge_order=2),)
    gx, gy = np.gradient(F, h, h, edge_order=2)
    return (gx, gy)


def raise_index(dF: tuple, metric: MetricField) -> tuple[np.ndarray, ...]:
    inv = metric.inverse()
    if metric.grid.dim == 1:
        return (inv[0] * dF[0],)
    i11, i12, i22 = inv
    return (i11 * dF[0] + i12 * dF[1], i12 * dF[0] + i22 * dF[1])


def grad_norm2(dF: tuple, metric: MetricField) -> np.ndarray:
    V = raise_index(dF, metric)
    out = dF[0] * V[0]
    if metric.grid.dim == 2:
        out = out + dF[1] * V[1]
    return out


def laplace_beltrami(F: np.ndarray, metric: MetricField) -> np.ndarray:
    h = metric.grid.h
    sd = metric.sqrt_det
    inv = metric.inverse()
    dF = _grad(F, metric.grid)
    if metric.grid.dim == 1:
        flux = sd * inv[0] * dF[0]
        return np.gradient(flux, h, edge_order=2) / sd
    i11, i12, i22 = inv
    flux_x = sd * (i11 * dF[0] + i12 * dF[1])
    flux_y = sd * (i12 * dF[0] + i22 * dF[1])
    div = np.gradient(flux_x, h, axis=0, edge_order=2) + np.gradient(flux_y, h, axis=1, edge_order=2)
    return div / sd


def christoffel(metric: MetricField) -> np.ndarray:
    """Gamma^k_{ij} from centered differences of the metric components."""
    grid = metric.grid
    h = grid.h
    if grid.dim == 1:
        g = metric.comps[0]
        dg = np.gradient(g, h, edge_order=2)
        return (0.5 * dg / g)[None, None, None, ...]  # Gamma^0_00
    g11, g12, g22 = metric.comps
    gmat = np.stack([np.stack([g11, g12]), np.stack([g12, g22])])  # (2,2,n,n)
    dg = np.stack(
        [np.stack([np.gradient(gmat[i, j], h, axis=a, edge_order=2) for a in range(2)])
         for i in range(2) for j in range(2)]
    ).reshape(2, 2, 2, *g11.shape)  # dg[i, j, a] = d_a g_ij
    inv = metric.inverse()
    imat = np.stack([np.stack([inv[0], inv[1]]), np.stack([inv[1], inv[2]])])
    gamma = np.zeros((2, 2, 2, *g11.shape))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                acc = 0.0
                for l in range(2):
                    acc = acc + imat[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[i, j, l])
                gamma[k, i, j] = 0.5 * acc
    return gamma


def hessian(F: np.ndarray, metric: MetricField) -> np.ndarray:
    """Covariant Hessian H_ij = d2_ij F - Gamma^k_ij d_k F, shape (d,d,grid)."""
    grid = metric.grid
    h = grid.h
    dF = _grad(F, grid)
    gamma = christoffel(metric)
    if grid.dim == 1:
        d2 = np.gradient(dF[0], h, edge_order=2)
        return (d2 - gamma[0, 0, 0] * dF[0])[None, None, ...]
    H = np.empty((2, 2, *F.shape))
    for i in range(2):
        for j in range(2):
            d2 = np.gradient(dF[i], h, axis=j, edge_order=2)
            H[i, j] = d2 - gamma[0, i, j] * dF[0] - gamma[1, i, j] * dF[1]
    return 0.5 * (H + np.swapaxes(H, 0, 1))


def hessian_g_norm(H: np.ndarray, metric: MetricField) -> np.ndarray:
    """Nodewise |H|_g = sup |H(X,X)| / |X|_g^2 (spectral norm of g^{-1} H)."""
    inv = metric.inverse()
    if metric.grid.dim == 1:
        return np.abs(inv[0] * H[0, 0])
    i11, i12, i22 = inv
    a = i11 * H[0, 0] + i12 * H[0, 1]
    b = i11 * H[0, 1] + i12 * H[1, 1]
    c = i12 * H[0, 0] + i22 * H[0, 1]
    d = i12 * H[0, 1] + i22 * H[1, 1]
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    return np.maximum(np.abs(0.5 * (tr + disc)), np.abs(0.5 * (tr - disc)))


# ---------------------------------------------------------------------------
# Weights


@dataclass
class WeightPair:
    """Convexified weight phi = e^{lambda Psi} with f = 2 lambda^2 |grad Psi|^2."""

    Psi: np.ndarray
    lam: float
    phi: np.ndarray
    f: np.ndarray
    dPsi: tuple[np.ndarray, ...]
    grad_Psi_norm2: np.ndarray
    metric: MetricField

    def export_csv(self, path) -> None:
        import csv as _csv

        grid = self.metric.grid
        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh, lineterminator="\n")
            if grid.dim == 1:
                w.writerow(["x", "Psi", "phi", "f"])
                for x, ps, ph, ff in zip(grid.axes[0], self.Psi, self.phi, self.f):
                    w.writerow([f"{x:.17g}", f"{ps:.17g}", f"{ph:.17g}", f"{ff:.17g}"])
            else:
                w.writerow(["x", "y", "Psi", "phi", "f"])
                X, Y = grid.meshgrid()
                for idx in np.ndindex(self.Psi.shape):
                    w.writerow([f"{X[idx]:.17g}", f"{Y[idx]:.17g}",
                                f"{self.Psi[idx]:.17g}", f"{self.phi[idx]:.17g}",
                                f"{self.f[idx]:.17g}"])


def convexify(Psi: np.ndarray, metric: MetricField, lam: float) -> WeightPair:
    """Build the exponential convexification of Psi over this metric."""
    if lam <= 0:
        raise WeightError("lambda must be positive")
    dPsi = _grad(Psi, metric.grid)
    gn2 = grad_norm2(dPsi, metric)
    band = 2
    core = metric.grid.interior(band)
    if float(np.min(gn2[core])) <= 1e-12:
        raise WeightError("grad Psi vanishes on the working region")
    phi = np.exp(lam * Psi)
    f = 2.0 * lam**2 * gn2
    return WeightPair(Psi=Psi, lam=lam, phi=phi, f=f, dPsi=dPsi,
                      grad_Psi_norm2=gn2, metric=metric)


def anchored_distance_weight(grid: Grid, anchor, lam: float,
                             metric: MetricField | None = None) -> WeightPair:
    """Weight from Psi = min_dist - |x - anchor| (shifted so max Psi = 0)."""
    metric = metric or MetricField.flat(grid)
    if grid.dim == 1:
        x = grid.axes[0]
        dist = np.abs(x - float(anchor))
    else:
        X, Y = grid.meshgrid()
        ax, ay = anchor
        dist = np.hypot(X - ax, Y - ay)
    Psi = float(np.min(dist)) - dist
    return convexify(Psi, metric, lam)


# ---------------------------------------------------------------------------
# Subellipticity


@dataclass(frozen=True)
class SubellipticityResult:
    minB: float
    minE: float
    bound_minB: float
    bound_minE: float
    exact_vs_bound_gap: float  # min over nodes of (exact min_X B - bound); >= 0 expected

    @property
    def positive(self) -> bool:
        return self.minB > 0.0 and self.minE > 0.0


def _unit_directions(metric: MetricField, dPsi, n_random: int, rng) -> list:
    """Random g-unit vectors plus the normalized gradient and its rotation."""
    V = raise_index(dPsi, metric)
    dirs = []
    if metric.grid.dim == 1:
        dirs.append((np.ones_like(V[0]),))
    else:
        dirs.append(V)
        dirs.append((-dPsi[1], dPsi[0]))  # rotated covector components, raised below
        dirs[1] = raise_index(dirs[1], metric)
        for _ in range(n_random):
            a, b = rng.standard_normal(2)
            dirs.append((a * np.ones_like(V[0]), b * np.ones_like(V[0])))
    out = []
    for X in dirs:
        if metric.grid.dim == 1:
            n2 = metric.comps[0] * X[0] ** 2
            out.append((X[0] / np.sqrt(n2),))
        else:
            g11, g12, g22 = metric.comps
            n2 = g11 * X[0] ** 2 + 2 * g12 * X[0] * X[1] + g22 * X[1] ** 2
            n2 = np.maximum(n2, 1e-300)
            out.append((X[0] / np.sqrt(n2), X[1] / np.sqrt(n2)))
    return out


def subellipticity_minima(
    weight: WeightPair,
    directions: int = 8,
    rng: np.random.Generator | None = None,
    band: int = 2,
) -> SubellipticityResult:
    """Exact minima of B/|X|^2 and E/|grad phi|^2 over the working region.

    Evaluates the exact expressions on random g-unit directions per node plus
    the gradient direction and its orthogonal, and compares against the
    closed-form minorants lambda e^{lambda Psi}(lambda |grad Psi|^2
    -+ 2|Hess Psi| -+ Lap Psi); the exact minima always dominate.
    """
    rng = rng or np.random.default_rng(0)
    metric = weight.metric
    grid = metric.grid
    lam = weight.lam
    core = grid.interior(band)

    H = hessian(weight.Psi, metric)
    lap = laplace_beltrami(weight.Psi, metric)
    gn2 = weight.grad_Psi_norm2
    pref = lam * weight.phi

    minB = math.inf
    bound_gap = math.inf
    Hnorm = hessian_g_norm(H, metric)
    boundB_field = pref * (lam * gn2 - 2.0 * Hnorm - lap)
    boundE_field = pref * (lam * gn2 - 2.0 * Hnorm + lap)

    exact_min_node = np.full_like(weight.phi, math.inf)
    for X in _unit_directions(metric, weight.dPsi, directions, rng):
        if grid.dim == 1:
            hxx = H[0, 0] * X[0] * X[0]
            dpx = weight.dPsi[0] * X[0]
        else:
            hxx = (H[0, 0] * X[0] ** 2 + 2.0 * H[0, 1] * X[0] * X[1] + H[1, 1] * X[1] ** 2)
            dpx = weight.dPsi[0] * X[0] + weight.dPsi[1] * X[1]
        bval = pref * (2.0 * hxx + 2.0 * lam * dpx**2 + lam * gn2 - lap)
        exact_min_node = np.minimum(exact_min_node, bval)
    minB = float(np.min(exact_min_node[core]))
    bound_gap = float(np.min((exact_min_node - boundB_field)[core]))

    V = raise_index(weight.dPsi, metric)
    if grid.dim == 1:
        hvv = H[0, 0] * V[0] * V[0]
    else:
        hvv = H[0, 0] * V[0] ** 2 + 2.0 * H[0, 1] * V[0] * V[1] + H[1, 1] * V[1] ** 2
    e_norm = pref * (2.0 * hvv / gn2 + lam * gn2 + lap)
    minE = float(np.min(e_norm[core]))

    return SubellipticityResult(
        minB=minB, minE=minE,
        bound_minB=float(np.min(boundB_field[core])),
        bound_minE=float(np.min(boundE_field[core])),
        exact_vs_bound_gap=bound_gap,
    )


def lambda_star(grid_or_weightless, anchor, metric: MetricField | None = None,
                lam_lo: float = 1e-3, lam_hi: float = 64.0, band: int = 2) -> float:
    """Smallest lambda with positive subellipticity minima, by bisection."""
    grid = grid_or_weightless

    def minima(lam):
        w = anchored_distance_weight(grid, anchor, lam, metric)
        res = subellipticity_minima(w, directions=4, band=band)
        return min(res.minB, res.minE)

    if minima(lam_hi) <= 0:
        raise WeightError("no positive-subellipticity lambda below the cap")
    lo, hi = lam_lo, lam_hi
    if minima(lo) > 0:
        return lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if minima(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-4 * hi:
            break
    return hi


# ---------------------------------------------------------------------------
# Inequality checks


def recommended_c0(sub: SubellipticityResult) -> float:
    """Half of the largest admissible constant: C0 = min(minB, minE)/4."""
    m = min(sub.minB, sub.minE)
    if m <= 0:
        raise WeightError("subellipticity minima not positive; raise lambda")
    return m / 4.0


def tau_threshold(weight: WeightPair, C0: float, band: int = 2) -> float:
    """tau0 = c(phi)/C0 (||f - Lap phi||_inf^2 + ||grad f||_inf / 2)."""
    metric = weight.metric
    core = metric.grid.interior(band)
    lap_phi = laplace_beltrami(weight.phi, metric)
    grad_phi_n2 = weight.lam**2 * weight.phi**2 * weight.grad_Psi_norm2
    c_phi = min(1.0, 1.0 / float(np.min(grad_phi_n2[core])))
    f_term = float(np.max(np.abs(weight.f - lap_phi)[core])) ** 2
    df = _grad(weight.f, metric.grid)
    grad_f = float(np.max(np.sqrt(np.maximum(grad_norm2(df, metric), 0.0))[core]))
    return c_phi / C0 * (f_term + 0.5 * grad_f)


def smooth_bump(grid: Grid, center, width: float) -> np.ndarray:
    """Compactly supported C-infinity bump on the grid."""
    if grid.dim == 1:
        t = (grid.axes[0] - float(center)) / width
    else:
        X, Y = grid.meshgrid()
        cx, cy = center
        t = np.hypot(X - cx, Y - cy) / width
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def random_bump(grid: Grid, rng: np.random.Generator, band: int = 2) -> np.ndarray:
    """Random bump whose support stays 4h plus the excluded band from edges."""
    margin = (band + 4) * grid.h
    w = rng.uniform(0.08, 0.22)
    lo, hi = margin + w, 1.0 - margin - w
    if lo >= hi:
        raise ValueError("grid too coarse for a supported bump")
    if grid.dim == 1:
        c = rng.uniform(lo, hi)
    else:
        c = (rng.uniform(lo, hi), rng.uniform(lo, hi))
    return smooth_bump(grid, c, w) * (1.0 + 0.5 * rng.standard_normal())


@dataclass(frozen=True)
class CarlemanRow:
    tau: float
    lhs: float
    rhs: float
    margin: float
    inconclusive: bool  # margin within -1e-3 * rhs of zero

    def as_dict(self) -> dict:
        return {"tau": self.tau, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, "inconclusive": self.inconclusive}


@dataclass
class CarlemanReport:
    lam: float
    C0: float
    tau0: float
    minB: float
    minE: float
    rows: list[CarlemanRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.margin >= 0.0 or r.inconclusive for r in self.rows)

    def to_json(self, path) -> None:
        payload = {"lambda": self.lam, "C0": self.C0, "tau0": self.tau0,
                   "minB": self.minB, "minE": self.minE,
                   "rows": [r.as_dict() for r in self.rows]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def carleman_inequality_check(
    weight: WeightPair,
    v: np.ndarray,
    tau: float,
    C0: float,
    tau0: float | None = None,
    band: int = 2,
) -> CarlemanRow:
    """One row of the weighted inequality for a compactly supported v.

    The weight is shifted by max phi before exponentiation (both sides scale
    identically), keeping exponents inside double range.  Refuses tau below
    the threshold, where the estimate carries no guarantee.
    """
    metric = weight.metric
    grid = metric.grid
    if tau0 is not None and tau < tau0 * (1.0 - 1e-9):
        raise WeightError(f"tau={tau} below threshold tau0={tau0}")
    support = np.abs(v) > 0
    edge = np.ones_like(v, dtype=bool)
    edge[grid.interior(band + 2)] = False
    if np.any(support & edge):
        raise WeightError("test function must vanish near the region edge")

    dV = metric.sqrt_det * grid.h**grid.dim
    phi_s = weight.phi - float(np.max(weight.phi))
    with np.errstate(under="ignore"):
        w2 = np.exp(2.0 * tau * phi_s)
    grad_phi_n2 = weight.lam**2 * weight.phi**2 * weight.grad_Psi_norm2
    dv = _grad(v, grid)
    gv2 = grad_norm2(dv, metric)
    lap_v = laplace_beltrami(v, metric)

    lhs = (C0 / 3.0) * (
        tau**3 * float(np.sum(w2 * v * v * grad_phi_n2 * dV))
        + tau * float(np.sum(w2 * gv2 * dV))
    )
    rhs = float(np.sum(w2 * lap_v * lap_v * dV))
    margin = rhs - lhs
    return CarlemanRow(tau=tau, lhs=lhs, rhs=rhs, margin=margin,
                       inconclusive=(margin < 0.0 and margin >= -1e-3 * rhs))


def conjugation_identity_residual(
    weight: WeightPair, u: np.ndarray, tau: float, band: int = 4
) -> float:
    """Discrete L2 residual of the conjugated-Laplacian expansion.

    Compares e^{tau phi} Lap(e^{-tau phi} u) against
    Lap u - 2 tau <grad phi, grad u> - tau (Lap phi) u + tau^2 |grad phi|^2 u;
    the difference converges at second order under grid refinement.
    """
    metric = weight.metric
    grid = metric.grid
    phi_s = weight.phi - float(np.max(weight.phi))
    lhs = np.exp(tau * phi_s) * laplace_beltrami(np.exp(-tau * phi_s) * u, metric)
    dphi = _grad(weight.phi, grid)
    du = _grad(u, grid)
    Vphi = raise_index(dphi, metric)
    cross = du[0] * Vphi[0]
    if grid.dim == 2:
        cross = cross + du[1] * Vphi[1]
    rhs = (laplace_beltrami(u, metric) - 2.0 * tau * cross
           - tau * laplace_beltrami(weight.phi, metric) * u
           + tau**2 * grad_norm2(dphi, metric) * u)
    core = grid.interior(band)
    dV = (metric.sqrt_det * grid.h**grid.dim)[core]
    diff = (lhs - rhs)[core]
    return math.sqrt(float(np.sum(diff * diff * dV)))
