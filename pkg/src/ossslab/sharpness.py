"""Sharpness pipeline: theta grids, the derivative formula, the
differential inequality, the beta_1 machinery with its synthetic
hypothesis checker, exponential-decay and mean-field diagnostics, and
closed-form critical points for the three planar families.

Conventions: theta_n(beta) is the probability that the origin connects to
the distance-n shell under the wired measure on the doubled (radius-2n)
box; S_n = sum_{k<n} theta_k with theta_0 = 1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import linregress

from .graph import LatticeSpec, build_box
from .measure import RandomClusterMeasure, connection_probability
from .mcmc import ChainSettings, estimate_theta
from .osss import covariance

__all__ = [
    "ThetaGrid",
    "theta_exact",
    "exact_theta_grid",
    "mc_theta_grid",
    "check_derivative_formula",
    "check_differential_inequality",
    "beta1_estimate",
    "BETA1_SLOPE_THRESHOLD",
    "Lemma31HypothesisError",
    "lemma31_synthetic_check",
    "exp_decay_fit",
    "mean_field_scan",
    "CriticalPointResult",
    "pc_solve",
    "duality_relation_check",
]


# ---------------------------------------------------------------------------
# theta grids


@dataclass
class ThetaGrid:
    betas: np.ndarray                  # sorted
    sizes: list[int]
    values: np.ndarray                 # (len(sizes), len(betas))
    half_widths: np.ndarray            # same shape; zeros for exact grids
    source: str                        # "exact" | "monte-carlo"
    family: str
    q: float
    coupling: float = 1.0
    convention: str = "doubled"
    n_samples: int = 0

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        if np.any(np.diff(self.betas) <= 0):
            raise ValueError("betas must be strictly increasing")
        if self.values.shape != (len(self.sizes), len(self.betas)):
            raise ValueError("values shape mismatch")
        if np.any((self.values < -1e-12) | (self.values > 1 + 1e-12)):
            raise ValueError("theta values must lie in [0, 1]")

    def theta_interp(self, k: float, j: int) -> float:
        """theta_k at beta index j, linearly interpolated in k with the
        convention theta_0 = 1."""
        ks = np.array([0.0] + [float(s) for s in self.sizes])
        vs = np.concatenate([[1.0], self.values[:, j]])
        return float(np.interp(k, ks, vs))

    def s_n(self, n: int, j: int) -> float:
        """S_n = sum_{k=0}^{n-1} theta_k; unmeasured sizes interpolated."""
        return sum(self.theta_interp(k, j) for k in range(n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["beta", "n", "theta", "half_width", "source"])
        for i, n in enumerate(self.sizes):
            for j, b in enumerate(self.betas):
                w.writerow([b, n, self.values[i, j], self.half_widths[i, j], self.source])
        return buf.getvalue()


def theta_exact(family: str, n: int, q: float, beta: float,
                coupling: float = 1.0, convention: str = "doubled") -> float:
    """Exact theta_n by full enumeration (small boxes only)."""
    radius = 2 * n if convention == "doubled" else n
    g = build_box(LatticeSpec(family, radius, coupling))
    m = RandomClusterMeasure(g, q=q, beta=beta, boundary="wired")
    return connection_probability(m, [g.origin], g.shell(n))


def exact_theta_grid(family: str, q: float, betas, sizes,
                     coupling: float = 1.0, convention: str = "doubled") -> ThetaGrid:
    betas = np.asarray(betas, dtype=float)
    vals = np.empty((len(sizes), len(betas)))
    for i, n in enumerate(sizes):
        for j, b in enumerate(betas):
            vals[i, j] = theta_exact(family, n, q, b, coupling, convention)
    return ThetaGrid(betas, list(sizes), vals, np.zeros_like(vals), "exact",
                     family, q, coupling, convention)


def mc_theta_grid(family: str, q: float, betas, sizes, settings: ChainSettings,
                  coupling: float = 1.0, convention: str = "doubled") -> ThetaGrid:
    betas = np.asarray(betas, dtype=float)
    vals = np.empty((len(sizes), len(betas)))
    hws = np.empty((len(sizes), len(betas)))
    for i, n in enumerate(sizes):
        for j, b in enumerate(betas):
            est = estimate_theta(LatticeSpec(family, n, coupling), q,
                                 settings, beta=b, convention=convention)
            vals[i, j] = est.mean
            hws[i, j] = est.half_width_95
    return ThetaGrid(betas, list(sizes), vals, hws, "monte-carlo", family, q,
                     coupling, convention,
                     n_samples=settings.chains * settings.samples_per_chain)


# ---------------------------------------------------------------------------
# derivative formula


def russo_prefactor(j: float, beta: float) -> float:
    """d/dbeta log(e^{beta J} - 1) = J e^{beta J}/(e^{beta J} - 1)."""
    return j / -math.expm1(-beta * j)


def check_derivative_formula(g, q: float, beta: float, h: float,
                             n: int | None = None, boundary: str = "wired") -> dict:
    """Central finite difference of theta against the exact covariance
    formula theta' = sum_e J_e e^{beta J_e}/(e^{beta J_e}-1) Cov(f, w_e),
    with an h-halving estimate of the convergence order."""
    if n is None:
        n = g.radius
    targets = g.shell(n)

    def theta(b):
        m = RandomClusterMeasure(g, q=q, beta=b, boundary=boundary)
        return connection_probability(m, [g.origin], targets)

    m0 = RandomClusterMeasure(g, q=q, beta=beta, boundary=boundary)
    from .measure import connectivity_event_table

    f_tab = connectivity_event_table(g, [g.origin], targets).astype(float)
    formula = sum(
        russo_prefactor(g.couplings[e], beta) * covariance(m0, f_tab, e)
        for e in range(g.n_edges)
    )

    def fd(step):
        return (theta(beta + step) - theta(beta - step)) / (2 * step)

    err_h = abs(fd(h) - formula)
    err_h2 = abs(fd(h / 2) - formula)
    ratio = err_h / err_h2 if err_h2 > 0 else float("inf")
    return {
        "q": q,
        "beta": beta,
        "h": h,
        "formula": formula,
        "fd_h": fd(h),
        "error_h": err_h,
        "error_h_half": err_h2,
        "richardson_ratio": ratio,
        "second_order": 3.0 <= ratio <= 5.0 or err_h2 < 1e-13,
    }


# ---------------------------------------------------------------------------
# differential inequality


def inequality_constant(family: str, q: float, beta0: float,
                        coupling: float = 1.0) -> float:
    """c(beta0) = (1 - theta_1(beta0))/8 * min_e J_e/(e^{beta0 J_e} - 1)."""
    th1 = theta_exact(family, 1, q, beta0, coupling, convention="doubled")
    return (1.0 - th1) / 8.0 * coupling / math.expm1(beta0 * coupling)


def check_differential_inequality(grid: ThetaGrid, c: float | None = None,
                                  beta0: float | None = None) -> dict:
    """theta_n' >= c * (n/S_n) * theta_n at interior grid points.

    Derivatives are central differences on the beta grid; Monte Carlo grids
    get CI-aware slack.  Violations are counted and the worst margin
    reported."""
    if len(grid.betas) < 3:
        raise ValueError("grid too sparse for central differences")
    if beta0 is None:
        beta0 = float(grid.betas[-1])
    if c is None:
        c = inequality_constant(grid.family, grid.q, beta0, grid.coupling)
    violations = []
    margins = []
    for i, n in enumerate(grid.sizes):
        for j in range(1, len(grid.betas) - 1):
            db = grid.betas[j + 1] - grid.betas[j - 1]
            lhs = (grid.values[i, j + 1] - grid.values[i, j - 1]) / db
            rhs = c * n / grid.s_n(n, j) * grid.values[i, j]
            slack = 1e-9
            if grid.source == "monte-carlo":
                slack += (grid.half_widths[i, j + 1] + grid.half_widths[i, j - 1]) / db \
                    + c * n * grid.half_widths[i, j]
            margin = lhs - rhs
            margins.append(margin)
            if margin < -slack:
                violations.append({"n": n, "beta": float(grid.betas[j]),
                                   "lhs": lhs, "rhs": rhs})
    return {
        "c": c,
        "beta0": beta0,
        "points_checked": len(margins),
        "violations": len(violations),
        "violation_list": violations[:10],
        "min_margin": min(margins) if margins else float("nan"),
    }


# ---------------------------------------------------------------------------
# beta_1

# Finite-size log-log slope of S_n at criticality over the window
# n in {4,...,32}; sits strictly below 1, so the crossing threshold is the
# calibrated critical-slope value rather than the asymptotic 1.
BETA1_SLOPE_THRESHOLD = 0.90


def beta1_estimate(grid: ThetaGrid, threshold: float = BETA1_SLOPE_THRESHOLD) -> dict:
    """beta_1 from the growth of S_n: regress log S_n on log n per beta and
    locate where the slope first reaches the threshold.

    The defining quantity is an n -> infinity limsup; at finite sizes the
    slope at criticality is below 1 (about 0.9 on the default window), so
    the crossing is taken at the calibrated threshold and the slopes per
    beta are reported for inspection."""
    if len(grid.sizes) < 3:
        raise ValueError("need at least 3 sizes to regress")
    sizes = np.array(sorted(grid.sizes), dtype=float)
    slopes = []
    for j in range(len(grid.betas)):
        s_vals = np.array([grid.s_n(int(n), j) for n in sizes])
        res = linregress(np.log(sizes), np.log(s_vals))
        slopes.append(res.slope)
    slopes = np.array(slopes)

    estimate = float("inf")
    for j in range(len(grid.betas)):
        if slopes[j] >= threshold:
            if j == 0:
                estimate = float(grid.betas[0])
            else:
                # linear interpolation of the crossing
                b0, b1 = grid.betas[j - 1], grid.betas[j]
                s0, s1 = slopes[j - 1], slopes[j]
                estimate = float(b0 + (threshold - s0) / (s1 - s0) * (b1 - b0))
            break
    return {
        "beta1": estimate,
        "threshold": threshold,
        "slopes": dict(zip(map(float, grid.betas), map(float, slopes))),
        "sizes": list(map(int, sizes)),
    }


# ---------------------------------------------------------------------------
# synthetic Lemma 3.1 checker


class Lemma31HypothesisError(ValueError):
    """The family fails the differential-inequality hypothesis."""

    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


def lemma31_synthetic_check(f, betas, sizes, m_cap: float = 1.0,
                            delta: float = 0.05, p2_tol: float = 1e-3) -> dict:
    """Hypothesis + conclusions check for a synthetic family f(n, beta).

    Hypothesis: f_n' >= (n / Sigma_n) f_n on the grid (central differences),
    where Sigma_n = sum_{k<n} f_k.  Grid points sitting at the ceiling M
    are exempt provided the function actually rose to M from below (the
    inequality concerns the increasing part; at the ceiling f' = 0 while
    the rhs stays positive, as for min(1, e^{n(beta-b)}) families).
    Families at the ceiling everywhere (no rise) are refused.

    Conclusions: P1, log-linear decay of f_n in n for beta < beta1 - delta;
    P2, lim f >= beta - beta1 - tol above beta1.
    """
    betas = np.asarray(betas, dtype=float)
    if len(betas) < 5:
        raise ValueError("beta grid too sparse")
    sizes = sorted(sizes)
    vals = np.array([[float(f(n, b)) for b in betas] for n in sizes])
    if np.any(vals < -1e-12) or np.any(vals > m_cap + 1e-12):
        raise ValueError("family leaves [0, M]")

    # Sigma_n needs every k < n; evaluate the family directly
    def sigma(n, b):
        return sum(float(f(k, b)) for k in range(n))

    eps = 1e-9 * m_cap
    for i, n in enumerate(sizes):
        if n < 1:
            continue
        for j in range(1, len(betas) - 1):
            v = vals[i, j]
            at_ceiling = v >= m_cap - eps
            rose = np.any(vals[i, :j] < m_cap - eps)
            if at_ceiling:
                if rose:
                    continue  # exempt: capped after increasing to M
                raise Lemma31HypothesisError(
                    "family sits at the ceiling without ever rising to it",
                    {"n": n, "beta": float(betas[j]), "value": v},
                )
            db = betas[j + 1] - betas[j - 1]
            deriv = (vals[i, j + 1] - vals[i, j - 1]) / db
            s = sigma(n, betas[j])
            rhs = 0.0 if v <= eps else (n / s) * v
            if deriv < rhs - 1e-7 * max(1.0, rhs):
                raise Lemma31HypothesisError(
                    "differential inequality violated",
                    {"n": n, "beta": float(betas[j]), "lhs": deriv, "rhs": rhs},
                )

    # locate beta1 by the defining ratio at the largest size
    n_max = sizes[-1]
    ratios = np.array([math.log(max(sigma(n_max, b), 1e-300)) / math.log(n_max)
                       for b in betas])
    beta1 = float("inf")
    for j, r in enumerate(ratios):
        if r >= 0.99:
            beta1 = float(betas[j])
            break

    report = {"beta1": beta1, "ratios_at_nmax": ratios.tolist(), "hypothesis_ok": True}

    # P1: log-linear decay below beta1
    p1_betas = betas[betas < beta1 - delta]
    if len(p1_betas) and len(sizes) >= 3:
        b = p1_betas[len(p1_betas) // 2]
        ys = np.array([max(float(f(n, b)), 1e-300) for n in sizes])
        res = linregress(np.array(sizes, dtype=float), np.log(ys))
        report["p1"] = {
            "beta": float(b),
            "slope": float(res.slope),
            "r2": float(res.rvalue**2),
            "ok": res.slope < 0 and res.rvalue**2 >= 0.99,
        }
    # P2: limit function dominates beta - beta1
    p2_betas = betas[betas > beta1 + delta]
    if len(p2_betas):
        margins = [float(f(n_max, b)) - (b - beta1) for b in p2_betas]
        report["p2"] = {"min_margin": min(margins), "ok": min(margins) >= -p2_tol}
    return report


# ---------------------------------------------------------------------------
# decay / mean-field diagnostics


def exp_decay_fit(grid: ThetaGrid, beta: float) -> dict:
    """Least-squares fit of log theta_n against n at one beta column."""
    j = int(np.argmin(np.abs(grid.betas - beta)))
    if abs(grid.betas[j] - beta) > 1e-9:
        raise ValueError(f"beta {beta} not on the grid")
    ns = np.array(grid.sizes, dtype=float)
    theta = grid.values[:, j].copy()
    floored = False
    floor = 1.0 / max(grid.n_samples, 2) if grid.n_samples else 1e-12
    if np.any(theta <= 0):
        floored = True
        theta = np.maximum(theta, floor)
    res = linregress(ns, np.log(theta))
    return {
        "beta": float(grid.betas[j]),
        "rate": float(-res.slope),
        "slope": float(res.slope),
        "r2": float(res.rvalue**2),
        "floored": floored,
    }


def mean_field_scan(grid: ThetaGrid, family: str | None = None,
                    q: float | None = None) -> dict:
    """Fit theta(beta) ~ c (beta - beta_c) just above the known beta_c and
    check the linear lower bound within CI at the largest size."""
    family = family or grid.family
    q = q if q is not None else grid.q
    cp = pc_solve(family, q)
    beta_c = cp.beta_c
    if not (grid.betas[0] < beta_c < grid.betas[-1]):
        raise ValueError("grid does not straddle beta_c")
    above = grid.betas > beta_c
    if above.sum() < 2:
        raise ValueError("need at least two grid points above beta_c")
    i = len(grid.sizes) - 1
    x = grid.betas[above] - beta_c
    y = grid.values[i, above]
    c_hat = float((x @ y) / (x @ x))  # least squares through the origin
    hw = grid.half_widths[i, above]
    ok = bool(np.all(y >= c_hat * x - hw - 1e-12))
    return {"beta_c": beta_c, "c_hat": c_hat, "largest_n": grid.sizes[i],
            "lower_bound_ok": ok}


# ---------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPointResult:
    family: str
    q: float
    y_c: float
    p_c: float
    residual: float

    @property
    def beta_c(self) -> float:
        return -math.log1p(-self.p_c)


_POLYS = {
    "square": lambda y, q: y * y - q,
    "triangular": lambda y, q: y**3 + 3 * y * y - q,
    "hexagonal": lambda y, q: y**3 - 3 * q * y - q * q,
}


def pc_solve(family: str, q: float) -> CriticalPointResult:
    """Unique positive root of the family's critical polynomial;
    p_c = y_c/(1+y_c)."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if family not in _POLYS:
        raise ValueError(f"unknown family {family!r}")
    poly = _POLYS[family]
    hi = max(4.0, q)
    # confirm a unique sign change on (0, hi) rather than assuming it
    ys = np.linspace(1e-12, hi, 4001)
    signs = np.sign([poly(y, q) for y in ys])
    changes = int(np.sum(np.abs(np.diff(signs)) > 0))
    if changes != 1:
        raise ArithmeticError(f"expected one positive root, saw {changes} sign changes")
    y_c = brentq(poly, 1e-12, hi, args=(q,), xtol=1e-15, rtol=8.9e-16)
    # one Newton polish
    fp = (poly(y_c + 1e-7, q) - poly(y_c - 1e-7, q)) / 2e-7
    if fp != 0:
        y_c -= poly(y_c, q) / fp
    return CriticalPointResult(family, q, y_c, y_c / (1 + y_c), abs(poly(y_c, q)))


def duality_relation_check(family: str, q: float, p: float) -> dict:
    """Solve p* from p p*/((1-p)(1-p*)) = q and report consistency:
    relation residual, involution p** = p, and the dual-pair identity for
    the family's critical points."""
    from .mcmc import dual_p

    p_star = dual_p(p, q)
    residual = abs(p * p_star / ((1 - p) * (1 - p_star)) - q)
    p_back = dual_p(p_star, q)
    dual_family = {"square": "square", "triangular": "hexagonal",
                   "hexagonal": "triangular"}[family]
    pc = pc_solve(family, q).p_c
    pc_dual = pc_solve(dual_family, q).p_c
    pair_residual = abs(pc * pc_dual / ((1 - pc) * (1 - pc_dual)) - q)
    return {
        "p": p,
        "p_star": p_star,
        "relation_residual": residual,
        "involution_error": abs(p_back - p),
        "dual_family": dual_family,
        "pc_pair_residual": pair_residual,
    }
