"""Weighted least squares state estimation and chi-squared bad data detection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ObservabilityError
from .grid import MeasurementModel

DEFAULT_ALPHA = 0.95
DEFAULT_SIGMA = 0.01

_EPS = 1e-16
_MAX_ITER = 10_000


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x <= 0:
        return 0.0
    log_pre = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # power series
        term = total = 1.0 / a
        ap = a
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return min(1.0, total * math.exp(log_pre))
    # continued fraction for Q(a, x), modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return max(0.0, 1.0 - math.exp(log_pre) * h)


def chi2_cdf(x: float, dof: int) -> float:
    return gammainc_lower(dof / 2.0, x / 2.0)


def chi2_quantile(dof: int, alpha: float, tol: float = 1e-12) -> float:
    """Value q with P(chi2_dof <= q) = alpha, found by bracketing and bisection."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < alpha:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class EstimationResult:
    x_hat: np.ndarray
    r: float
    J: float


@dataclass(frozen=True)
class DetectorConfig:
    alpha: float = DEFAULT_ALPHA
    sigma: float = DEFAULT_SIGMA
    eta: float = float("nan")

    @classmethod
    def for_model(cls, model: MeasurementModel, alpha: float = DEFAULT_ALPHA,
                  sigma: float | None = None) -> "DetectorConfig":
        sigma = model.sigma if sigma is None else sigma
        return cls(alpha, sigma, detection_threshold(model.m, model.n, alpha, sigma))


def gain_factor(H: np.ndarray, W: np.ndarray) -> np.ndarray:
    """WLS gain F = (H^T W H)^-1 H^T W, so that x_hat = F z."""
    G = H.T @ W @ H
    if np.linalg.matrix_rank(G) < H.shape[1]:
        raise ObservabilityError("H^T W H is rank deficient; the network is not observable")
    return np.linalg.solve(G, H.T @ W)


def wls_estimate(model: MeasurementModel, z, H: np.ndarray | None = None) -> EstimationResult:
    H = model.H if H is None else H
    z = np.asarray(z, dtype=float)
    if z.shape != (H.shape[0],):
        raise ValueError(f"expected {H.shape[0]} measurements, got shape {z.shape}")
    x_hat = gain_factor(H, model.W) @ z
    res = z - H @ x_hat
    return EstimationResult(x_hat, float(np.linalg.norm(res)), float(res @ model.W @ res))


def residual_norm(model: MeasurementModel, z, H: np.ndarray | None = None) -> float:
    return wls_estimate(model, z, H).r


def detection_threshold(m: int, n: int, alpha: float = DEFAULT_ALPHA, sigma: float = DEFAULT_SIGMA) -> float:
    """BDD threshold sigma * sqrt(chi2 quantile with m - n degrees of freedom)."""
    if m <= n:
        raise ValueError(f"need more measurements than states (m={m}, n={n})")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return sigma * math.sqrt(chi2_quantile(m - n, alpha))


def bdd_check(r: float, eta: float) -> str:
    """Return ``"alarm"`` when the residual exceeds the threshold, else ``"pass"``."""
    return "alarm" if r > eta else "pass"
