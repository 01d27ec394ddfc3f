"""Shared independent oracles for the test suite.

These deliberately avoid the code paths used by the package: linear systems
are solved by explicit Gaussian elimination, normal quantiles by bisection
on erfc, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np


def gauss_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b by Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    m = a.shape[0]
    aug = np.hstack([a, b.reshape(m, 1)])
    for col in range(m):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[pivot, col]) < 1e-300:
            raise ZeroDivisionError("singular system in oracle")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        for row in range(col + 1, m):
            factor = aug[row, col] / aug[col, col]
            aug[row, col:] -= factor * aug[col, col:]
    x = np.zeros(m)
    for row in range(m - 1, -1, -1):
        x[row] = (aug[row, -1] - aug[row, row + 1:m] @ x[row + 1:]) / aug[row, row]
    return x


def ols_oracle(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients from the normal equations, oracle route."""
    return gauss_solve(x.T @ x, x.T @ y)


def normal_upper_quantile(q: float) -> float:
    """z with P(Z > z) = q for standard normal Z, by bisection on erfc.

    Accurate to ~1e-12 over the range used in tests.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")

    def upper_tail(z: float) -> float:
        return 0.5 * math.erfc(z / math.sqrt(2.0))

    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if upper_tail(mid) > q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def soft_threshold(value: float, threshold: float) -> float:
    """sign(value) * max(|value| - threshold, 0)."""
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def lasso_objective(x: np.ndarray, y: np.ndarray, beta: np.ndarray,
                    lam: float) -> float:
    """Sum of squared residuals plus lam * l1, computed directly."""
    resid = y - x @ beta
    return float(resid @ resid + lam * np.abs(beta).sum())


def standardized_gaussian(rng: np.random.Generator, n: int, p: int,
                          beta=None, sigma: float = 1.0):
    """Random standardized design and response; returns (x, y) arrays."""
    x = rng.standard_normal((n, p))
    x = x - x.mean(axis=0)
    x = x / np.sqrt((x * x).mean(axis=0))
    noise = sigma * rng.standard_normal(n) if sigma else np.zeros(n)
    if beta is None:
        y = noise
    else:
        y = x @ np.asarray(beta, dtype=np.float64) + noise
    return x, y
