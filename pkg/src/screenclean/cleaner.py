"""Stage-III cleaning: multiplicity-corrected t-tests on the selected model.

Given the least-squares refit of the selected model on held-out rows, the
cleaner keeps exactly the coefficients whose |t| exceeds a critical value.
Two critical values are implemented:

* ``critical_trisplit`` — the Bonferroni normal quantile z_{alpha/(2m)}
  for a model with m variables (optionally a Student t quantile when a
  residual degree-of-freedom count is supplied);
* ``critical_twosplit`` — the conservative deterministic threshold
  log(log n) * sqrt(2 k_n log(2 p_n)) / alpha used when screening and
  cleaning share rows.

A refit with numerically zero residual variance has undefined t statistics;
the cleaner then refuses to discard anything (kept set = selected set) and
flags the result instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtri
from scipy.stats import t as student_t

from .errors import (
    CriticalValueDomainError,
    DataError,
    EmptyModelError,
    ZeroResidualVarianceError,
)
from .core import OlsFit, TrueModel, t_statistics


class CleanMode(Enum):
    TRI_SPLIT = "trisplit"
    TWO_SPLIT = "twosplit"


@dataclass(frozen=True)
class CleanResult:
    """Outcome of the cleaning stage.

    ``d_hat`` is the kept subset of ``s_hat``; ``t_values`` and ``coef``
    align with ``s_hat``. ``perfect_fit`` marks the zero-residual-variance
    case, where every selected variable is kept and t is reported as +inf.
    """

    s_hat: tuple[int, ...]
    d_hat: tuple[int, ...]
    t_values: np.ndarray
    coef: np.ndarray
    critical: float
    alpha: float
    mode: CleanMode
    perfect_fit: bool = False

    @property
    def m(self) -> int:
        return len(self.s_hat)


def critical_trisplit(alpha: float, m: int, df: int | None = None) -> float:
    """Bonferroni critical value z_{alpha/(2m)} for an m-variable model.

    With ``df`` given, the Student t quantile with that many degrees of
    freedom replaces the normal one (same tail split).
    """
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must be in (0, 1), got {alpha}")
    if m < 1:
        raise EmptyModelError(f"critical value needs m >= 1, got m={m}")
    q = alpha / (2.0 * m)
    if df is not None:
        if df < 1:
            raise DataError(f"df must be >= 1, got {df}")
        return float(student_t.ppf(1.0 - q, df))
    return float(ndtri(1.0 - q))


def critical_twosplit(alpha: float, n: int, k_n: int, p_n: int) -> float:
    """Deterministic shared-rows threshold
    log(log n) * sqrt(2 k_n log(2 p_n)) / alpha.

    Requires log(log n) > 0, i.e. n >= 3; smaller n raises
    :class:`CriticalValueDomainError`.
    """
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must be in (0, 1), got {alpha}")
    if k_n < 1 or p_n < 1:
        raise DataError(f"need k_n >= 1 and p_n >= 1, got {k_n}, {p_n}")
    if n < 2 or math.log(n) <= 1.0:
        # log(log n) <= 0 for n <= e; integer n: n <= 2
        raise CriticalValueDomainError(
            f"log(log n) is not positive for n={n}; threshold undefined")
    return math.log(math.log(n)) * math.sqrt(
        2.0 * k_n * math.log(2.0 * p_n)) / alpha


def clean(fit: OlsFit, alpha: float, mode: CleanMode,
          n: int | None = None, k_n: int | None = None,
          p_n: int | None = None, student: bool = False) -> CleanResult:
    """Keep the selected variables whose |t| exceeds the critical value.

    ``fit`` is the refit of the selected model on the cleaning rows. For
    TWO_SPLIT mode, ``n``, ``k_n`` and ``p_n`` pin down the deterministic
    threshold (``n`` being the cleaning sample size). ``student`` switches
    the TRI_SPLIT quantile from normal to Student t with ``fit.df`` degrees
    of freedom. An empty selected model cleans to an empty kept set.
    """
    s_hat = fit.model
    m = len(s_hat)
    if m == 0:
        return CleanResult(s_hat=(), d_hat=(), t_values=np.zeros(0),
                           coef=np.zeros(0), critical=math.nan, alpha=alpha,
                           mode=mode, perfect_fit=False)
    if mode is CleanMode.TRI_SPLIT:
        critical = critical_trisplit(alpha, m, df=fit.df if student else None)
    else:
        if n is None or k_n is None or p_n is None:
            raise DataError("twosplit cleaning needs n, k_n and p_n")
        critical = critical_twosplit(alpha, n, k_n, p_n)
    try:
        t_vals = t_statistics(fit)
    except ZeroResidualVarianceError:
        # exactly spanned response: no basis for discarding anything
        inf_t = np.full(m, math.inf)
        return CleanResult(s_hat=s_hat, d_hat=s_hat, t_values=inf_t,
                           coef=fit.coef.copy(), critical=critical,
                           alpha=alpha, mode=mode, perfect_fit=True)
    kept = tuple(j for j, t in zip(s_hat, t_vals) if abs(t) > critical)
    return CleanResult(s_hat=s_hat, d_hat=kept, t_values=t_vals,
                       coef=fit.coef.copy(), critical=critical, alpha=alpha,
                       mode=mode, perfect_fit=False)


def sandwich(result: CleanResult) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(lower, upper) = (kept set, selected set): the claim is
    lower <= true support <= upper."""
    return result.d_hat, result.s_hat


def sandwich_covers(result: CleanResult, true_model: TrueModel) -> bool:
    """Whether the kept/selected pair brackets the true support."""
    lower, upper = sandwich(result)
    d = set(true_model.support)
    return set(lower) <= d <= set(upper)
