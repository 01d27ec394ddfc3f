"""Data model, standardization, splitting, least squares and eigen diagnostics.

Everything downstream (screeners, selection, cleaning, simulation) builds on
the small set of types and operations here. All fits are intercept-free: the
toolkit assumes centered responses and standardizes covariates per analysis
split. Randomness flows exclusively through explicit seeds fed to numpy's
PCG64 generator (``numpy.random.default_rng``), so every run is reproducible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    ConstantColumnError,
    DimensionMismatchError,
    ModelTooLargeError,
    NotSymmetricError,
    SingularGramError,
    TooFewRowsError,
    TooManySubsetsError,
    ZeroResidualVarianceError,
)

# Smallest eigenvalue of the scaled Gram matrix below which a model is
# treated as rank deficient. Separates true singularity from conditioning
# noise at double precision.
GRAM_EIGEN_TOL = 1e-10

# sigma_hat at or below this multiple of the response RMS counts as a
# perfect fit (floating-point RSS of an exactly spanned response is ~1e-30,
# never exactly zero).
PERFECT_FIT_REL_TOL = 1e-12


class SplitMode(Enum):
    TRI_SPLIT = "trisplit"
    TWO_SPLIT = "twosplit"

    @property
    def parts(self) -> int:
        return 3 if self is SplitMode.TRI_SPLIT else 2


@dataclass(frozen=True)
class Dataset:
    """Immutable response/design pair.

    Parameters
    ----------
    y : ndarray, shape (n,)
        Response vector.
    x : ndarray, shape (n, p)
        Covariate matrix; column ``j`` is the j-th covariate.
    standardized : bool
        True when every column has sample mean 0 and (denominator-n) sample
        variance 1; validated at construction.
    names : tuple of str, optional
        Column names for reporting; defaults to x1..xp when absent.
    """

    y: np.ndarray
    x: np.ndarray
    standardized: bool = False
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64)  # owned copies: immutable below
        x = np.array(self.x, dtype=np.float64, order="F")
        if y.ndim != 1 or x.ndim != 2:
            raise DimensionMismatchError(
                f"y must be 1-D and x 2-D, got shapes {y.shape} and {x.shape}"
            )
        n, p = x.shape
        if n < 1 or p < 1:
            raise TooFewRowsError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DimensionMismatchError(
                f"y has {y.shape[0]} rows but x has {n}"
            )
        if not np.isfinite(y).all() or not np.isfinite(x).all():
            raise DimensionMismatchError("non-finite values in data")
        if self.names is not None and len(self.names) != p:
            raise DimensionMismatchError(
                f"{len(self.names)} names for {p} columns"
            )
        y.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if self.standardized:
            mean = x.mean(axis=0)
            var = (x * x).mean(axis=0) - mean**2
            if np.abs(mean).max() > 1e-10 or np.abs(var - 1.0).max() > 1e-8:
                raise DimensionMismatchError(
                    "standardized flag set but columns are not mean-0/var-1"
                )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset as a new (un-standardized) dataset."""
        return Dataset(self.y[rows], self.x[rows], standardized=False,
                       names=self.names)

    def column_names(self) -> tuple[str, ...]:
        if self.names is not None:
            return self.names
        return tuple(f"x{j + 1}" for j in range(self.p))


@dataclass(frozen=True)
class TrueModel:
    """Known generating coefficients for simulation metrics.

    ``support`` is exactly the nonzero index set of ``beta``; ``psi`` is the
    smallest nonzero |beta| and NaN when the model is null (s = 0).
    """

    beta: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64)
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        if self.sigma < 0:
            raise DimensionMismatchError("sigma must be >= 0")

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.beta))

    @property
    def s(self) -> int:
        return int(np.count_nonzero(self.beta))

    @property
    def psi(self) -> float:
        nz = np.abs(self.beta[self.beta != 0])
        return float(nz.min()) if nz.size else math.nan


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint row groups covering 0..n_total-1, sizes within 1 of equal."""

    mode: SplitMode
    indices: tuple[np.ndarray, ...]
    seed: int

    def __post_init__(self):
        groups = tuple(np.array(g, dtype=np.intp) for g in self.indices)
        for g in groups:
            g.flags.writeable = False
        object.__setattr__(self, "indices", groups)
        if len(groups) != self.mode.parts:
            raise DimensionMismatchError(
                f"{self.mode.value} expects {self.mode.parts} groups"
            )
        total = np.concatenate(groups)
        n = total.size
        if not np.array_equal(np.sort(total), np.arange(n)):
            raise DimensionMismatchError("groups must partition 0..n-1")
        sizes = [g.size for g in groups]
        if max(sizes) - min(sizes) > 1:
            raise DimensionMismatchError(f"unbalanced split sizes {sizes}")


def standardize(raw: Dataset) -> Dataset:
    """Scale covariates to sample mean 0 and variance 1 (denominator n).

    The response is left untouched and no intercept is ever added. The
    variance uses denominator n, matching the per-split convention used by
    every stage in this package.

    Raises
    ------
    ConstantColumnError
        If any column has (numerically) zero sample variance.
    """
    x = raw.x
    mean = x.mean(axis=0)
    centered = x - mean
    var = (centered * centered).mean(axis=0)
    bad = np.flatnonzero(var < 1e-24)
    if bad.size:
        j = int(bad[0])
        name = raw.names[j] if raw.names is not None else None
        raise ConstantColumnError(j, name)
    return Dataset(raw.y, centered / np.sqrt(var), standardized=True,
                   names=raw.names)


def split(n_total: int, mode: SplitMode, seed: int) -> SplitPlan:
    """Uniform random partition into equal thirds (or halves).

    Remainder rows go to the earlier groups, so sizes are e.g. (4, 3, 3)
    for n_total=10. Determined entirely by ``seed`` (PCG64 permutation);
    indices within each group are sorted.
    """
    parts = mode.parts
    if n_total < parts:
        raise TooFewRowsError(
            f"cannot split {n_total} rows into {parts} nonempty groups"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_total)
    base, rem = divmod(n_total, parts)
    sizes = [base + 1 if i < rem else base for i in range(parts)]
    groups = []
    start = 0
    for size in sizes:
        groups.append(np.sort(perm[start:start + size]))
        start += size
    return SplitPlan(mode=mode, indices=tuple(groups), seed=seed)


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit restricted to an index set.

    ``cov_scale`` is (X_M' X_M)^{-1}; together with ``sigma_hat`` it gives
    the usual standard errors. ``y_rms`` (root mean square of the response)
    is retained so perfect fits can be recognized relative to data scale.
    """

    model: tuple[int, ...]
    coef: np.ndarray
    sigma_hat: float
    cov_scale: np.ndarray
    df: int
    rss: float
    n: int
    y_rms: float

    @property
    def perfect_fit(self) -> bool:
        return self.sigma_hat <= PERFECT_FIT_REL_TOL * self.y_rms


def ols_fit(data: Dataset, model) -> OlsFit:
    """OLS restricted to the columns in ``model`` (no intercept).

    Raises
    ------
    ModelTooLargeError
        If |model| >= n (sigma_hat needs at least one residual df).
    SingularGramError
        If the smallest eigenvalue of n^{-1} X_M'X_M is below 1e-10.
    """
    m_idx = tuple(int(j) for j in model)
    n = data.n
    m = len(m_idx)
    if m >= n:
        raise ModelTooLargeError(f"model size {m} >= n = {n}")
    if len(set(m_idx)) != m:
        raise SingularGramError("duplicate indices in model")
    y = data.y
    y_rms = float(np.sqrt((y * y).mean()))
    if m == 0:
        rss = float(y @ y)
        return OlsFit(model=(), coef=np.zeros(0), sigma_hat=math.sqrt(rss / n),
                      cov_scale=np.zeros((0, 0)), df=n, rss=rss, n=n,
                      y_rms=y_rms)
    xm = data.x[:, m_idx]
    gram = xm.T @ xm
    smallest = float(np.linalg.eigvalsh(gram / n)[0])
    if smallest < GRAM_EIGEN_TOL:
        raise SingularGramError(
            f"scaled Gram smallest eigenvalue {smallest:.3e} below "
            f"{GRAM_EIGEN_TOL:g} for model {m_idx}", smallest=smallest)
    xty = xm.T @ y
    coef = np.linalg.solve(gram, xty)
    resid = y - xm @ coef
    rss = float(resid @ resid)
    df = n - m
    sigma_hat = math.sqrt(max(rss, 0.0) / df)
    cov_scale = np.linalg.inv(gram)
    return OlsFit(model=m_idx, coef=coef, sigma_hat=sigma_hat,
                  cov_scale=cov_scale, df=df, rss=rss, n=n, y_rms=y_rms)


def t_statistics(fit: OlsFit) -> np.ndarray:
    """Per-coefficient t statistics T_j = coef_j / (sigma_hat * sqrt(g_jj)).

    ``g_jj`` is the j-th diagonal entry of (X_M'X_M)^{-1}. Raises
    ZeroResidualVarianceError on a perfect fit, where t is undefined.
    """
    if fit.df < 1:
        raise ModelTooLargeError("no residual degrees of freedom")
    if fit.perfect_fit:
        raise ZeroResidualVarianceError(
            f"residual s.d. {fit.sigma_hat:.3e} is zero at data scale "
            f"{fit.y_rms:.3e}; t-statistics undefined")
    se = fit.sigma_hat * np.sqrt(np.diag(fit.cov_scale))
    return fit.coef / se


def predict(data: Dataset, model, coef: np.ndarray) -> np.ndarray:
    """X_M @ coef for the given index set (empty model -> zeros)."""
    m_idx = tuple(int(j) for j in model)
    if not m_idx:
        return np.zeros(data.n)
    return data.x[:, m_idx] @ np.asarray(coef)


def eigen_extremes(gram: np.ndarray) -> tuple[float, float]:
    """(smallest, largest) eigenvalue of a symmetric matrix."""
    a = np.asarray(gram, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"square matrix required, got {a.shape}")
    if a.size and np.abs(a - a.T).max() > 1e-10:
        raise NotSymmetricError("matrix is not symmetric within 1e-10")
    w = np.linalg.eigvalsh(a)
    return float(w[0]), float(w[-1])


def restricted_eigen(data: Dataset, k: int) -> tuple[float, float]:
    """Exact size-k restricted eigenvalue extremes.

    phi_n(k) = min over all size-k column subsets M of the smallest
    eigenvalue of n^{-1} X_M'X_M, and Phi_n(k) the max over M of the largest.
    Exhaustive enumeration; diagnostic use only (C(p, k) capped at 1e6).
    """
    n, p = data.n, data.p
    if not 1 <= k <= min(n, p):
        raise DimensionMismatchError(f"k={k} outside 1..min(n, p)={min(n, p)}")
    if math.comb(p, k) > 10**6:
        raise TooManySubsetsError(
            f"C({p},{k}) = {math.comb(p, k)} subsets exceeds the 1e6 budget")
    gram_full = data.x.T @ data.x / n
    phi = math.inf
    big = -math.inf
    for subset in itertools.combinations(range(p), k):
        sub = gram_full[np.ix_(subset, subset)]
        w = np.linalg.eigvalsh(sub)
        phi = min(phi, float(w[0]))
        big = max(big, float(w[-1]))
    return phi, big


@dataclass(frozen=True)
class LossBoundReport:
    """Exhaustive small-model loss survey against the theoretical bounds.

    For every model M with |M| <= m, the in-sample loss
    L(b) = (b - beta)' (X'X/n) (b - beta) of the OLS refit is evaluated.
    ``sup_*`` summarizes models containing the true support (bounded above
    by 4 m log p / (n phi_n(m))), ``inf_*`` the models missing at least one
    true variable (bounded below by psi^2 phi_n(m+s)). The bounds are
    probabilistic, so violations are flagged, never raised.
    """

    m: int
    s: int
    sup_loss: float
    sup_bound: float
    sup_violated: bool
    sup_model: tuple[int, ...] | None
    n_sup_models: int
    inf_loss: float
    inf_bound: float
    inf_violated: bool
    inf_model: tuple[int, ...] | None
    n_inf_models: int
    n_skipped: int
    phi_m: float
    phi_m_plus_s: float


def check_loss_bounds(data: Dataset, true_model: TrueModel, m: int) -> LossBoundReport:
    """Survey all size-<=m models and compare losses to the two bounds.

    Simulation diagnostic: requires the true beta. Models whose Gram is
    singular are skipped (counted in ``n_skipped``).
    """
    n, p = data.n, data.p
    beta = true_model.beta
    if beta.shape[0] != p:
        raise DimensionMismatchError("true beta length != p")
    if not 1 <= m <= min(n - 1, p):
        raise DimensionMismatchError(f"m={m} outside 1..min(n-1, p)")
    s = true_model.s
    d_set = set(true_model.support)
    if m + s > min(n, p):
        raise DimensionMismatchError(
            f"m+s = {m + s} exceeds min(n, p); inf bound undefined")
    total = sum(math.comb(p, k) for k in range(m + 1))
    if total > 10**6:
        raise TooManySubsetsError(f"{total} models exceed the 1e6 budget")

    gram_n = data.x.T @ data.x / n

    def loss_of(model: tuple[int, ...]) -> float:
        diff = -beta.copy()
        if model:
            fit = ols_fit(data, model)
            diff[list(model)] += fit.coef
        return float(diff @ gram_n @ diff)

    sup_loss, sup_model, n_sup = -math.inf, None, 0
    inf_loss, inf_model, n_inf = math.inf, None, 0
    skipped = 0
    for k in range(m + 1):
        for subset in itertools.combinations(range(p), k):
            try:
                value = loss_of(subset)
            except SingularGramError:
                skipped += 1
                continue
            if d_set <= set(subset):
                n_sup += 1
                if value > sup_loss:
                    sup_loss, sup_model = value, subset
            else:
                n_inf += 1
                if value < inf_loss:
                    inf_loss, inf_model = value, subset

    phi_m, _ = restricted_eigen(data, m)
    phi_ms, _ = restricted_eigen(data, m + s) if s else (phi_m, None)
    sup_bound = 4.0 * m * math.log(p) / (n * phi_m) if phi_m > 0 else math.inf
    psi = true_model.psi
    inf_bound = (psi * psi) * phi_ms if s else 0.0

    have_sup = n_sup > 0
    have_inf = n_inf > 0
    return LossBoundReport(
        m=m, s=s,
        sup_loss=sup_loss if have_sup else math.nan,
        sup_bound=sup_bound,
        sup_violated=bool(have_sup and sup_loss > sup_bound),
        sup_model=sup_model, n_sup_models=n_sup,
        inf_loss=inf_loss if have_inf else math.nan,
        inf_bound=inf_bound,
        inf_violated=bool(have_inf and s > 0 and inf_loss < inf_bound),
        inf_model=inf_model, n_inf_models=n_inf,
        n_skipped=skipped, phi_m=phi_m,
        phi_m_plus_s=phi_ms if s else math.nan,
    )
