"""Synthetic designs, replicated runs, and operating-characteristic tables.

Four generating designs are built in:

* ``A`` — pure noise: beta = 0, iid standard normal covariates;
* ``B`` — triangle signal: beta_j = delta * (10 - j) for j = 1..10 (so
  nine nonzero coefficients of staggered size), iid covariates;
* ``C`` — the same signal over a chained design, x_{j+1} = rho x_j +
  sqrt(1 - rho^2) z (autoregressive correlation rho^{|i-j|});
* ``D`` — near-collinear confounding: p = 10, beta = (10, -10, 0, ...),
  x2 = rho x1 + tau e, x3 = rho x1 + tau e', x4 = rho x2 + tau e'' with
  rho = 0.95, tau = 0.01, so x1..x4 are nearly interchangeable and their
  marginal associations with y almost coincide.

``run_table`` replays a pipeline (or the two-stage competitor) over
replicated draws and reduces the kept sets to the reported operating
characteristics, with Monte Carlo standard errors. Seeding is hierarchical
(numpy SeedSequence spawn keys), so any cell/replicate is reproducible in
isolation and results do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import Dataset, TrueModel
from .errors import DataError, DimensionMismatchError, ScreenCleanError
from .pipeline import (
    CompetitorConfig,
    PipelineConfig,
    SplitScheme,
    run_adaptive_lasso,
    run_screen_and_clean,
)
from .screeners import ScreenMethod

ADAPTIVE = "adaptive"  # method label for the two-stage competitor


class ModelKind(Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"


@dataclass(frozen=True)
class SimModel:
    """A generating design: distribution of (y, x) plus the true beta."""

    kind: ModelKind
    n: int
    p: int
    delta: float = 0.0
    rho: float = 0.0
    tau: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise DataError(f"need n >= 1 and p >= 1, got {self.n}, {self.p}")
        if self.sigma < 0:
            raise DataError("sigma must be >= 0")
        if self.kind in (ModelKind.B, ModelKind.C):
            if self.p < 10:
                raise DataError(f"model {self.kind.value} needs p >= 10")
            if self.delta <= 0:
                raise DataError(f"model {self.kind.value} needs delta > 0")
        if self.kind is ModelKind.C and not 0 <= self.rho < 1:
            raise DataError("model C needs 0 <= rho < 1")
        if self.kind is ModelKind.D:
            if self.p != 10:
                raise DataError("model D is defined for p = 10")
            if not 0 < self.rho < 1 or self.tau <= 0:
                raise DataError("model D needs 0 < rho < 1 and tau > 0")

    @staticmethod
    def model_a(n: int, p: int, sigma: float = 1.0) -> "SimModel":
        return SimModel(kind=ModelKind.A, n=n, p=p, sigma=sigma)

    @staticmethod
    def model_b(n: int, p: int, delta: float, sigma: float = 1.0) -> "SimModel":
        return SimModel(kind=ModelKind.B, n=n, p=p, delta=delta, sigma=sigma)

    @staticmethod
    def model_c(n: int, p: int, delta: float, rho: float = 0.5,
                sigma: float = 1.0) -> "SimModel":
        return SimModel(kind=ModelKind.C, n=n, p=p, delta=delta, rho=rho,
                        sigma=sigma)

    @staticmethod
    def model_d(n: int, rho: float = 0.95, tau: float = 0.01,
                sigma: float = 1.0) -> "SimModel":
        return SimModel(kind=ModelKind.D, n=n, p=10, rho=rho, tau=tau,
                        sigma=sigma)

    def beta(self) -> np.ndarray:
        b = np.zeros(self.p)
        if self.kind in (ModelKind.B, ModelKind.C):
            j = np.arange(1, 11)
            b[:10] = self.delta * (10 - j)
        elif self.kind is ModelKind.D:
            b[0], b[1] = 10.0, -10.0
        return b

    def true_model(self) -> TrueModel:
        return TrueModel(beta=self.beta(), sigma=self.sigma)


def _mixing_matrix(model: SimModel) -> np.ndarray:
    """Lower-triangular L with x = L z for iid standard normal z."""
    p = model.p
    if model.kind is ModelKind.C:
        rho = model.rho
        fresh = math.sqrt(1.0 - rho * rho)
        L = np.zeros((p, p))
        L[0, 0] = 1.0
        for j in range(1, p):
            L[j] = rho * L[j - 1]
            L[j, j] = fresh
        return L
    if model.kind is ModelKind.D:
        rho, tau = model.rho, model.tau
        L = np.eye(p)
        L[1] = rho * L[0]
        L[1, 1] = tau
        L[2] = rho * L[0]
        L[2, 2] = tau
        L[3] = rho * L[1]
        L[3, 3] = tau
        return L
    return np.eye(p)


def population_covariance(model: SimModel) -> np.ndarray:
    """Exact covariance matrix of the covariate vector."""
    L = _mixing_matrix(model)
    return L @ L.T


def marginal_coefficients(sigma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Population marginal associations E(x_j y) = (Sigma beta)_j.

    These are what single-covariate regressions estimate; they can vanish
    on true support variables (and light up on null ones) whenever the
    covariance works against the signs of beta.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionMismatchError(f"square matrix required, got {sigma.shape}")
    if beta.shape != (sigma.shape[0],):
        raise DimensionMismatchError("beta length != matrix order")
    return sigma @ beta


def generate(model: SimModel, seed) -> tuple[Dataset, TrueModel]:
    """One draw of (y, x) from the design; raw scale, not standardized.

    ``seed`` is anything ``numpy.random.default_rng`` accepts (int or
    SeedSequence). Covariates are drawn first, then the noise, so the
    draw is reproducible from the seed alone.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((model.n, model.p))
    x = z @ _mixing_matrix(model).T
    beta = model.beta()
    noise = rng.standard_normal(model.n) if model.sigma > 0 else 0.0
    y = x @ beta + model.sigma * noise
    return (Dataset(y=y, x=x, standardized=False),
            TrueModel(beta=beta, sigma=model.sigma))


# ---------------------------------------------------------------------------
# operating characteristics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Outcome:
    """Kept set of one replicate; ``s_hat`` is None when the procedure
    makes no screening claim (the competitor)."""

    d_hat: tuple[int, ...]
    s_hat: tuple[int, ...] | None = None


@dataclass(frozen=True)
class MetricsRow:
    """Replicate-averaged operating characteristics.

    size       P(at least one null variable kept)        [type-I]
    power_av   mean over true variables of P(kept)       [average power]
    fpr        E|kept null variables| / #null variables
    coverage   P(kept subset of truth subset of screened), NaN without s_hat
    """

    size: float
    power_av: float
    fpr: float
    coverage: float
    size_se: float
    power_se: float
    fpr_se: float
    coverage_se: float
    replicates: int


def metrics(outcomes, true_model: TrueModel) -> MetricsRow:
    """Reduce per-replicate kept sets to the reported row.

    ``outcomes`` is a sequence of :class:`Outcome` (or bare index tuples,
    treated as kept sets without screening claims).
    """
    p = true_model.beta.shape[0]
    d_true = set(true_model.support)
    s = len(d_true)
    n_null = p - s
    sizes, powers, fprs, covers = [], [], [], []
    have_shat = True
    for out in outcomes:
        if not isinstance(out, Outcome):
            out = Outcome(d_hat=tuple(out))
        kept = set(out.d_hat)
        false_keep = kept - d_true
        sizes.append(1.0 if false_keep else 0.0)
        powers.append(len(kept & d_true) / s if s else 0.0)
        fprs.append(len(false_keep) / n_null if n_null else 0.0)
        if out.s_hat is None:
            have_shat = False
        else:
            covers.append(1.0 if kept <= d_true <= set(out.s_hat) else 0.0)
    r = len(sizes)
    if r == 0:
        raise DataError("metrics needs at least one outcome")

    def avg_se(vals):
        a = np.asarray(vals)
        mean = float(a.mean())
        se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else math.nan
        return mean, se

    size, size_se = avg_se(sizes)
    power, power_se = avg_se(powers)
    fpr, fpr_se = avg_se(fprs)
    if have_shat and covers:
        coverage, coverage_se = avg_se(covers)
    else:
        coverage, coverage_se = math.nan, math.nan
    return MetricsRow(size=size, power_av=power, fpr=fpr, coverage=coverage,
                      size_se=size_se, power_se=power_se, fpr_se=fpr_se,
                      coverage_se=coverage_se, replicates=r)


# ---------------------------------------------------------------------------
# replicated table runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellSpec:
    """One table cell: a design, a method, and a splitting scheme.

    ``method`` is a :class:`ScreenMethod` or the string ``"adaptive"`` for
    the two-stage competitor (which ignores ``splits``). ``replicates``
    overrides the table-wide count when set.
    """

    model: SimModel
    method: ScreenMethod | str
    splits: SplitScheme | None = SplitScheme.TRI_SPLIT
    alpha: float = 0.05
    replicates: int | None = None


@dataclass(frozen=True)
class CellResult:
    spec: CellSpec
    row: MetricsRow
    failures: tuple[str, ...]
    cell_index: int


def _one_replicate(spec: CellSpec, master_seed: int, cell_index: int,
                   rep: int, grid_size: int, refold_screen: bool) -> Outcome:
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(cell_index, rep))
    state = ss.generate_state(2, np.uint64)
    data_seed, run_seed = int(state[0]), int(state[1])
    data, _ = generate(spec.model, data_seed)
    # the harness plays the analyst: no intercepts are ever fitted, so the
    # response is centered before analysis (all design means are zero)
    data = Dataset(x=data.x, y=data.y - float(data.y.mean()))
    if spec.method == ADAPTIVE:
        res = run_adaptive_lasso(
            data, CompetitorConfig(seed=run_seed, grid_size=grid_size))
        return Outcome(d_hat=res.selected, s_hat=None)
    config = PipelineConfig(screener=spec.method, splits=spec.splits,
                            alpha=spec.alpha, seed=run_seed,
                            grid_size=grid_size, refold_screen=refold_screen)
    result = run_screen_and_clean(data, config)
    return Outcome(d_hat=result.kept, s_hat=result.selected)


def run_cell(spec: CellSpec, replicates: int, master_seed: int,
             cell_index: int = 0, grid_size: int = 100,
             refold_screen: bool = True) -> CellResult:
    """Replicate one cell; failures are recorded and skipped, not fatal."""
    outcomes = []
    failures = []
    for rep in range(replicates):
        try:
            outcomes.append(_one_replicate(spec, master_seed, cell_index,
                                           rep, grid_size, refold_screen))
        except ScreenCleanError as err:
            failures.append(f"replicate {rep}: {err}")
    if not outcomes:
        raise DataError(
            f"every replicate of cell {cell_index} failed; first: "
            f"{failures[0] if failures else 'none run'}")
    row = metrics(outcomes, spec.model.true_model())
    return CellResult(spec=spec, row=row, failures=tuple(failures),
                      cell_index=cell_index)


def run_table(cells, replicates: int, master_seed: int,
              grid_size: int = 100, refold_screen: bool = True,
              progress=None) -> list[CellResult]:
    """Run every cell with hierarchically derived seeds.

    Seeds depend only on (master_seed, cell position, replicate), so a
    single cell can be reproduced without running the others.
    """
    results = []
    for idx, spec in enumerate(cells):
        reps = spec.replicates if spec.replicates is not None else replicates
        results.append(run_cell(spec, reps, master_seed, cell_index=idx,
                                grid_size=grid_size,
                                refold_screen=refold_screen))
        if progress is not None:
            progress(idx + 1, len(cells), results[-1])
    return results


# ---------------------------------------------------------------------------
# standard table layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TableRow:
    """One printed row: a design plus the splitting scheme label."""

    splits_label: str          # "2" (halved, LOO) or "3" (thirds)
    scheme: SplitScheme | None
    model: SimModel


def _row_models() -> list[SimModel]:
    return [
        SimModel.model_a(100, 100),
        SimModel.model_b(100, 100, delta=0.5),
        SimModel.model_c(100, 100, delta=0.5),
        SimModel.model_d(100),
        SimModel.model_a(100, 1000),
        SimModel.model_b(100, 1000, delta=1.5),
        SimModel.model_c(100, 1000, delta=1.5),
        SimModel.model_d(1000),
    ]


def table1_rows() -> list[TableRow]:
    """Main-table layout: halved block then thirds block, eight designs
    each, three screeners per row (16 rows of 3 cells)."""
    rows = []
    for label, scheme in (("2", SplitScheme.TWO_SPLIT_LOO),
                          ("3", SplitScheme.TRI_SPLIT)):
        for model in _row_models():
            rows.append(TableRow(splits_label=label, scheme=scheme,
                                 model=model))
    return rows


def table2_rows() -> list[TableRow]:
    """Competitor-table layout: the same eight designs, one cell each."""
    return [TableRow(splits_label=ADAPTIVE, scheme=None, model=model)
            for model in _row_models()]


SCREENERS = (ScreenMethod.LASSO, ScreenMethod.STEPWISE, ScreenMethod.MARGINAL)


def table1_cells(rows=None, alpha: float = 0.05,
                 replicates_large: int | None = None) -> list[CellSpec]:
    """Flatten table-1 rows into cells (three screeners per row).

    ``replicates_large`` optionally overrides the replicate count on the
    p = 1000 designs, which cost the most per replicate.
    """
    specs = []
    for row in (table1_rows() if rows is None else rows):
        for method in SCREENERS:
            reps = replicates_large if (replicates_large is not None
                                        and row.model.p >= 1000) else None
            specs.append(CellSpec(model=row.model, method=method,
                                  splits=row.scheme, alpha=alpha,
                                  replicates=reps))
    return specs


def table2_cells(alpha: float = 0.05,
                 replicates_large: int | None = None) -> list[CellSpec]:
    specs = []
    for row in table2_rows():
        reps = replicates_large if (replicates_large is not None
                                    and row.model.p >= 1000) else None
        specs.append(CellSpec(model=row.model, method=ADAPTIVE, splits=None,
                              alpha=alpha, replicates=reps))
    return specs
