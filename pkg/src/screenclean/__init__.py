"""Multi-stage variable selection for sparse linear regression.

Screen a list of candidate models (lasso path, forward stepwise, or marginal
regression), pick one by cross-validation, then clean it with
multiplicity-corrected t-tests on held-out data. Includes the Monte Carlo
harness for the benchmark size/power tables and the l1-ball (persistence)
risk machinery.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    Dataset,
    OlsFit,
    SplitMode,
    SplitPlan,
    TrueModel,
    check_loss_bounds,
    eigen_extremes,
    ols_fit,
    restricted_eigen,
    split,
    standardize,
    t_statistics,
)
from .screeners import (  # noqa: F401
    LassoSolution,
    ScreenMethod,
    ScreenPath,
    adaptive_lasso_fit,
    lasso_fit,
    lasso_path,
    marginal_path,
    stepwise_path,
)
from .selection import (  # noqa: F401
    CvScore,
    cv_select,
    loo_cv_select,
    oracle_loss,
    refit_on_path,
)
from .cleaner import (  # noqa: F401
    CleanMode,
    CleanResult,
    clean,
    critical_trisplit,
    critical_twosplit,
    sandwich,
    sandwich_covers,
)
from .pipeline import (  # noqa: F401
    CompetitorConfig,
    KRule,
    PipelineConfig,
    PipelineResult,
    SplitScheme,
    run_adaptive_lasso,
    run_screen_and_clean,
)
from .simulation import (  # noqa: F401
    ModelKind,
    SimModel,
    generate,
    metrics,
    run_table,
)
from .persistence import (  # noqa: F401
    RiskModel,
    constrained_lasso,
    cv_radius_select,
    persistence_gap,
    predictive_risk,
)
