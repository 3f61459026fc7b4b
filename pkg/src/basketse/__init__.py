"""Standard errors for e-commerce A/B test metrics under user-clustered dependence."""

__version__ = "0.1.0"

from .delta import UserAggregate, UserAggregates, delta_se, user_level_aggregates
from .errors import BasketSEError
from .estimate import estimate_se
from .inference import (
    CoverageQuery,
    PowerQuery,
    confidence_interval,
    coverage_under_inflation,
    power,
    t_cdf,
    t_quantile,
    two_sample_test,
)
from .ingest import CleaningReport, parse_generic, parse_olist, parse_uci, summarize, write_generic_csv
from .model import (
    Dataset,
    LineItem,
    MetricKind,
    ResponseSample,
    SEEstimate,
    TransactionRecord,
    build_transactions,
    lag_correlation,
    responses_for_metric,
    vanilla_se,
)
from .resampling import BootstrapConfig, bootstrap_mean, bootstrap_se, poisson_weight, trajectory
from .simulation import HarnessResult, SynthConfig, generate, run_aa, run_ab, run_simulate
