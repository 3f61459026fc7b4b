"""One entry point for every SE method, keyed by the short names used on the command line."""

from __future__ import annotations

from .delta import delta_se, user_level_aggregates
from .errors import ConfigError, UnsupportedMetricError
from .model import Dataset, MetricKind, SEEstimate, responses_for_metric, vanilla_se
from .resampling import BootstrapConfig, BootstrapMode, bootstrap_se

METHODS = ("vanilla", "boot1", "boot2", "delta")
_MODES = {"boot1": BootstrapMode.ONE_WAY, "boot2": BootstrapMode.MULTI_WAY}


def estimate_se(dataset: Dataset, metric, method: str, B=500, seed=None, batches=10, threads=1, window=None) -> SEEstimate:
    """SE of ``metric`` on ``dataset`` by ``method``, annotated with its ratio to the vanilla SE."""
    metric = MetricKind.parse(metric)
    if method not in METHODS:
        raise ConfigError(f"unknown SE method {method!r}; expected one of {', '.join(METHODS)}")
    if method == "delta" and metric is MetricKind.ASP:
        raise UnsupportedMetricError("the delta method is not available for ASP")
    if method == "boot2" and metric is not MetricKind.ASP:
        raise UnsupportedMetricError("multi-way bootstrap needs product clusters; use it with ASP")
    if window is not None:
        dataset = dataset.window(*window)
    sample = responses_for_metric(dataset, metric)
    vanilla = vanilla_se(sample)
    if method == "vanilla":
        return vanilla.with_ratio(vanilla)
    if method == "delta":
        return delta_se(user_level_aggregates(dataset, metric)).with_ratio(vanilla)
    if seed is None:
        raise ConfigError("bootstrap methods need an explicit seed")
    config = BootstrapConfig(seed=seed, B=B, mode=_MODES[method], batches=batches, threads=threads)
    return bootstrap_se(sample, config)
