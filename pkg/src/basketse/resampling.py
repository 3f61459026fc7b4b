"""Cluster-level Poisson bootstrap for standard errors.

Every resample reweights whole clusters with independent Poisson(1) draws:
one weight per user (one-way), or one per user and one per product combined
multiplicatively per response (multi-way). Resample ``r`` draws from its own
counter-based Philox stream keyed by the master seed, so results do not
depend on evaluation order, chunking or thread count.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    DegenerateResampleError,
    EmptySampleError,
    InsufficientSampleError,
    UnsupportedMetricError,
)
from .inference import critical_value
from .model import (
    Dataset,
    MetricKind,
    ResponseSample,
    SEEstimate,
    responses_for_metric,
    vanilla_se,
)

_MASK64 = (1 << 64) - 1
# Poisson(1) CDF; beyond k=18 the partial sums round to 1.0 in double precision
_POISSON1_CDF = np.cumsum([math.exp(-1) / math.factorial(k) for k in range(20)])
_CELL_BUDGET = 1 << 21
_MAX_REDRAWS = 1000


class BootstrapMode(str, enum.Enum):
    ONE_WAY = "one-way"
    MULTI_WAY = "multi-way"

    @property
    def method_tag(self) -> str:
        return f"bootstrap-{self.value}"


@dataclass(frozen=True)
class BootstrapConfig:
    """Resampling settings. ``threads`` caps parallelism and never changes results."""

    seed: int
    B: int = 500
    mode: BootstrapMode = BootstrapMode.ONE_WAY
    batches: int = 10
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", BootstrapMode(self.mode))
        if self.B < 2:
            raise ConfigError(f"B must be at least 2, got {self.B}")
        if self.batches < 1 or self.B % self.batches:
            raise ConfigError(f"batch count {self.batches} must divide B = {self.B}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ConfigError("seed must be a non-negative 64-bit integer")


def resample_stream(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    """Random stream for resample ``index``: Philox keyed by ``seed``, counter (0, 0, attempt, index)."""
    counter = np.array([0, 0, attempt, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64, counter=counter))


def poisson_weight(stream: np.random.Generator, size=None):
    """Poisson(1) draws by inversion of the tabulated CDF."""
    u = stream.random(size)
    k = np.searchsorted(_POISSON1_CDF, u, side="right")
    return int(k) if size is None else k.astype(np.int64)


def bootstrap_mean(sample: ResponseSample, user_weights, product_weights=None) -> float:
    """sum(w_i q_i x_i) / sum(w_i q_i), w_i the (product of) cluster weights of response i."""
    w = np.asarray(user_weights, dtype=np.float64)[sample.user_codes]
    if product_weights is not None:
        if sample.product_codes is None:
            raise UnsupportedMetricError("product weights given for a sample without product labels")
        w = w * np.asarray(product_weights, dtype=np.float64)[sample.product_codes]
    w = w * sample.weights
    total = w.sum()
    if total == 0:
        raise DegenerateResampleError("resample has zero total weight")
    return float(np.dot(w, sample.values) / total)


class _ClusterSums:
    """Per-cell sums of centred responses; a cell is a user (one-way) or a user x product pair."""

    def __init__(self, sample: ResponseSample, mode: BootstrapMode):
        centred = sample.weights * (sample.values - sample.mean)
        self.mode = mode
        self.n_users = sample.n_users
        self.n_products = sample.n_products
        if mode is BootstrapMode.ONE_WAY:
            self.cell_user = None
            self.num = np.bincount(sample.user_codes, centred, minlength=sample.n_users)
            self.den = np.bincount(sample.user_codes, sample.weights, minlength=sample.n_users)
        else:
            if sample.product_codes is None:
                raise UnsupportedMetricError(
                    "multi-way bootstrap needs product labels; only ASP samples carry them"
                )
            key = sample.user_codes * sample.n_products + sample.product_codes
            cells, inverse = np.unique(key, return_inverse=True)
            self.cell_user = cells // sample.n_products
            self.cell_product = cells % sample.n_products
            self.num = np.bincount(inverse, centred, minlength=cells.size)
            self.den = np.bincount(inverse, sample.weights, minlength=cells.size)
        # fixed by the data alone, so chunking never depends on thread count
        self.chunk = max(1, min(64, _CELL_BUDGET // max(self.num.size, 1)))

    def draw(self, seed, index, attempt=0):
        stream = resample_stream(seed, index, attempt)
        wu = poisson_weight(stream, self.n_users)
        if self.mode is BootstrapMode.ONE_WAY:
            return wu.astype(np.float64)
        wp = poisson_weight(stream, self.n_products)
        return (wu[self.cell_user] * wp[self.cell_product]).astype(np.float64)

    def chunk_means(self, seed, start, stop):
        """Centred bootstrap means for resamples [start, stop) and the redraw count."""
        w = np.stack([self.draw(seed, r) for r in range(start, stop)])
        num = (w * self.num).sum(axis=1)
        den = (w * self.den).sum(axis=1)
        redraws = 0
        for j in np.flatnonzero(den == 0):
            attempt = 0
            while den[j] == 0:
                attempt += 1
                redraws += 1
                if attempt > _MAX_REDRAWS:
                    raise DegenerateResampleError(
                        f"resample {start + j} stayed degenerate after {_MAX_REDRAWS} redraws"
                    )
                wj = self.draw(seed, start + j, attempt)
                num[j] = (wj * self.num).sum()
                den[j] = (wj * self.den).sum()
        return num / den, redraws


def bootstrap_means(sample: ResponseSample, config: BootstrapConfig) -> tuple[np.ndarray, int]:
    """The B bootstrap means in resample-index order, plus the number of degenerate redraws."""
    if len(sample) == 0 or sample.n <= 0:
        raise EmptySampleError("cannot bootstrap an empty sample")
    sums = _ClusterSums(sample, config.mode)
    bounds = [(s, min(s + sums.chunk, config.B)) for s in range(0, config.B, sums.chunk)]
    if config.threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(lambda b: sums.chunk_means(config.seed, *b), bounds))
    else:
        parts = [sums.chunk_means(config.seed, *b) for b in bounds]
    means = np.concatenate([p[0] for p in parts]) + sample.mean
    return means, sum(p[1] for p in parts)


def batch_cv(means, batches: int) -> float:
    """Coefficient of variation of the SE estimate from ``batches`` equal batches of means.

    The per-batch SEs scatter with sd ~ sqrt(batches) times that of the
    full-B estimate, hence the division by sqrt(batches).
    """
    means = np.asarray(means, dtype=np.float64)
    size = means.size // batches
    if batches < 2 or size < 2:
        return math.nan
    per_batch = means[: batches * size].reshape(batches, size).std(axis=1, ddof=1)
    centre = per_batch.mean()
    if centre == 0:
        return 0.0
    return float(per_batch.std(ddof=1) / (centre * math.sqrt(batches)))


def bootstrap_se(sample: ResponseSample, config: BootstrapConfig) -> SEEstimate:
    """Standard deviation (ddof=1) of the B bootstrap means, with its batch CV and ratio to vanilla."""
    means, redraws = bootstrap_means(sample, config)
    est = SEEstimate(
        se=float(means.std(ddof=1)),
        method=config.mode.method_tag,
        n=sample.n,
        B=config.B,
        cv=batch_cv(means, config.batches),
        seed=int(config.seed),
        degenerate_redraws=redraws,
    )
    if sample.n >= 2:
        est = est.with_ratio(vanilla_se(sample))
    return est


@dataclass(frozen=True)
class TrajectoryPoint:
    fraction: float
    n: float
    vanilla_se: float
    boot_se: float
    ratio: float
    ratio_lo: float
    ratio_hi: float
    cv: float
    skipped: bool = False


def trajectory(dataset: Dataset, metric, points: int, config: BootstrapConfig, level=0.95):
    """Bootstrap and vanilla SEs over expanding windows ending at fractions k/points of the span.

    The ratio interval is ratio * (1 -/+ z * cv), a normal approximation
    driven by the bootstrap SE's own resampling noise. Windows with fewer
    than two responses come back as ``skipped`` points filled with NaN.
    """
    if points < 2:
        raise ConfigError(f"trajectory needs at least 2 points, got {points}")
    metric = MetricKind.parse(metric)
    z = critical_value(1 - level)
    out = []
    for k in range(1, points + 1):
        fraction = k / points
        window = dataset.expanding_window(fraction)
        try:
            sample = responses_for_metric(window, metric)
            van = vanilla_se(sample)
        except (EmptySampleError, InsufficientSampleError):
            nan = math.nan
            out.append(TrajectoryPoint(fraction, 0.0, nan, nan, nan, nan, nan, nan, skipped=True))
            continue
        boot = bootstrap_se(sample, config)
        ratio = boot.ratio_to_vanilla
        spread = z * boot.cv * ratio if boot.cv == boot.cv else math.nan
        out.append(
            TrajectoryPoint(
                fraction, sample.n, van.se, boot.se, ratio, ratio - spread, ratio + spread, boot.cv
            )
        )
    return out


TRAJECTORY_COLUMNS = ("fraction", "vanilla_se", "boot_se", "ratio", "ratio_lo", "ratio_hi", "method", "B", "seed")


def trajectory_frame(points, config: BootstrapConfig) -> pd.DataFrame:
    rows = [
        (p.fraction, p.vanilla_se, p.boot_se, p.ratio, p.ratio_lo, p.ratio_hi,
         config.mode.method_tag, config.B, int(config.seed))
        for p in points
    ]
    return pd.DataFrame(rows, columns=list(TRAJECTORY_COLUMNS))
