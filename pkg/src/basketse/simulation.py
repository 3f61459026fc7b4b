"""Synthetic clustered transactions and A/A / A/B validation harnesses.

Generator
---------
* baskets per user: zero-truncated Poisson with rate ``basket_rate`` (or a
  fixed ``baskets_per_user``);
* basket value: lognormal, ``log V = log_value_mean + a_user + e`` with
  ``Var(a) = rho * sd^2`` and ``Var(e) = (1 - rho) * sd^2``, so the
  intraclass correlation of log basket values is exactly ``rho``;
* basket size: zero-truncated Poisson whose rate is scaled by a per-user
  lognormal multiplier sized so the size ICC is close to ``rho``
  (at ``rho = 1`` every basket of a user has the same size);
* products: each user's product preferences follow a Dirichlet with total
  concentration ``product_concentration`` around a Zipf popularity profile,
  sampled through its Polya-urn predictive (a unit repeats one of the user's
  earlier products with probability j / (j + concentration));
* unit prices split the basket value across its units in proportion to a
  per-product price index, so they depend on both user and product.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, EmptySampleError, InsufficientSampleError
from .estimate import METHODS, estimate_se
from .inference import two_sample_test
from .model import TRANSACTION_COLUMNS, Dataset, MetricKind, metric_value

_EPOCH = pd.Timestamp("2021-01-01")
MIN_REPS = 100


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 2000
    basket_rate: float = 3.0
    rho: float = 0.5
    baskets_per_user: Optional[int] = None
    log_value_mean: float = 3.5
    log_value_sd: float = 0.5
    size_rate: float = 2.0
    n_products: int = 500
    product_concentration: float = 5.0
    product_price_sd: float = 0.5
    zipf_exponent: float = 1.0
    span_days: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        if not self.basket_rate > 0:
            raise ConfigError(f"basket_rate must be positive, got {self.basket_rate}")
        if self.baskets_per_user is not None and self.baskets_per_user < 1:
            raise ConfigError("baskets_per_user must be >= 1")
        if self.n_users < 1 or self.n_products < 1:
            raise ConfigError("n_users and n_products must be >= 1")
        if not (self.size_rate > 0 and self.product_concentration > 0 and self.span_days > 0):
            raise ConfigError("size_rate, product_concentration and span_days must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown SynthConfig keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def _zt_poisson(rng, rate, size=None):
    """Zero-truncated Poisson: zeros are redrawn until positive."""
    rate = np.broadcast_to(np.asarray(rate, dtype=np.float64), size if size is not None else np.shape(rate))
    k = rng.poisson(rate)
    zero = np.flatnonzero(k == 0)
    while zero.size:
        k[zero] = rng.poisson(rate[zero])
        zero = zero[k[zero] == 0]
    return k.astype(np.int64)


def _product_draws(rng, unit_user, config: SynthConfig):
    """Product of each unit via the per-user Polya urn; ``unit_user`` must be sorted."""
    n_units = unit_user.size
    popularity = 1.0 / np.arange(1, config.n_products + 1) ** config.zipf_exponent
    popularity /= popularity.sum()
    fresh = rng.choice(config.n_products, size=n_units, p=popularity)
    starts = np.flatnonzero(np.r_[True, unit_user[1:] != unit_user[:-1]])
    lengths = np.diff(np.r_[starts, n_units])
    position = np.arange(n_units) - np.repeat(starts, lengths)
    alpha = config.product_concentration
    repeat = rng.random(n_units) < position / (position + alpha)
    pick = np.floor(rng.random(n_units) * position).astype(np.int64)
    products = fresh.copy()
    for j in range(1, int(lengths.max(initial=1))):
        at = np.flatnonzero((position == j) & repeat)
        if at.size:
            products[at] = products[at - j + pick[at]]
    return products


def generate(config: SynthConfig) -> Dataset:
    """Draw a synthetic dataset; identical configs give identical datasets."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    U = config.n_users
    if config.baskets_per_user is not None:
        counts = np.full(U, config.baskets_per_user, dtype=np.int64)
    else:
        counts = _zt_poisson(rng, config.basket_rate, U)
    basket_user = np.repeat(np.arange(U), counts)
    n_baskets = basket_user.size

    sd, rho = config.log_value_sd, config.rho
    user_effect = rng.normal(0.0, sd * math.sqrt(rho), U)
    noise = rng.normal(0.0, sd * math.sqrt(1 - rho), n_baskets)
    values = np.exp(config.log_value_mean + user_effect[basket_user] + noise)

    if rho >= 1:
        sizes = _zt_poisson(rng, config.size_rate, U)[basket_user]
    else:
        s2 = math.log1p(rho / (config.size_rate * (1 - rho)))
        multiplier = np.exp(rng.normal(-0.5 * s2, math.sqrt(s2), U))
        sizes = _zt_poisson(rng, config.size_rate * multiplier[basket_user])

    offsets = rng.random(n_baskets) * config.span_days * 86400.0
    timestamps = _EPOCH + pd.to_timedelta(np.floor(offsets).astype(np.int64), unit="s")

    unit_basket = np.repeat(np.arange(n_baskets), sizes)
    unit_product = _product_draws(rng, basket_user[unit_basket], config)
    price_index = np.exp(rng.normal(0.0, config.product_price_sd, config.n_products))

    # one line item per distinct (basket, product)
    key = unit_basket * config.n_products + unit_product
    cells, quantity = np.unique(key, return_counts=True)
    item_basket = cells // config.n_products
    item_product = cells % config.n_products
    weight = price_index[item_product] * quantity
    basket_weight = np.bincount(item_basket, weight, minlength=n_baskets)
    unit_price = values[item_basket] * price_index[item_product] / basket_weight[item_basket]

    items = pd.DataFrame(
        {
            "user_id": basket_user[item_basket],
            "transaction_id": item_basket,
            "product_id": item_product,
            "unit_price": unit_price,
            "quantity": quantity.astype(np.int64),
            "timestamp": timestamps[item_basket],
        }
    )
    tx = pd.DataFrame(
        {
            "transaction_id": np.arange(n_baskets),
            "user_id": basket_user,
            "basket_value": np.bincount(item_basket, unit_price * quantity, minlength=n_baskets),
            "basket_size": sizes.astype(np.int64),
            "timestamp": timestamps,
        }
    )
    return Dataset(items, tx.loc[:, list(TRANSACTION_COLUMNS)])


def scale_user_values(dataset: Dataset, user_ids, factor: float) -> Dataset:
    """Multiply the spend of ``user_ids`` by ``factor`` (prices and basket values alike)."""
    users = pd.Index(user_ids)
    items = dataset.items.copy()
    tx = dataset.transactions.copy()
    hit = items["user_id"].isin(users)
    items.loc[hit, "unit_price"] *= factor
    hit = tx["user_id"].isin(users)
    tx.loc[hit, "basket_value"] *= factor
    return Dataset(items, tx)


@dataclass
class HarnessResult:
    """Outcome of a simulation run.

    ``rate`` is empirical CI coverage of the true difference (A/A) or
    rejection rate (A/B), per method, with binomial standard error
    ``rate_se``. ``mean_se`` is the mean SE of the group difference (A/A,
    A/B) or of the full-sample metric (simulate).
    """

    kind: str
    reps: int
    metric: str
    methods: list
    mean_se: dict
    rate: dict = field(default_factory=dict)
    rate_se: dict = field(default_factory=dict)
    mean_ratio_to_vanilla: dict = field(default_factory=dict)
    alpha: float = 0.05
    effect: Optional[float] = None
    B: int = 200
    seed: int = 0
    skipped: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _rep_seeds(seed: int, rep: int, n: int) -> list:
    return [int(s) for s in np.random.SeedSequence([seed, rep]).generate_state(n, np.uint64)]


def replication_dataset(config: SynthConfig, seed: int, rep: int) -> Dataset:
    """The dataset :func:`run_simulate` draws for replication ``rep``."""
    return generate(replace(config, seed=_rep_seeds(seed, rep, 2)[0]))


def _check_methods(methods):
    methods = list(methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown SE methods: {', '.join(bad)}")
    return methods


def _experiment_rep(config, rep, seed, metric, methods, B, alpha, effect):
    gen_seed, split_seed, boot_a, boot_b = _rep_seeds(seed, rep, 4)
    data = generate(replace(config, seed=gen_seed))
    users = np.arange(config.n_users)
    treated = np.random.default_rng(split_seed).random(users.size) < 0.5
    group_a = data.restrict_users(users[~treated])
    group_b = data.restrict_users(users[treated])
    if effect:
        group_b = scale_user_values(group_b, users[treated], 1.0 + effect)
    out = {}
    try:
        mean_a, mean_b = metric_value(group_a, metric), metric_value(group_b, metric)
        for method in methods:
            se_a = estimate_se(group_a, metric, method, B=B, seed=boot_a).se
            se_b = estimate_se(group_b, metric, method, B=B, seed=boot_b).se
            test = two_sample_test(mean_a, se_a, mean_b, se_b, alpha)
            out[method] = (test.se, test.ci_low <= 0.0 <= test.ci_high, test.p_value < alpha)
    except (EmptySampleError, InsufficientSampleError, ConfigError):
        return None
    return out


def _run_experiments(kind, config, reps, methods, B, seed, metric, alpha, effect, workers):
    if reps < MIN_REPS:
        raise ConfigError(f"need at least {MIN_REPS} replications, got {reps}")
    metric = MetricKind.parse(metric)
    methods = _check_methods(methods)
    seed = config.seed if seed is None else seed

    def one(rep):
        return _experiment_rep(config, rep, seed, metric, methods, B, alpha, effect)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(rep) for rep in range(reps)]
    valid = [r for r in results if r is not None]
    if not valid:
        raise InsufficientSampleError("every replication was degenerate")
    index = 1 if kind == "aa" else 2
    rate, rate_se, mean_se = {}, {}, {}
    for method in methods:
        hits = np.array([r[method][index] for r in valid], dtype=float)
        p = float(hits.mean())
        rate[method] = p
        rate_se[method] = math.sqrt(p * (1 - p) / hits.size)
        mean_se[method] = float(np.mean([r[method][0] for r in valid]))
    return HarnessResult(
        kind=kind, reps=reps, metric=metric.value, methods=methods, mean_se=mean_se, rate=rate,
        rate_se=rate_se, alpha=alpha, effect=effect, B=B, seed=int(seed),
        skipped=reps - len(valid), config=config.to_dict(),
    )


def run_aa(config: SynthConfig, reps: int, methods: Sequence[str] = ("vanilla", "boot1"), B: int = 200,
           seed: Optional[int] = None, metric="abv", alpha: float = 0.05, workers: int = 1) -> HarnessResult:
    """A/A harness: users split 50/50 by independent fair coins; ``rate`` is CI coverage of 0."""
    return _run_experiments("aa", config, reps, methods, B, seed, metric, alpha, None, workers)


def run_ab(config: SynthConfig, reps: int, effect: float, methods: Sequence[str] = ("vanilla", "boot1"),
           B: int = 200, seed: Optional[int] = None, metric="abv", alpha: float = 0.05,
           workers: int = 1) -> HarnessResult:
    """A/B harness: treatment spend scaled by ``1 + effect``; ``rate`` is the rejection rate."""
    if effect < 0:
        raise ConfigError(f"effect must be non-negative, got {effect}")
    return _run_experiments("ab", config, reps, methods, B, seed, metric, alpha, float(effect), workers)


def run_simulate(config: SynthConfig, reps: int, methods: Sequence[str] = ("vanilla", "boot1", "delta"),
                 B: int = 200, seed: Optional[int] = None, metric="abv") -> HarnessResult:
    """SE of the full-sample metric per method, averaged over ``reps`` generated datasets."""
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    metric = MetricKind.parse(metric)
    methods = _check_methods(methods)
    seed = config.seed if seed is None else seed
    ses = {m: [] for m in methods}
    ratios = {m: [] for m in methods}
    for rep in range(reps):
        boot_seed = _rep_seeds(seed, rep, 2)[1]
        data = replication_dataset(config, seed, rep)
        for method in methods:
            est = estimate_se(data, metric, method, B=B, seed=boot_seed)
            ses[method].append(est.se)
            ratios[method].append(est.ratio_to_vanilla)
    return HarnessResult(
        kind="simulate", reps=reps, metric=metric.value, methods=methods,
        mean_se={m: float(np.mean(v)) for m, v in ses.items()},
        mean_ratio_to_vanilla={m: float(np.mean(v)) for m, v in ratios.items()},
        B=B, seed=int(seed), config=config.to_dict(),
    )
