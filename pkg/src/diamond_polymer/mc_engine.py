"""Monte Carlo for the normalized partition function W_n.

Pool (population dynamics) evolution of the law of W_n through
W_{k+1} = (1/b) sum_i prod_j W_k^{(i,j)}, exact samplers and path-sum
evaluation on small lattices, fluctuation statistics and free-energy gaps.

Pools are stored as log W so that products and the outer average can be
formed with sums and log-sum-exp even when the law is heavy tailed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from . import disorder as dis
from .disorder import DisorderModel
from .variance_map import moment_step
from .lattice import (
    DEFAULT_ENUMERATION_CAP,
    EdgeId,
    LatticeParams,
    edge_count,
    edge_index,
    enumerate_paths,
    path_count,
    path_edges,
)

BLOCK_SIZE = 1 << 16
EXACT_EDGE_LIMIT = 10**8
MIN_POOL = 10
MIN_STATS_POOL = 1000

# stream tags, first element of every substream key
_TAG_INIT = 0
_TAG_ADVANCE = 1
_TAG_EXACT = 2
_TAG_EDGES = 3


class DepthTooLargeError(ValueError):
    pass


class MissingEdgeValueError(KeyError):
    pass


@dataclass(frozen=True)
class RngSpec:
    """Seed plus a hierarchical stream id.

    Substreams are Philox generators keyed by ``(seed, stream + extra)``
    through numpy's SeedSequence spawn keys, so the draws of a block depend
    only on its key and never on scheduling.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def child(self, *key: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream + tuple(int(k) for k in key))

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.stream + tuple(int(k) for k in key))
        return np.random.Generator(np.random.Philox(ss))


@dataclass
class SamplePool:
    level: int
    log_values: np.ndarray
    beta: float
    params: LatticeParams
    model: DisorderModel

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def pool_size(self) -> int:
        return len(self.log_values)

    def deviations(self) -> np.ndarray:
        """W - 1, computed without cancellation near 1."""
        return np.expm1(self.log_values)

    def mean(self) -> float:
        return 1.0 + float(np.mean(self.deviations()))

    def variance(self) -> float:
        return float(np.var(self.deviations(), ddof=1))


def _blocks(size: int) -> list[tuple[int, int, int]]:
    return [(i, lo, min(lo + BLOCK_SIZE, size)) for i, lo in enumerate(range(0, size, BLOCK_SIZE))]


def _run_blocks(fn, size: int, workers: int) -> None:
    blocks = _blocks(size)
    if workers <= 1 or len(blocks) == 1:
        for blk in blocks:
            fn(*blk)
        return
    with ThreadPoolExecutor(max_workers=workers) as ex:
        list(ex.map(lambda blk: fn(*blk), blocks))


def init_pool(
    model: DisorderModel,
    beta: float,
    size: int,
    rng: RngSpec,
    params: LatticeParams | None = None,
    workers: int = 1,
) -> SamplePool:
    """Level-0 pool of i.i.d. normalized edge weights exp(beta*omega - lambda)."""
    if size < MIN_POOL:
        raise ValueError(f"pool size must be >= {MIN_POOL}, got {size}")
    if params is None:
        params = LatticeParams(2, 2, 0)
    lam = dis.log_mgf(model, beta)
    out = np.empty(size)

    def fill(block, lo, hi):
        omega = dis.sample(model, rng.generator(_TAG_INIT, 0, block), hi - lo)
        out[lo:hi] = beta * omega - lam

    _run_blocks(fill, size, workers)
    return SamplePool(0, out, beta, params, model)


def _combine(logs: np.ndarray, b: int) -> np.ndarray:
    """log of (1/b) sum_i prod_j exp(logs[..., i, j])."""
    prods = logs.sum(axis=-1)
    if b == 2:
        return np.logaddexp(prods[..., 0], prods[..., 1]) - math.log(2.0)
    return logsumexp(prods, axis=-1) - math.log(b)


def advance_pool(
    pool: SamplePool,
    rng: RngSpec,
    workers: int = 1,
    renormalize: bool = True,
) -> SamplePool:
    """One level of the recursion by resampling the previous generation.

    Each offspring combines b*s parent values drawn uniformly with
    replacement.  With ``renormalize`` the new generation is divided by its
    sample mean: the exact law has mean one, while a finite pool's mean
    error is multiplied by b at every level.
    """
    b, s = pool.params.b, pool.params.s
    size = pool.pool_size
    parent = pool.log_values
    out = np.empty(size)
    level = pool.level + 1

    def fill(block, lo, hi):
        gen = rng.generator(_TAG_ADVANCE, level, block)
        idx = gen.integers(0, size, size=(hi - lo, b, s))
        out[lo:hi] = _combine(parent[idx], b)

    _run_blocks(fill, size, workers)
    if renormalize:
        out -= logsumexp(out) - math.log(size)
    return SamplePool(level, out, pool.beta, pool.params, pool.model)


def evolve_pool(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    levels: int,
    size: int,
    rng: RngSpec,
    workers: int = 1,
    renormalize: bool = True,
) -> Iterator[SamplePool]:
    """Yield the pools at levels 0..levels."""
    pool = init_pool(model, beta, size, rng, params, workers)
    yield pool
    for _ in range(levels):
        pool = advance_pool(pool, rng, workers, renormalize)
        yield pool


# -- exact evaluation on small lattices ---------------------------------------


def _reduce_levels(log_leaf: np.ndarray, params: LatticeParams) -> np.ndarray:
    """Apply the recursion from the leaves up; last axis is in edge order."""
    b, s = params.b, params.s
    x = log_leaf
    for _ in range(params.n):
        x = _combine(x.reshape(x.shape[:-1] + (-1, b, s)), b)
    return x[..., 0]


def exact_sample_W_batch(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    count: int,
    rng: RngSpec,
    chunk: int = 4096,
) -> np.ndarray:
    """``count`` independent exact draws of W_n from fresh edge disorder."""
    edges = edge_count(params)
    if edges > EXACT_EDGE_LIMIT:
        raise DepthTooLargeError(f"{edges} edges exceeds the exact-sampling limit {EXACT_EDGE_LIMIT}")
    lam = dis.log_mgf(model, beta)
    chunk = max(1, min(chunk, EXACT_EDGE_LIMIT // max(edges, 1)))
    out = np.empty(count)
    for c, lo in enumerate(range(0, count, chunk)):
        hi = min(lo + chunk, count)
        omega = dis.sample(model, rng.generator(_TAG_EXACT, c), (hi - lo, edges))
        out[lo:hi] = np.exp(_reduce_levels(beta * omega - lam, params))
    return out


def exact_sample_W(params: LatticeParams, model: DisorderModel, beta: float, rng: RngSpec) -> float:
    return float(exact_sample_W_batch(params, model, beta, 1, rng)[0])


def random_edge_values(params: LatticeParams, model: DisorderModel, rng: RngSpec) -> np.ndarray:
    """One disorder assignment, as an array in lattice edge order."""
    return dis.sample(model, rng.generator(_TAG_EDGES), edge_count(params))


def _edge_array(params: LatticeParams, edge_values) -> np.ndarray:
    if isinstance(edge_values, Mapping):
        arr = np.full(edge_count(params), np.nan)
        for key, value in edge_values.items():
            arr[edge_index(key, params)] = value
        if np.isnan(arr).any():
            missing = int(np.isnan(arr).sum())
            raise MissingEdgeValueError(f"{missing} edges have no disorder value")
        return arr
    arr = np.asarray(edge_values, dtype=float)
    if arr.shape != (edge_count(params),):
        raise MissingEdgeValueError(
            f"expected {edge_count(params)} edge values, got shape {arr.shape}"
        )
    return arr


_PATH_MATRIX_CACHE: dict[tuple[LatticeParams, int], np.ndarray] = {}


def path_edge_matrix(params: LatticeParams, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Integer matrix whose row p lists the edge indices on path p."""
    key = (params, cap)
    if key not in _PATH_MATRIX_CACHE:
        rows = [
            [edge_index(e, params) for e in path_edges(path, params)]
            for path in enumerate_paths(params, cap)
        ]
        _PATH_MATRIX_CACHE[key] = np.array(rows, dtype=np.int64).reshape(len(rows), -1)
    return _PATH_MATRIX_CACHE[key]


def enumeration_partition(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    edge_values: Mapping[EdgeId, float] | np.ndarray,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[float, float]:
    """(Z_n, W_n) by summing exp(beta * H(p)) over every directed path."""
    omega = _edge_array(params, edge_values)
    paths = path_edge_matrix(params, cap)
    energies = beta * omega[paths].sum(axis=1)
    log_z = float(logsumexp(energies)) - math.log(path_count(params))
    log_w = log_z - params.s**params.n * dis.log_mgf(model, beta)
    return math.exp(log_z), math.exp(log_w)


def recursive_partition(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    edge_values: Mapping[EdgeId, float] | np.ndarray,
) -> float:
    """W_n of one disorder assignment via the subgraph recursion."""
    omega = _edge_array(params, edge_values)
    lam = dis.log_mgf(model, beta)
    return float(np.exp(_reduce_levels(beta * omega - lam, params)))


# -- statistics -----------------------------------------------------------------


@dataclass
class FluctuationStats:
    count: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    se_mean: float
    se_variance: float
    se_skewness: float
    se_excess_kurtosis: float
    ks_statistic_vs_normal: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sample_stats(x: np.ndarray) -> FluctuationStats:
    x = np.asarray(x, dtype=float)
    n = len(x)
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d * d))
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    var = m2 * n / (n - 1)
    if m2 > 0:
        skew = m3 / m2**1.5
        kurt = m4 / m2**2 - 3.0
        ks = float(stats.kstest(x, "norm", args=(0.0, math.sqrt(var))).statistic)
    else:
        skew = kurt = ks = 0.0
    return FluctuationStats(
        count=n,
        mean=mean,
        variance=var,
        skewness=skew,
        excess_kurtosis=kurt,
        se_mean=math.sqrt(var / n),
        se_variance=math.sqrt(max(m4 - m2 * m2, 0.0) / n),
        se_skewness=math.sqrt(6.0 / n),
        se_excess_kurtosis=math.sqrt(24.0 / n),
        ks_statistic_vs_normal=ks,
    )


def fluct_stats(pool: SamplePool, scale: float) -> FluctuationStats:
    """Moments and KS distance of scale * (W - 1) over the pool."""
    if pool.pool_size < MIN_STATS_POOL:
        raise ValueError(f"fluctuation statistics need >= {MIN_STATS_POOL} samples")
    return sample_stats(scale * pool.deviations())


@dataclass
class LevelSummary:
    k: int
    mean: float
    variance: float
    rho4_over_rho2sq: float
    se_variance: float


def summarize_pool(pool: SamplePool) -> LevelSummary:
    d = pool.deviations()
    n = len(d)
    mean_dev = float(np.mean(d))
    c = d - mean_dev
    m2 = float(np.mean(c * c))
    m4 = float(np.mean(c**4))
    ratio = m4 / (m2 * m2) if m2 > 0 else math.nan
    return LevelSummary(
        k=pool.level,
        mean=1.0 + mean_dev,
        variance=m2 * n / (n - 1),
        rho4_over_rho2sq=ratio,
        se_variance=math.sqrt(max(m4 - m2 * m2, 0.0) / n),
    )


def moment_jacobian(b: int, s: int, central) -> np.ndarray:
    """d(rho_2, rho_3, rho_4)' / d(rho_2, rho_3, rho_4) of one recursion level, by central differences."""
    c = np.asarray(central, dtype=float)
    jac = np.empty((3, 3))
    for j in range(3):
        h = 1e-6 * max(abs(c[j]), 1e-12)
        up, dn = c.copy(), c.copy()
        up[j] += h
        dn[j] -= h
        f_up = moment_step(b, [1.0, 0.0, *up], s)[2:]
        f_dn = moment_step(b, [1.0, 0.0, *dn], s)[2:]
        jac[:, j] = (np.array(f_up) - np.array(f_dn)) / (2.0 * h)
    return jac


@dataclass
class PoolMoments:
    """Central moment estimates of one pool level with standard errors.

    ``se_sampling`` only reflects the draws of this level.  ``se`` also carries
    the error inherited from earlier levels: each generation is resampled from
    the previous empirical law, so estimation error at level k is pushed
    through the recursion into level k+1 (delta method, V' = J V J^T + C).
    """

    level: int
    central: np.ndarray       # rho_2, rho_3, rho_4
    se_sampling: np.ndarray
    se: np.ndarray


class MomentTracker:
    """Feed pools level by level; returns moments with propagated standard errors."""

    def __init__(self, b: int, s: int):
        self.b = b
        self.s = s
        self._cov: np.ndarray | None = None
        self._prev: np.ndarray | None = None

    def update(self, pool: SamplePool) -> PoolMoments:
        d = pool.deviations()
        x = np.stack([d**2, d**3, d**4])
        est = x.mean(axis=1)
        cov = np.cov(x) / d.size
        if self._cov is None:
            self._cov = cov
        else:
            jac = moment_jacobian(self.b, self.s, self._prev)
            self._cov = jac @ self._cov @ jac.T + cov
        self._prev = est
        return PoolMoments(
            level=pool.level,
            central=est,
            se_sampling=np.sqrt(np.diag(cov)),
            se=np.sqrt(np.maximum(np.diag(self._cov), 0.0)),
        )


def track_moments(pools, params: LatticeParams) -> list[PoolMoments]:
    tracker = MomentTracker(params.b, params.s)
    return [tracker.update(p) for p in pools]


# -- free energy ------------------------------------------------------------------


@dataclass
class FreeEnergyEstimate:
    n: int
    lam: float
    p_hat: float
    gap: float
    se: float


def free_energy_profile(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    n_max: int,
    pool_size: int,
    rng: RngSpec,
    workers: int = 1,
    renormalize: bool = True,
) -> list[FreeEnergyEstimate]:
    """Gap lambda(beta) - E[log Z_n]/s^n for n = 1..n_max from one pool run.

    Uses Z_n = W_n exp(s^n lambda), so the gap is -E[log W_n]/s^n.
    """
    params.require_equal_branching()
    if n_max < 1:
        raise ValueError(f"n must be >= 1, got {n_max}")
    lam = dis.log_mgf(model, beta)
    out = []
    for pool in evolve_pool(params, model, beta, n_max, pool_size, rng, workers, renormalize):
        if pool.level == 0:
            continue
        scale = float(params.s) ** pool.level
        logs = pool.log_values
        gap = -float(np.mean(logs)) / scale
        se = float(np.std(logs, ddof=1)) / math.sqrt(len(logs)) / scale
        out.append(FreeEnergyEstimate(pool.level, lam, lam - gap, gap, se))
    return out


def free_energy_gap(
    params: LatticeParams,
    model: DisorderModel,
    beta: float,
    n: int,
    pool_size: int,
    rng: RngSpec,
    workers: int = 1,
) -> tuple[float, float, float, float]:
    """(lambda, p_hat, gap, standard_error) at depth n."""
    est = free_energy_profile(params, model, beta, n, pool_size, rng, workers)[-1]
    return est.lam, est.p_hat, est.gap, est.se
