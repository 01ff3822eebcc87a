"""Pool Monte Carlo for the distributional recursion.

Instead of simulating the full branching structure (whose cost grows like
(1/p)^n), a pool of N samples approximates each generation's law; the next
pool resamples summands from the previous one with replacement.  The
O(1/N) correlation this introduces is absorbed into the 4/sqrt(N)
acceptance slack used by the closed-form comparisons.

Reproducibility: samples are produced in fixed blocks of 2^15 draws, each
block from its own counter-based stream keyed (seed, level, block index).
A thread pool may process blocks concurrently; the output is assembled in
block order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .drivers import ZSpecContinuous, ZSpecDiscrete
from .models import (CLFModel, CLFParams, LFModel, LFParams, clf_step,
                     clf_tail, lf_step, lf_tail)

__all__ = [
    "SamplePool",
    "EmpiricalSummary",
    "ComparisonReport",
    "BLOCK_SIZE",
    "block_rng",
    "sample_geometric",
    "sample_lf",
    "sample_clf",
    "pool_from_lf",
    "pool_from_clf",
    "mc_step",
    "summarize_pool",
    "compare_to_model",
    "run_validation",
]

BLOCK_SIZE = 1 << 15
MIN_POOL = 10 ** 3


@dataclass(frozen=True, eq=False)
class SamplePool:
    """One generation of samples; integer-valued in LF mode."""

    level: int
    samples: np.ndarray
    seed: int
    size: int

    def __post_init__(self):
        if self.size < MIN_POOL:
            raise ValueError(f"pool size {self.size} below minimum {MIN_POOL}")
        if self.samples.shape != (self.size,):
            raise ValueError("sample array does not match declared size")
        self.samples.setflags(write=False)


@dataclass(frozen=True)
class EmpiricalSummary:
    mass_at_zero: float
    tail_probs: tuple  # ((threshold, probability), ...)
    mean: float
    pool_size: int


def block_rng(seed: int, level: int, block: int) -> np.random.Generator:
    """Counter-based stream for one output block; streams are disjoint by
    construction (block and level sit in separate counter words)."""
    counter = np.zeros(4, dtype=np.uint64)
    counter[1] = np.uint64(block)
    counter[2] = np.uint64(level)
    return np.random.Generator(np.random.Philox(key=np.uint64(seed),
                                                counter=counter))


def _blocks(n: int):
    for b, start in enumerate(range(0, n, BLOCK_SIZE)):
        yield b, start, min(BLOCK_SIZE, n - start)


def _fill_blocks(n: int, level: int, seed: int, make_block, threads: int,
                 dtype) -> np.ndarray:
    out = np.empty(n, dtype=dtype)
    tasks = list(_blocks(n))
    if threads <= 1:
        for b, start, size in tasks:
            out[start:start + size] = make_block(block_rng(seed, level, b), size)
    else:
        def job(task):
            b, start, size = task
            return start, size, make_block(block_rng(seed, level, b), size)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for start, size, chunk in pool.map(job, tasks):
                out[start:start + size] = chunk
    return out


# ---------------------------------------------------------------------------
# elementary samplers
# ---------------------------------------------------------------------------

def sample_geometric(p: float, rng: np.random.Generator, size: int | None = None):
    """Geometric on {1, 2, ...} with mean 1/p, by inverse CDF:
    1 + floor(log(U) / log(1-p))."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p={p!r} not in (0, 1]")
    if p == 1.0:
        return 1 if size is None else np.ones(size, dtype=np.int64)
    u = 1.0 - rng.random(size)  # in (0, 1]
    r = 1 + np.floor(np.log(u) / math.log1p(-p))
    if size is None:
        return int(r)
    return r.astype(np.int64)


def sample_lf(params: LFParams, rng: np.random.Generator,
              size: int | None = None):
    """LF sampler: zero with probability 1 - 1/(alpha+beta), otherwise one
    plus a geometric with ratio beta/(alpha+beta)."""
    s = params.alpha + params.beta
    m0 = 1.0 - 1.0 / s
    lam = params.beta / s
    u = rng.random(size if size is not None else 1)
    w = (1.0 - u) * s  # uniform on (0, s]; tail part when w <= 1
    with np.errstate(divide="ignore"):
        k = np.where(w <= 1.0, 1 + np.floor(np.log(np.maximum(w, 1e-320))
                                            / math.log(lam)), 0.0)
    out = k.astype(np.int64)
    if size is None:
        return int(out[0])
    return out


def sample_clf(params: CLFParams, rng: np.random.Generator,
               size: int | None = None):
    """CLF sampler: zero with probability 1 - rho, otherwise exponential
    with rate lambda."""
    u = rng.random(size if size is not None else 1)
    out = np.zeros_like(u)
    if params.rho > 0.0:
        tail = u > 1.0 - params.rho
        w = np.maximum((1.0 - u) / params.rho, 1e-320)
        out = np.where(tail, -np.log(w) / params.lam, 0.0)
    if size is None:
        return float(out[0])
    return out


def _sample_z_discrete(z: ZSpecDiscrete, rng: np.random.Generator,
                       size: int) -> np.ndarray:
    vals, probs = z.values_probs()
    idx = np.searchsorted(np.cumsum(probs), rng.random(size), side="right")
    return vals[np.minimum(idx, len(vals) - 1)].astype(np.int64)


def _sample_z_continuous(z: ZSpecContinuous, rng: np.random.Generator,
                         size: int) -> np.ndarray:
    vals, probs = z.values_probs()
    idx = np.searchsorted(np.cumsum(probs), rng.random(size), side="right")
    return vals[np.minimum(idx, len(vals) - 1)]


# ---------------------------------------------------------------------------
# pools
# ---------------------------------------------------------------------------

def pool_from_lf(params: LFParams, size: int, seed: int,
                 threads: int = 1) -> SamplePool:
    """Exact level-0 pool of LF samples."""
    samples = _fill_blocks(size, 0, seed,
                           lambda rng, n: sample_lf(params, rng, n),
                           threads, np.int64)
    return SamplePool(level=0, samples=samples, seed=seed, size=size)


def pool_from_clf(params: CLFParams, size: int, seed: int,
                  threads: int = 1) -> SamplePool:
    samples = _fill_blocks(size, 0, seed,
                           lambda rng, n: sample_clf(params, rng, n),
                           threads, np.float64)
    return SamplePool(level=0, samples=samples, seed=seed, size=size)


def mc_step(pool: SamplePool, model: LFModel | CLFModel,
            threads: int = 1) -> SamplePool:
    """One generation: per new sample draw R geometric(p) and Z, sum R
    uniform-with-replacement draws from the previous pool, subtract Z,
    clamp at zero."""
    if pool.size == 0:
        raise ValueError("pool is empty")
    discrete = isinstance(model, LFModel)
    prev = pool.samples
    n_prev = len(prev)

    def make_block(rng: np.random.Generator, size: int) -> np.ndarray:
        r = sample_geometric(model.p, rng, size)
        if discrete:
            z = _sample_z_discrete(model.zspec, rng, size)
        else:
            z = _sample_z_continuous(model.zspec, rng, size)
        idx = rng.integers(0, n_prev, size=int(r.sum()))
        offsets = np.concatenate(([0], np.cumsum(r)[:-1]))
        sums = np.add.reduceat(prev[idx], offsets)
        return np.maximum(sums - z, 0 if discrete else 0.0)

    samples = _fill_blocks(pool.size, pool.level + 1, pool.seed, make_block,
                           threads, np.int64 if discrete else np.float64)
    return SamplePool(level=pool.level + 1, samples=samples, seed=pool.seed,
                      size=pool.size)


# ---------------------------------------------------------------------------
# comparison against the closed-form maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    """Per-statistic |empirical - predicted| against a 4/sqrt(N) slack."""

    rows: tuple  # ((name, empirical, predicted, abs_err, tol), ...)
    passed: bool
    pool_size: int

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "pool_size": self.pool_size,
            "stats": [
                {"name": name, "empirical": emp, "predicted": pred,
                 "abs_err": err, "tol": tol, "ok": err <= tol}
                for name, emp, pred, err, tol in self.rows
            ],
        }


def _lf_thresholds(_: LFParams) -> list[int]:
    return [1, 2, 3, 4, 5]


def _clf_thresholds(params: CLFParams) -> list[float]:
    return [k / params.lam for k in (0.5, 1.0, 1.5, 2.0, 3.0)]


def summarize_pool(pool: SamplePool, thresholds,
                   tail_mode: str = "ge") -> EmpiricalSummary:
    """Empirical mass at zero, tails and mean.  ``tail_mode`` picks the
    inequality: 'ge' (P(X >= t), the integer-lattice convention) or 'gt'
    (P(X > t), the continuous one)."""
    x = pool.samples
    n = pool.size
    if tail_mode == "ge":
        tails = tuple((float(t), float(np.count_nonzero(x >= t) / n))
                      for t in thresholds)
    elif tail_mode == "gt":
        tails = tuple((float(t), float(np.count_nonzero(x > t) / n))
                      for t in thresholds)
    else:
        raise ValueError(f"unknown tail_mode {tail_mode!r}")
    return EmpiricalSummary(
        mass_at_zero=float(np.count_nonzero(x == 0) / n),
        tail_probs=tails,
        mean=float(np.mean(x)),
        pool_size=n)


def compare_to_model(pool: SamplePool,
                     predicted: LFParams | CLFParams) -> ComparisonReport:
    """Compare a pool to a predicted law: mass at zero, five tail
    probabilities, and the mean, at tolerance 4/sqrt(N).

    For probabilities 4/sqrt(N) is at least eight standard errors.  The
    mean's standard error is sd/sqrt(N) with sd well above 1 after a few
    generations, so its slack is scaled by the sample sd (never below the
    plain 4/sqrt(N)); otherwise no seed would pass reliably.
    """
    if pool.size < 10 ** 4:
        raise ValueError("need a pool of at least 10^4 samples")
    tol = 4.0 / math.sqrt(pool.size)
    mean_tol = tol * max(1.0, float(np.std(pool.samples)))
    rows = []
    if isinstance(predicted, LFParams):
        summary = summarize_pool(pool, _lf_thresholds(predicted), "ge")
        rows.append(("mass_at_zero", summary.mass_at_zero,
                     1.0 - 1.0 / (predicted.alpha + predicted.beta)))
        for (t, emp) in summary.tail_probs:
            rows.append((f"tail_ge_{int(t)}", emp, lf_tail(predicted, int(t))))
        rows.append(("mean", summary.mean, 1.0 / predicted.alpha))
    else:
        summary = summarize_pool(pool, _clf_thresholds(predicted), "gt")
        rows.append(("mass_at_zero", summary.mass_at_zero, 1.0 - predicted.rho))
        for (t, emp) in summary.tail_probs:
            rows.append((f"tail_gt_{t:g}", emp, clf_tail(predicted, t)))
        rows.append(("mean", summary.mean, predicted.rho / predicted.lam))
    full = tuple((name, emp, pred, abs(emp - pred),
                  mean_tol if name == "mean" else tol)
                 for name, emp, pred in rows)
    return ComparisonReport(rows=full, pool_size=pool.size,
                            passed=all(err <= t for *_, err, t in full))


def run_validation(model: LFModel | CLFModel, params0: LFParams | CLFParams,
                   levels: int, pool_size: int, seed: int,
                   threads: int = 1) -> list[ComparisonReport]:
    """Propagate a pool `levels` generations and compare each one against
    the corresponding closed-form parameters."""
    if isinstance(model, LFModel):
        pool = pool_from_lf(params0, pool_size, seed, threads)
        advance = lf_step
    else:
        pool = pool_from_clf(params0, pool_size, seed, threads)
        advance = clf_step
    params = params0
    reports = [compare_to_model(pool, params)]
    for _ in range(levels):
        pool = mc_step(pool, model, threads)
        params = advance(params, model)
        reports.append(compare_to_model(pool, params))
    return reports
