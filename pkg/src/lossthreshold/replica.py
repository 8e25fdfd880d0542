"""Quenched-average gap between primal and dual cluster factors.

The threshold condition equates the disorder averages of the log cluster
factors. The quantity evaluated here is

    Delta(p, q) = E[ln x_0] - E[ln x_0*]

with the expectation over independent per-slot disorder. Its root in p, at
fixed loss rate q, is the optimal error threshold.

Exact evaluation enumerates every joint disorder assignment (3^S single-layer,
5^S two-layer, including zero-probability states so the term count is
parameter-independent). Monte Carlo sampling covers clusters whose assignment
count exceeds the term budget; it uses a counter-based generator so that the
uniforms attached to (sample, slot) are reproducible and identical across
different p, which keeps the estimated gap continuous during root finding.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import model
from .cluster import ClusterSpec, NonFinite, ShapeMismatch, log_partition_batch
from .duality import NonPositiveDual, log_dual_partition_batch

EXACT = "exact"
MONTE_CARLO = "monte-carlo"
POLICIES = (EXACT, "auto", MONTE_CARLO)

DEFAULT_TERM_BUDGET = 10**8
DEFAULT_MC_SAMPLES = 100_000
MIN_MC_SAMPLES = 1000

# Assignments are processed in fixed-size chunks. The partition depends only on
# the cluster and the total count, never on the worker count, so parallel runs
# are bit-identical: per-chunk sums are combined in chunk order with fsum.
_CHUNK_TARGET = 1 << 20
_CHUNK_MAX = 1 << 16


class TooManyTerms(ValueError):
    """Exact enumeration would exceed the term budget."""


@dataclass(frozen=True)
class GapEvaluation:
    """Value of Delta(p, q) with evaluation metadata."""

    delta: float
    method: str
    std_error: float
    terms: int


def worker_count(workers: int | None = None) -> int:
    """Resolve a worker count: explicit argument, THRESHOLD_WORKERS, or all cores."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("THRESHOLD_WORKERS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _chunk_bounds(total: int, cluster: ClusterSpec) -> list[tuple[int, int]]:
    size = max(1, min(_CHUNK_MAX, _CHUNK_TARGET // cluster.config_count))
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


def _run_chunks(fn, bounds, workers: int) -> list:
    if workers <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def _support_tables(channel: model.ChannelSpec):
    dist = model.disorder_distribution(channel)
    signs = np.array([d.sign for d in dist.support], dtype=np.float64)
    duals = None
    if channel.layers == 2:
        duals = np.array([d.dual_sign for d in dist.support], dtype=np.float64)
    probs = np.array(dist.probs, dtype=np.float64)
    return signs, duals, probs


def _check_layers(channel: model.ChannelSpec, cluster: ClusterSpec):
    if channel.layers != cluster.layers:
        raise ShapeMismatch(
            f"channel {channel.kind!r} has {channel.layers} layer(s) but cluster "
            f"{cluster.name!r} has {cluster.layers}"
        )


def _delta_batch(cluster, K, tau, tau_star, weights=None) -> np.ndarray:
    """Per-assignment ln x_0 - ln x_0* for sign rows.

    Rows whose dual sum is not strictly positive raise NonPositiveDual, except
    rows of zero probability (possible at q = 0 or p on the support boundary),
    which never enter the average and yield 0.
    """
    logp = log_partition_batch(cluster, tau, tau_star, K)
    logd, sign = log_dual_partition_batch(cluster, tau, tau_star, K)
    bad = sign <= 0
    if weights is not None:
        bad = bad & (weights > 0.0)
    if np.any(bad):
        row = int(np.argmax(bad))
        states = [int(t) for t in tau[row]]
        raise NonPositiveDual(
            f"dual sum of cluster {cluster.name!r} is not positive for signs {states} at K={K}"
        )
    return logp - np.where(sign > 0, logd, logp)


def gap(
    channel: model.ChannelSpec,
    cluster: ClusterSpec,
    policy: str = EXACT,
    *,
    mc_samples: int | None = None,
    seed: int = 0,
    term_budget: int = DEFAULT_TERM_BUDGET,
    workers: int | None = None,
) -> GapEvaluation:
    """Evaluate Delta(p, q) for the channel on the cluster.

    policy "exact" enumerates every assignment and raises TooManyTerms past
    the budget; "monte-carlo" always samples; "auto" enumerates when the count
    fits the budget and samples otherwise.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    _check_layers(channel, cluster)
    total = (3 if channel.layers == 1 else 5) ** cluster.slot_count
    if policy == "auto":
        policy = EXACT if total <= term_budget else MONTE_CARLO
    if policy == MONTE_CARLO:
        return gap_monte_carlo(
            channel, cluster, mc_samples or DEFAULT_MC_SAMPLES, seed, workers=workers
        )
    if total > term_budget:
        raise TooManyTerms(
            f"exact enumeration needs {total} assignments (budget {term_budget}); "
            "pass the monte-carlo policy or raise the budget"
        )

    K = model.nishimori_coupling(channel).K
    signs, duals, probs = _support_tables(channel)
    m = len(probs)
    powers = m ** np.arange(cluster.slot_count - 1, -1, -1, dtype=np.int64)

    def chunk_sum(lo: int, hi: int) -> float:
        codes = np.arange(lo, hi, dtype=np.int64)
        idx = (codes[:, None] // powers[None, :]) % m
        tau = signs[idx]
        tau_star = None if duals is None else duals[idx]
        w = probs[idx].prod(axis=1)
        delta = _delta_batch(cluster, K, tau, tau_star, weights=w)
        return float(np.dot(w, delta))

    partials = _run_chunks(chunk_sum, _chunk_bounds(total, cluster), worker_count(workers))
    value = math.fsum(partials)
    if not math.isfinite(value):
        raise NonFinite(f"gap on cluster {cluster.name!r} is not finite at p={channel.p}, q={channel.q}")
    return GapEvaluation(value, EXACT, 0.0, total)


def gap_monte_carlo(
    channel: model.ChannelSpec,
    cluster: ClusterSpec,
    samples: int,
    seed: int = 0,
    *,
    workers: int | None = None,
) -> GapEvaluation:
    """Unbiased sampled estimate of Delta(p, q) with its standard error.

    The uniform for (sample i, slot j) comes from position i*S + j of the
    Philox stream keyed by seed, independent of chunking and of p, so repeated
    calls during root finding share their random numbers.
    """
    _check_layers(channel, cluster)
    samples = int(samples)
    if samples < MIN_MC_SAMPLES:
        raise ValueError(f"need at least {MIN_MC_SAMPLES} samples, got {samples}")
    K = model.nishimori_coupling(channel).K
    signs, duals, probs = _support_tables(channel)
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    S = cluster.slot_count

    def chunk_stats(lo: int, hi: int) -> tuple[float, float]:
        bitgen = np.random.Philox(key=seed)
        bitgen.advance(lo * S)
        u = np.random.Generator(bitgen).random((hi - lo, S))
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
        tau = signs[idx]
        tau_star = None if duals is None else duals[idx]
        delta = _delta_batch(cluster, K, tau, tau_star)
        return float(delta.sum()), float(np.dot(delta, delta))

    bounds = _chunk_bounds(samples, cluster)
    partials = _run_chunks(chunk_stats, bounds, worker_count(workers))
    total = math.fsum(s for s, _ in partials)
    total_sq = math.fsum(s2 for _, s2 in partials)
    mean = total / samples
    variance = max(0.0, (total_sq - samples * mean * mean) / (samples - 1))
    std_error = math.sqrt(variance / samples)
    if not math.isfinite(mean):
        raise NonFinite(f"sampled gap on cluster {cluster.name!r} is not finite")
    return GapEvaluation(mean, MONTE_CARLO, std_error, samples)


def gap_closed_form_single(kind: str, p: float, q: float) -> float:
    """Hand-reduced Delta for the one-unit clusters; an independent oracle.

    For a single edge the three disorder states give
    Delta = (1-q)(1-2p)K - ln(2)/2 - (1-q) ln cosh K. Its root is equivalent
    to H2(p) = 1 - 1/(2(1-q)) with H2 the binary entropy in bits. For the
    single two-layer crossing,
    Delta = (1-q)(3-4p)K - q ln 2 - (1-q) ln((e^{3K} + 3 e^{-K})/2).
    """
    if kind == model.UNCORRELATED:
        K = 0.5 * math.log((1.0 - p) / p)
        return (
            (1.0 - q) * (1.0 - 2.0 * p) * K
            - 0.5 * math.log(2.0)
            - (1.0 - q) * math.log(math.cosh(K))
        )
    if kind == model.DEPOLARIZING:
        K = 0.25 * math.log(3.0 * (1.0 - p) / p)
        return (
            (1.0 - q) * (3.0 - 4.0 * p) * K
            - q * math.log(2.0)
            - (1.0 - q) * math.log(0.5 * (math.exp(3.0 * K) + 3.0 * math.exp(-K)))
        )
    raise model.DomainError(f"unknown channel kind {kind!r}")
