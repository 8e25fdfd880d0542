"""Root finding for the threshold p_c(q) and sweeps over the loss rate.

Delta(p, q) is strictly decreasing in p, positive below threshold and negative
above, so p_c is bracketed on [1e-6, 1/2 - 1e-6] (single layer) or
[1e-6, 3/4 - 1e-6] (two layers) and refined by bisection with secant
acceleration. Monte Carlo gaps are refined by plain bisection and stop at the
statistical resolution limit instead of chasing noise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import model, replica
from .cluster import ClusterSpec, builtin_cluster

BRACKET_LO = 1e-6
BRACKET_MARGIN = 1e-6
MIN_TOL = 1e-10
MAX_ITERATIONS = 200

STATUS_OK = "ok"
STATUS_NO_THRESHOLD = "no-threshold"
STATUS_NO_SIGN_CHANGE = "no-sign-change"


class NoSignChange(RuntimeError):
    """The gap has one sign over the whole bracket; no threshold to find."""


@dataclass(frozen=True)
class ThresholdResult:
    channel: str
    cluster: str
    q: float
    p_c: float
    residual: float
    bracket: tuple[float, float]
    iterations: int
    method: str
    status: str = STATUS_OK
    std_error: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def _resolve_cluster(cluster: ClusterSpec | str) -> ClusterSpec:
    return builtin_cluster(cluster) if isinstance(cluster, str) else cluster


def _resolve_method(kind: str, cluster: ClusterSpec, policy: str, term_budget: int) -> str:
    if policy == "auto":
        layers = 1 if kind == model.UNCORRELATED else 2
        total = (3 if layers == 1 else 5) ** cluster.slot_count
        return replica.EXACT if total <= term_budget else replica.MONTE_CARLO
    return policy


def _upper_bracket(kind: str) -> float:
    return (0.5 if kind == model.UNCORRELATED else 0.75) - BRACKET_MARGIN


def solve_threshold(
    channel_kind: str,
    cluster: ClusterSpec | str,
    q: float,
    tol: float = 1e-7,
    *,
    policy: str = replica.EXACT,
    mc_samples: int | None = None,
    seed: int = 0,
    term_budget: int = replica.DEFAULT_TERM_BUDGET,
    workers: int | None = None,
) -> ThresholdResult:
    """Find p_c for one (channel, cluster, q) combination.

    Returns a no-threshold result (p_c = 0) for the one-unit clusters when
    q >= 1/2, where the closed form shows the gap is negative for every p.
    Raises NoSignChange when the gap fails to change sign over the bracket,
    which signals the q >= 1/2 regime of a larger cluster or a broken
    geometry.
    """
    if channel_kind not in model.CHANNEL_KINDS:
        raise model.DomainError(f"unknown channel kind {channel_kind!r}")
    if not 0.0 <= q <= 1.0:
        raise model.DomainError(f"loss rate q={q} outside [0, 1]")
    if tol < MIN_TOL:
        raise ValueError(f"tol={tol} below the supported minimum {MIN_TOL}")
    spec = _resolve_cluster(cluster)
    if policy not in replica.POLICIES:
        raise ValueError(f"policy must be one of {replica.POLICIES}, got {policy!r}")
    method = _resolve_method(channel_kind, spec, policy, term_budget)

    # One-unit clusters reduce to the closed form, whose root degenerates to
    # p = 0 exactly when q reaches 1/2 (binary entropy target <= 0).
    if spec.slot_count == 1 and not spec.internal_ids and q >= 0.5:
        return ThresholdResult(
            channel_kind, spec.name, q, 0.0, 0.0, (0.0, 0.0), 0, method, STATUS_NO_THRESHOLD
        )

    def evaluate(p: float) -> replica.GapEvaluation:
        return replica.gap(
            model.ChannelSpec(channel_kind, p, q),
            spec,
            method,
            mc_samples=mc_samples,
            seed=seed,
            term_budget=term_budget,
            workers=workers,
        )

    a, b = BRACKET_LO, _upper_bracket(channel_kind)
    eval_a, eval_b = evaluate(a), evaluate(b)
    fa, fb = eval_a.delta, eval_b.delta
    if fa <= 0.0 or fb >= 0.0:
        raise NoSignChange(
            f"gap does not change sign on [{a}, {b}] for {channel_kind}/{spec.name} at q={q}: "
            f"Delta({a})={fa:.6g}, Delta({b})={fb:.6g}"
        )

    if method == replica.MONTE_CARLO:
        return _refine_bisect_mc(channel_kind, spec, q, a, b, fa, fb, tol, evaluate)
    return _refine_secant(channel_kind, spec, q, a, b, fa, fb, tol, evaluate)


def _refine_secant(kind, spec, q, a, b, fa, fb, tol, evaluate) -> ThresholdResult:
    """Bracketed false position with Illinois weighting and periodic bisection."""
    iterations = 0
    side = 0
    while b - a > tol and iterations < MAX_ITERATIONS:
        width = b - a
        x = (a * fb - b * fa) / (fb - fa)
        # keep strictly interior; fall back to the midpoint every 4th step so
        # the bracket provably shrinks
        if iterations % 4 == 3 or not (a + 0.01 * width <= x <= b - 0.01 * width):
            x = a + 0.5 * width
        fx = evaluate(x).delta
        iterations += 1
        if fx == 0.0:
            return ThresholdResult(
                kind, spec.name, q, x, 0.0, (a, b), iterations, replica.EXACT
            )
        if fx > 0.0:
            if x == a:
                break
            a, fa = x, fx
            if side == 1:
                fb *= 0.5
            side = 1
        else:
            if x == b:
                break
            b, fb = x, fx
            if side == -1:
                fa *= 0.5
            side = -1
    p_c = (a * fb - b * fa) / (fb - fa)
    residual = abs(evaluate(p_c).delta)
    return ThresholdResult(kind, spec.name, q, p_c, residual, (a, b), iterations, replica.EXACT)


def _refine_bisect_mc(kind, spec, q, a, b, fa, fb, tol, evaluate) -> ThresholdResult:
    """Plain bisection on a sampled gap, stopping at the 2-sigma resolution limit."""
    iterations = 0
    mid = 0.5 * (a + b)
    ev = evaluate(mid)
    while b - a > tol and iterations < MAX_ITERATIONS:
        mid = 0.5 * (a + b)
        ev = evaluate(mid)
        iterations += 1
        if abs(ev.delta) < 2.0 * ev.std_error:
            break
        if ev.delta > 0.0:
            a = mid
        else:
            b = mid
    return ThresholdResult(
        kind,
        spec.name,
        q,
        mid,
        abs(ev.delta),
        (a, b),
        iterations,
        replica.MONTE_CARLO,
        STATUS_OK,
        ev.std_error,
    )


def sweep(
    channel_kind: str,
    cluster: ClusterSpec | str,
    q_values,
    tol: float = 1e-7,
    *,
    policy: str = replica.EXACT,
    mc_samples: int | None = None,
    seed: int = 0,
    term_budget: int = replica.DEFAULT_TERM_BUDGET,
    workers: int | None = None,
) -> list[ThresholdResult]:
    """Thresholds for an ascending list of loss rates, one result per q.

    Per-q failures (no sign change) become rows with status and p_c = 0
    instead of aborting the sweep. Runs q values in parallel when more than
    one worker is available; output order and values are independent of the
    worker count.
    """
    qs = [float(x) for x in q_values]
    if any(hi <= lo for lo, hi in zip(qs, qs[1:])):
        raise ValueError("q values must be strictly ascending")
    if qs and not (0.0 <= qs[0] and qs[-1] < 0.5):
        raise ValueError("q values must lie in [0, 0.5)")
    spec = _resolve_cluster(cluster)
    nworkers = replica.worker_count(workers)

    def run(q: float) -> ThresholdResult:
        try:
            return solve_threshold(
                channel_kind,
                spec,
                q,
                tol,
                policy=policy,
                mc_samples=mc_samples,
                seed=seed,
                term_budget=term_budget,
                workers=1,
            )
        except NoSignChange:
            method = _resolve_method(channel_kind, spec, policy, term_budget)
            return ThresholdResult(
                channel_kind, spec.name, q, 0.0, 0.0, (0.0, 0.0), 0, method, STATUS_NO_SIGN_CHANGE
            )

    if nworkers <= 1 or len(qs) <= 1:
        return [run(q) for q in qs]
    with ThreadPoolExecutor(max_workers=min(nworkers, len(qs))) as pool:
        return list(pool.map(run, qs))


REFERENCE_Q = (0.0, 0.1, 0.2, 0.3, 0.4, 0.45)
REFERENCE_MATCHING = (0.10486, 0.08816, 0.06997, 0.04836, 0.02561, 0.00757)
REFERENCE_MATCHING_IMPROVED_Q0 = 0.1065
REFERENCE_DEPOLARIZING_Q0 = 0.164


def reference_thresholds() -> dict:
    """Published comparison thresholds, embedded as constants and never recomputed.

    "matching_p_c0" is the minimum-weight-matching (ground-state inference)
    threshold on the q grid, "matching_improved_q0" its refined q=0 value, and
    "depolarizing_q0" the recovery-procedure threshold for the depolarizing
    channel at q=0.
    """
    return {
        "q": REFERENCE_Q,
        "matching_p_c0": REFERENCE_MATCHING,
        "matching_improved_q0": REFERENCE_MATCHING_IMPROVED_Q0,
        "depolarizing_q0": REFERENCE_DEPOLARIZING_Q0,
    }


def reference_p_c0(channel_kind: str, q: float) -> float | None:
    """Comparison threshold for one (channel, q), or None where none is tabulated."""
    if channel_kind == model.UNCORRELATED:
        for qq, value in zip(REFERENCE_Q, REFERENCE_MATCHING):
            if abs(q - qq) <= 1e-9:
                return value
        return None
    if abs(q) <= 1e-9:
        return REFERENCE_DEPOLARIZING_Q0
    return None
