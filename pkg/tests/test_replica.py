"""Disorder-averaged gap: exact enumeration, sampling, and the closed forms."""

from __future__ import annotations

import itertools
import math

import pytest

from lossthreshold.cluster import ClusterSpec, ShapeMismatch, Slot, Vertex, builtin_cluster
from lossthreshold.model import (
    ChannelSpec,
    DomainError,
    disorder_distribution,
    nishimori_coupling,
)
from lossthreshold.replica import (
    DEFAULT_TERM_BUDGET,
    EXACT,
    MIN_MC_SAMPLES,
    MONTE_CARLO,
    TooManyTerms,
    gap,
    gap_closed_form_single,
    gap_monte_carlo,
    worker_count,
)


def _brute_force_gap(kind: str, name: str, p: float, q: float) -> float:
    """Plain nested-loop quenched average, independent of the array pipeline."""
    spec = builtin_cluster(name)
    channel = ChannelSpec(kind, p, q)
    dist = disorder_distribution(channel)
    K = nishimori_coupling(channel).K
    index = {v.id: i for i, v in enumerate(spec.vertices)}
    internal = [index[i] for i in spec.internal_ids]
    a_const = 0.5 * (math.exp(3.0 * K) + 3.0 * math.exp(-K))
    s_const = 0.5 * (math.exp(3.0 * K) - math.exp(-K))
    terms = []
    for states in itertools.product(range(len(dist.support)), repeat=spec.slot_count):
        weight = math.prod(dist.probs[s] for s in states)
        if weight == 0.0:
            continue
        assignment = [dist.support[s] for s in states]
        z = zd = 0.0
        for bits in itertools.product((1, -1), repeat=len(internal)):
            spin = [1] * len(spec.vertices)
            for value, pos in zip(bits, internal):
                spin[pos] = value
            energy = 0.0
            dual_term = 1.0
            for slot, d in zip(spec.slots, assignment):
                pp = spin[index[slot.primal_edge[0]]] * spin[index[slot.primal_edge[1]]]
                if spec.layers == 1:
                    if d.diluted:
                        dual_term *= math.sqrt(2.0) * (pp > 0)
                    else:
                        energy += K * d.sign * pp
                        dual_term *= math.sqrt(2.0) * (
                            math.cosh(K) if pp > 0 else d.sign * math.sinh(K)
                        )
                else:
                    dd = spin[index[slot.dual_edge[0]]] * spin[index[slot.dual_edge[1]]]
                    if d.diluted:
                        dual_term *= 2.0 * (pp > 0) * (dd > 0)
                    else:
                        energy += K * (d.sign * pp + d.dual_sign * dd + d.sign * d.dual_sign * pp * dd)
                        if pp > 0 and dd > 0:
                            dual_term *= a_const
                        elif pp > 0:
                            dual_term *= d.dual_sign * s_const
                        elif dd > 0:
                            dual_term *= d.sign * s_const
                        else:
                            dual_term *= d.sign * d.dual_sign * s_const
            z += math.exp(energy)
            zd += dual_term
        terms.append(weight * (math.log(z) - math.log(zd)))
    return math.fsum(terms)


@pytest.mark.parametrize("p", [0.05, 0.11, 0.2, 0.35, 0.5])
@pytest.mark.parametrize("q", [0.0, 0.1, 0.45])
def test_gap_matches_closed_form_uncorrelated(p, q):
    value = gap(ChannelSpec("uncorrelated", p, q), builtin_cluster("single"))
    assert value.method == EXACT
    assert value.terms == 3
    assert abs(value.delta - gap_closed_form_single("uncorrelated", p, q)) <= 1e-12


@pytest.mark.parametrize("p", [0.05, 0.19, 0.4, 0.6])
@pytest.mark.parametrize("q", [0.0, 0.2, 0.45])
def test_gap_matches_closed_form_depolarizing(p, q):
    value = gap(ChannelSpec("depolarizing", p, q), builtin_cluster("C"))
    assert value.terms == 5
    assert abs(value.delta - gap_closed_form_single("depolarizing", p, q)) <= 1e-12


@pytest.mark.parametrize("q", [0.0, 0.3])
def test_gap_at_maximal_error_rate(q):
    # K = 0 makes the primal factor 1 and every dual factor sqrt(2)
    value = gap(ChannelSpec("uncorrelated", 0.5, q), builtin_cluster("single"))
    assert value.delta == pytest.approx(-0.5 * math.log(2.0), rel=1e-14)


def test_closed_form_rejects_unknown_kind():
    with pytest.raises(DomainError):
        gap_closed_form_single("amplitude-damping", 0.1, 0.0)


@pytest.mark.parametrize(
    "kind,name,p,q",
    [
        ("uncorrelated", "A", 0.09, 0.1),
        ("uncorrelated", "A", 0.02, 0.4),
        ("depolarizing", "D", 0.05, 0.2),
        ("depolarizing", "C", 0.19, 0.0),
    ],
)
def test_gap_matches_brute_force(kind, name, p, q):
    fast = gap(ChannelSpec(kind, p, q), builtin_cluster(name)).delta
    slow = _brute_force_gap(kind, name, p, q)
    assert abs(fast - slow) <= 1e-9


def test_gap_term_counts():
    assert gap(ChannelSpec("uncorrelated", 0.1, 0.1), builtin_cluster("A")).terms == 81
    assert gap(ChannelSpec("depolarizing", 0.1, 0.1), builtin_cluster("D")).terms == 625


def test_gap_delta_decreases_in_p():
    grid = [0.02, 0.05, 0.09, 0.13, 0.2, 0.3, 0.45]
    deltas = [gap(ChannelSpec("uncorrelated", p, 0.1), builtin_cluster("A")).delta for p in grid]
    assert all(a > b for a, b in zip(deltas, deltas[1:]))


def test_gap_layer_mismatch():
    with pytest.raises(ShapeMismatch):
        gap(ChannelSpec("uncorrelated", 0.1, 0.0), builtin_cluster("C"))
    with pytest.raises(ShapeMismatch):
        gap(ChannelSpec("depolarizing", 0.1, 0.0), builtin_cluster("A"))


def test_gap_policy_validation():
    with pytest.raises(ValueError):
        gap(ChannelSpec("uncorrelated", 0.1, 0.0), builtin_cluster("single"), "guess")


def test_term_budget():
    channel = ChannelSpec("uncorrelated", 0.1, 0.1)
    spec = builtin_cluster("B")
    with pytest.raises(TooManyTerms):
        gap(channel, spec, term_budget=1000)
    sampled = gap(channel, spec, "auto", mc_samples=2000, term_budget=1000, seed=3)
    assert sampled.method == MONTE_CARLO
    assert sampled.terms == 2000
    exact = gap(channel, spec, "auto", term_budget=DEFAULT_TERM_BUDGET)
    assert exact.method == EXACT
    assert exact.terms == 3**12


def test_monte_carlo_minimum_samples():
    channel = ChannelSpec("uncorrelated", 0.09, 0.1)
    with pytest.raises(ValueError):
        gap_monte_carlo(channel, builtin_cluster("A"), MIN_MC_SAMPLES - 1)


def test_monte_carlo_reproducible_and_seed_sensitive():
    channel = ChannelSpec("uncorrelated", 0.09, 0.1)
    star = builtin_cluster("A")
    first = gap_monte_carlo(channel, star, 20_000, seed=5)
    second = gap_monte_carlo(channel, star, 20_000, seed=5)
    other = gap_monte_carlo(channel, star, 20_000, seed=6)
    assert first.delta == second.delta
    assert first.std_error == second.std_error
    assert first.delta != other.delta
    assert first.method == MONTE_CARLO
    assert first.std_error > 0.0


def test_monte_carlo_worker_independence():
    channel = ChannelSpec("depolarizing", 0.17, 0.05)
    spec = builtin_cluster("D")
    serial = gap_monte_carlo(channel, spec, 30_000, seed=9, workers=1)
    pooled = gap_monte_carlo(channel, spec, 30_000, seed=9, workers=4)
    assert serial.delta == pooled.delta
    assert serial.std_error == pooled.std_error


def test_monte_carlo_shares_randomness_across_p():
    # common random numbers: estimates at nearby p differ smoothly, far less
    # than the statistical error of either
    star = builtin_cluster("A")
    low = gap_monte_carlo(ChannelSpec("uncorrelated", 0.0900, 0.1), star, 20_000, seed=2)
    high = gap_monte_carlo(ChannelSpec("uncorrelated", 0.0901, 0.1), star, 20_000, seed=2)
    assert abs(low.delta - high.delta) < 0.2 * low.std_error


def test_exact_worker_independence():
    channel = ChannelSpec("uncorrelated", 0.09, 0.2)
    spec = builtin_cluster("B")
    assert gap(channel, spec, workers=1).delta == gap(channel, spec, workers=3).delta


def test_worker_count_resolution(monkeypatch):
    assert worker_count(5) == 5
    monkeypatch.setenv("THRESHOLD_WORKERS", "2")
    assert worker_count() == 2
    monkeypatch.delenv("THRESHOLD_WORKERS")
    assert worker_count() >= 1
