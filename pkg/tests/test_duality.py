"""Hadamard duals of edge factors and the dual cluster sum."""

from __future__ import annotations

import math

import numpy as np
import pytest

from lossthreshold.cluster import NonFinite, ShapeMismatch, builtin_cluster, cluster_partition, signs_array
from lossthreshold.duality import (
    NonPositiveDual,
    dual_cluster_partition,
    dual_edge_factor_single,
    dual_edge_factor_twolayer,
    edge_factor_single,
    edge_factor_twolayer,
    log_dual_partition_batch,
    pure_self_dual_point,
)
from lossthreshold.model import EdgeDisorder

SQRT2 = math.sqrt(2.0)


@pytest.mark.parametrize(
    "transform,size",
    [(dual_edge_factor_single, 2), (dual_edge_factor_twolayer, 4)],
)
def test_hadamard_involution(transform, size):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        x = tuple(rng.uniform(0.1, 10.0, size=size))
        y = transform(transform(x))
        worst = max(worst, max(abs(a - b) / abs(a) for a, b in zip(x, y)))
    assert worst <= 1e-14


@pytest.mark.parametrize(
    "transform,size",
    [(dual_edge_factor_single, 2), (dual_edge_factor_twolayer, 4)],
)
def test_hadamard_preserves_norm(transform, size):
    rng = np.random.default_rng(8)
    x = tuple(rng.uniform(0.1, 10.0, size=size))
    assert sum(v * v for v in transform(x)) == pytest.approx(sum(v * v for v in x), rel=1e-14)


def test_single_layer_dual_components():
    K = 0.52
    plus = dual_edge_factor_single(edge_factor_single(EdgeDisorder(1), K))
    assert plus[0] == pytest.approx(SQRT2 * math.cosh(K), rel=1e-15)
    assert plus[1] == pytest.approx(SQRT2 * math.sinh(K), rel=1e-15)
    minus = dual_edge_factor_single(edge_factor_single(EdgeDisorder(-1), K))
    assert minus[1] == pytest.approx(-SQRT2 * math.sinh(K), rel=1e-15)
    diluted = dual_edge_factor_single(edge_factor_single(EdgeDisorder(0), K))
    assert diluted == pytest.approx((SQRT2, 0.0), abs=1e-15)


def test_two_layer_dual_components():
    K = 0.52
    a = 0.5 * (math.exp(3.0 * K) + 3.0 * math.exp(-K))
    s = 0.5 * (math.exp(3.0 * K) - math.exp(-K))
    plus = dual_edge_factor_twolayer(edge_factor_twolayer(EdgeDisorder(1, 1), K))
    assert plus == pytest.approx((a, s, s, s), rel=1e-14)
    mixed = dual_edge_factor_twolayer(edge_factor_twolayer(EdgeDisorder(1, -1), K))
    assert mixed == pytest.approx((a, -s, s, -s), rel=1e-14)
    diluted = dual_edge_factor_twolayer(edge_factor_twolayer(EdgeDisorder(0, 0), K))
    assert diluted == pytest.approx((2.0, 0.0, 0.0, 0.0), abs=1e-14)


def test_single_edge_dual_anchor():
    K = 0.8
    got = dual_cluster_partition(builtin_cluster("single"), (EdgeDisorder(1),), K)
    assert got.log_value == pytest.approx(math.log(SQRT2 * math.cosh(K)), rel=1e-14)
    assert got.sign == 1


def test_star_dual_anchor():
    # the four-edge star sums to 4(prod cosh + prod sinh) before dilution
    K = 0.67
    got = dual_cluster_partition(builtin_cluster("A"), (EdgeDisorder(1),) * 4, K)
    expected = math.log(4.0 * (math.cosh(K) ** 4 + math.sinh(K) ** 4))
    assert got.log_value == pytest.approx(expected, rel=1e-14)


def test_crossing_dual_anchor():
    K = 0.59
    got = dual_cluster_partition(builtin_cluster("C"), (EdgeDisorder(1, 1),), K)
    expected = math.log(0.5 * (math.exp(3.0 * K) + 3.0 * math.exp(-K)))
    assert got.log_value == pytest.approx(expected, rel=1e-14)


def test_dual_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        dual_cluster_partition(builtin_cluster("A"), (EdgeDisorder(1),) * 3, 0.5)


def test_self_dual_point_value():
    kc = pure_self_dual_point()
    assert abs(kc - 0.5 * math.log(1.0 + SQRT2)) <= 1e-11
    assert abs(math.exp(-2.0 * kc) - math.tanh(kc)) <= 1e-12


def test_self_duality_of_clean_edge():
    # at K_c the primal and dual factors of a clean edge coincide
    kc = pure_self_dual_point()
    primal = cluster_partition(builtin_cluster("single"), (EdgeDisorder(1),), kc).log_value
    dual = dual_cluster_partition(builtin_cluster("single"), (EdgeDisorder(1),), kc).log_value
    assert primal == pytest.approx(dual, abs=1e-11)


def test_non_positive_dual_from_cancellation():
    # a frustrated star at extreme coupling cancels to zero in floating point
    frustrated = tuple(EdgeDisorder(s) for s in (-1, 1, 1, 1))
    assert dual_cluster_partition(builtin_cluster("A"), frustrated, 12.0).sign == 1
    with pytest.raises(NonPositiveDual):
        dual_cluster_partition(builtin_cluster("A"), frustrated, 30.0)


def test_non_positive_dual_two_layer():
    disorder = tuple(EdgeDisorder(s, 1) for s in (1, -1, 1, 1, -1, 1, 1))
    assert dual_cluster_partition(builtin_cluster("E"), disorder, 0.9).sign == 1
    with pytest.raises(NonPositiveDual):
        dual_cluster_partition(builtin_cluster("E"), disorder, 12.0)


def test_non_finite_coupling():
    with pytest.raises(NonFinite):
        cluster_partition(builtin_cluster("single"), (EdgeDisorder(1),), math.inf)
    with pytest.raises(NonFinite):
        dual_cluster_partition(builtin_cluster("single"), (EdgeDisorder(1),), math.inf)


@pytest.mark.parametrize(
    "name,states",
    [
        ("A", [(1, 1, 1, 1), (-1, 1, 0, 1), (0, 0, 0, 0), (-1, -1, -1, -1)]),
        ("D", [((1, 1),) * 4, ((1, -1), (0, 0), (-1, 1), (1, 1)), ((-1, -1),) * 4]),
    ],
)
def test_batch_matches_scalar_dual(name, states):
    spec = builtin_cluster(name)
    K = 0.71
    rows = []
    for assignment in states:
        if spec.layers == 1:
            rows.append(tuple(EdgeDisorder(s) for s in assignment))
        else:
            rows.append(tuple(EdgeDisorder(*pair) for pair in assignment))
    taus = np.stack([signs_array(r, spec.layers)[0] for r in rows]).astype(np.float64)
    tau_star = None
    if spec.layers == 2:
        tau_star = np.stack([signs_array(r, spec.layers)[1] for r in rows]).astype(np.float64)
    logmag, sign = log_dual_partition_batch(spec, taus, tau_star, K)
    for i, row in enumerate(rows):
        scalar = dual_cluster_partition(spec, row, K)
        assert sign[i] == scalar.sign
        assert logmag[i] == pytest.approx(scalar.log_value, rel=1e-14)
