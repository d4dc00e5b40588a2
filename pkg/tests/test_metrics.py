import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from noisydfl.datagen import full_gradient, generate_task
from noisydfl.metrics import MetricsRecord, aggregate, consensus_error, evaluate_state, grad_norm_at_average
from noisydfl.topology import TopologyKind, build_mixing_matrix

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_consensus_error_examples():
    assert consensus_error(np.ones((3, 5))) == 0.0
    assert consensus_error(np.array([[1.0, -1.0]])) == pytest.approx(1.0)
    assert consensus_error(np.array([[0.0, 2.0, 4.0]])) == pytest.approx(8 / 3)


@settings(max_examples=60, deadline=None)
@given(x=arrays(float, (3, 5), elements=finite), shift=arrays(float, (3,), elements=finite))
def test_consensus_error_matches_projection_and_is_translation_invariant(x, shift):
    n = x.shape[1]
    proj = np.eye(n) - np.ones((n, n)) / n
    oracle = np.linalg.norm(x @ proj, "fro") ** 2 / n
    ce = consensus_error(x)
    assert ce == pytest.approx(oracle, rel=1e-9, abs=1e-9)
    assert consensus_error(x + shift[:, None]) == pytest.approx(ce, rel=1e-9, abs=1e-6)
    assert consensus_error(3 * x) == pytest.approx(9 * ce, rel=1e-9, abs=1e-6)


def test_grad_norm_zero_at_minimizer():
    task = generate_task(60, 4, 0.2, seed=0)
    reg = 0.01
    xs = np.linalg.solve(task.features.T @ task.features / 60 + reg * np.eye(4), task.features.T @ task.labels / 60)
    assert grad_norm_at_average(np.repeat(xs[:, None], 3, axis=1), task, reg) < 1e-20


def test_grad_norm_uses_the_average(rng):
    task = generate_task(60, 4, 0.2, seed=0)
    x = rng.standard_normal((4, 3))
    g = full_gradient(x.mean(axis=1), task, 0.0)
    assert grad_norm_at_average(x, task, 0.0) == pytest.approx(g @ g)


def test_evaluate_state_local_loss(small_task, small_shards):
    x = np.zeros((small_task.d, 4))
    loss, ce, _, local = evaluate_state(x, small_task, small_shards, 0.0)
    assert ce == 0
    assert loss == pytest.approx(np.mean(small_task.labels ** 2))
    assert local == pytest.approx(np.mean([np.mean(s.labels ** 2) for s in small_shards]))


def rec(repeat, t, loss, diverged=False):
    return MetricsRecord("FedNDL1", "ring", 0.0, repeat, t, 0.1, loss, 0.0, 0.0, diverged)


def test_aggregate_means_and_survivors():
    recs = [rec(0, 0, 1.0), rec(1, 0, 3.0), rec(2, 0, 5.0),
            rec(0, 1, 2.0), rec(1, 1, 4.0, diverged=True), rec(2, 1, 6.0),
            rec(0, 2, 1.0), rec(2, 2, 3.0)]
    means = aggregate(recs)
    assert [(m.t, m.loss, m.survivors, m.diverged) for m in means] == [(0, 3.0, 3, 0), (1, 4.0, 3, 1), (2, 2.0, 2, 0)]


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


@pytest.mark.parametrize("kind", [TopologyKind.ring(), TopologyKind.torus(4, 4), TopologyKind.full()])
def test_pure_gossip_contracts_consensus(kind, rng):
    m = build_mixing_matrix(kind, 16)
    x = rng.standard_normal((4, 16))
    for _ in range(10):
        nxt = x @ m.w.T
        assert consensus_error(nxt) <= (1 - m.rho) * consensus_error(x) + 1e-12
        x = nxt
