"""Cells, classifier, BPTT, init strategies, and checkpoints.

Gradient ground truth throughout is central finite differences on the
same loss, computed by an independent routine.
"""

import math

import numpy as np
import pytest

from rnnlab import nn_core
from rnnlab.nn_core import (CELLS, STRATEGIES, CellState, ClassifierParams,
                            ElmanParams, LSTMParams, O2RNNParams, bce_loss,
                            bptt_gradients, classify,
                            finite_difference_grads, forward_batch,
                            forward_sequence, grad_relative_error, initialize,
                            load_checkpoint, lstm_step, o2rnn_step, one_hot,
                            param_arrays, save_checkpoint, sgd_step,
                            step_cell, zero_state)


def zero_lstm(hidden=2, n_in=2):
    z = lambda *s: np.zeros(s)
    return LSTMParams(*(z(hidden, n_in) for _ in range(4)),
                      *(z(hidden, hidden) for _ in range(4)),
                      *(z(hidden) for _ in range(4)))


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

def test_lstm_zero_everything():
    p = zero_lstm()
    st = lstm_step(p, one_hot(0, 2), zero_state("lstm", 2))
    # gates all 0.5, candidate 0 -> state stays at zero
    assert np.all(st.c == 0) and np.all(st.h == 0)


def test_lstm_zero_weights_carried_cell_state():
    p = zero_lstm(1, 2)
    prev = CellState(np.array([0.3]), np.array([2.0]))
    st = lstm_step(p, one_hot(0, 2), prev)
    # f=0.5 halves c, i*g adds nothing; h = o * tanh(c)
    assert st.c[0] == pytest.approx(1.0)
    assert st.h[0] == pytest.approx(0.5 * math.tanh(1.0))


def test_o2rnn_zero_weights_bias_sigmoid():
    p = O2RNNParams(np.zeros((3, 2, 3)), np.full(3, 0.01))
    st = o2rnn_step(p, one_hot(1, 2), zero_state("o2rnn", 3))
    assert np.allclose(st.h, 1.0 / (1.0 + math.exp(-0.01)))
    assert st.h[0] == pytest.approx(0.50250, abs=1e-5)


def test_o2rnn_unused_slices_do_not_matter():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, 4, 3))
    p = O2RNNParams(w.copy(), rng.normal(size=3))
    prev = CellState(rng.normal(size=3))
    ref = o2rnn_step(p, one_hot(2, 4), prev).h
    p.w[:, 0, :] += 100.0  # perturb a slice the one-hot never selects
    p.w[:, 3, :] -= 17.0
    assert np.array_equal(o2rnn_step(p, one_hot(2, 4), prev).h, ref)


def test_elman_zero():
    p = ElmanParams(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros(2))
    st = step_cell("elman", p, one_hot(0, 3), zero_state("elman", 2))
    assert np.all(st.h == 0)


def test_elman_converges_to_reported_fixed_point():
    # scalar W=w, U=0: iteration must land on the stable fixed point that
    # the fixed-point module reports
    from rnnlab.fixed_points import (ActivationParams, Kind,
                                     Stability, find_fixed_points)
    w, b = 0.9, 0.3
    p = ElmanParams(np.array([[w]]), np.zeros((1, 1)), np.array([b]))
    st = CellState(np.array([0.7]))
    for _ in range(200):
        st = step_cell("elman", p, np.zeros(1), st)
    stable = [pt.xi for pt in
              find_fixed_points(ActivationParams(Kind.TANH, w, b)).points
              if pt.stability is Stability.STABLE]
    assert min(abs(st.h[0] - xi) for xi in stable) < 1e-9


def test_classifier():
    assert classify(ClassifierParams(np.zeros(2), 0.0), np.ones(2)) == 0.5
    p = ClassifierParams(np.array([1.0, -1.0]), 0.0)
    got = classify(p, np.array([0.3, 0.1]))
    assert got == pytest.approx(1.0 / (1.0 + math.exp(-0.2)))
    assert got == pytest.approx(0.5498, abs=1e-4)


def test_bce():
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2))
    assert bce_loss(0.5, 0) == pytest.approx(math.log(2))
    assert bce_loss(1.0 - 1e-13, 1) < 1e-10
    assert bce_loss(0.0, 1) < 30  # clamped, never inf


# ---------------------------------------------------------------------------
# Sequences and batching
# ---------------------------------------------------------------------------

def test_forward_empty_sequence_classifies_zero_state():
    params, clf = initialize("lstm", 3, 2, "lstm_default", 0)
    prob, _ = forward_sequence("lstm", params, clf, ())
    assert prob == classify(clf, np.zeros(3))


def test_trace_recording_is_pure():
    params, clf = initialize("elman", 3, 2, "uniform", 1)
    seq = (0, 1, 1, 0)
    p1, tr = forward_sequence("elman", params, clf, seq, record_trace=True)
    p2, none = forward_sequence("elman", params, clf, seq)
    assert p1 == p2 and none is None and len(tr) == 4


@pytest.mark.parametrize("cell", CELLS)
def test_forward_batch_matches_sequential(cell):
    params, clf = initialize(cell, 3, 4, nn_core.default_strategy(cell), 3)
    seqs = [(0, 1), (2,), (3, 3, 1, 0, 2), ()]
    probs, logits, _ = forward_batch(cell, params, clf, seqs)
    for s, p in zip(seqs, probs):
        ref, _ = forward_sequence(cell, params, clf, s)
        assert p == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("cell", CELLS)
def test_state_boundedness(cell):
    params, clf = initialize(cell, 4, 2, nn_core.default_strategy(cell), 7)
    rng = np.random.default_rng(0)
    st = zero_state(cell, 4)
    for _ in range(100):
        st = step_cell(cell, params, one_hot(int(rng.integers(2)), 2), st)
        if cell == "o2rnn":
            assert np.all((st.h > 0) & (st.h < 1))  # sigmoid codomain
        else:
            assert np.all(np.abs(st.h) < 1)


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("cell", CELLS)
def test_bptt_matches_finite_differences(cell):
    for seed in range(5):
        params, clf = initialize(cell, 4, 3,
                                 nn_core.default_strategy(cell), seed)
        batch = [((0, 1, 2, 0, 1), 1), ((2, 2), 0), ((1,), 1)]
        gp, gc, loss, _ = bptt_gradients(cell, params, clf, batch)
        fp, fc = finite_difference_grads(cell, params, clf, batch)
        assert grad_relative_error(gp, fp) < 1e-4
        assert grad_relative_error(gc, fc) < 1e-4


def test_freeze_recurrent_zeroes_cell_grads():
    params, clf = initialize("lstm", 3, 2, "lstm_default", 0)
    batch = [((0, 1, 0), 1), ((1, 1), 0)]
    gp, gc, _, _ = bptt_gradients("lstm", params, clf, batch,
                                  freeze="recurrent")
    for _, a in param_arrays(gp):
        assert np.all(np.asarray(a) == 0)
    assert np.any(gc.W != 0)


def test_batch_of_one_equals_per_example():
    params, clf = initialize("elman", 3, 2, "uniform", 9)
    g1, c1, l1, _ = bptt_gradients("elman", params, clf, [((0, 1), 1)])
    g2, c2, l2, _ = bptt_gradients("elman", params, clf,
                                   [((0, 1), 1), ((0, 1), 1)])
    assert l1 == pytest.approx(l2)
    for (_, a), (_, b) in zip(param_arrays(g1), param_arrays(g2)):
        assert np.allclose(a, b)


def test_sgd_step():
    p = ClassifierParams(np.array([1.0]), 0.5)
    g = ClassifierParams(np.array([2.0]), 1.0)
    out = sgd_step(p, g, 0.01)
    assert out.W[0] == pytest.approx(0.98)
    assert out.b == pytest.approx(0.49)
    same = sgd_step(p, g, 0.0)
    assert same.W[0] == 1.0 and same.b == 0.5


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def test_all_biases_are_0_01():
    for cell in CELLS:
        params, clf = initialize(cell, 4, 2,
                                 nn_core.default_strategy(cell), 0)
        for name, a in param_arrays(params):
            if name.startswith("b"):
                assert np.all(np.asarray(a) == 0.01), (cell, name)
        assert clf.b == 0.01


def test_lstm_default_range():
    params, _ = initialize("lstm", 16, 2, "lstm_default", 0)
    bound = 1.0 / math.sqrt(16)
    for name, a in param_arrays(params):
        if name.startswith("b"):
            continue
        assert np.max(np.abs(a)) <= bound


def test_lstm_literal_range_is_wider():
    params, _ = initialize("lstm", 16, 2, "lstm_literal", 0)
    assert max(np.max(np.abs(a)) for n, a in param_arrays(params)
               if not n.startswith("b")) > 1.0


def test_sparse_fraction():
    params, _ = initialize("elman", 100, 100, "sparse", 0)
    w = params.W
    frac = np.count_nonzero(w) / w.size
    assert 0.08 <= frac <= 0.12


def test_orthogonal_is_orthogonal():
    params, _ = initialize("elman", 8, 8, "orthogonal", 0)
    assert np.allclose(params.W.T @ params.W, np.eye(8), atol=1e-10)


def test_orthogonal_o2rnn_slices():
    params, _ = initialize("o2rnn", 6, 3, "orthogonal", 0)
    for j in range(3):
        sl = params.w[:, j, :]
        assert np.allclose(sl.T @ sl, np.eye(6), atol=1e-10)


def test_init_deterministic():
    for strategy in STRATEGIES:
        a, _ = initialize("elman", 5, 3, strategy, 11)
        b, _ = initialize("elman", 5, 3, strategy, 11)
        for (_, x), (_, y) in zip(param_arrays(a), param_arrays(b)):
            assert np.array_equal(x, y)


def test_float32_mode():
    params, clf = initialize("lstm", 4, 2, "lstm_default", 0,
                             dtype=np.float32)
    assert params.W_i.dtype == np.float32 and clf.W.dtype == np.float32
    prob, _ = forward_sequence("lstm", params, clf, (0, 1, 0))
    assert 0.0 < prob < 1.0


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("cell", CELLS)
def test_checkpoint_round_trip(cell, tmp_path):
    params, clf = initialize(cell, 3, 2, nn_core.default_strategy(cell), 5)
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_checkpoint(p1, cell, params, clf, meta={"note": "x"})
    cell2, params2, clf2, meta = load_checkpoint(p1)
    assert cell2 == cell and meta == {"note": "x"}
    for (_, a), (_, b) in zip(param_arrays(params), param_arrays(params2)):
        assert np.array_equal(np.asarray(a), np.asarray(b))
    save_checkpoint(p2, cell2, params2, clf2, meta=meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_nonfinite_rejected():
    params, clf = initialize("elman", 2, 2, "uniform", 0)
    params.W[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        forward_batch("elman", params, clf, [(0, 1)])
