"""State-trajectory recording, CSV export, and the counting statistic."""

import numpy as np
import pytest

from rnnlab.errors import RnnLabError
from rnnlab.languages import grammar_by_name
from rnnlab.nn_core import (ClassifierParams, LSTMParams, forward_sequence,
                            initialize, one_hot, step_cell, zero_state)
from rnnlab.trace import (TrajectoryTrace, counting_statistic,
                          export_trace_csv, read_trace_csv, record_trace,
                          trace_filename, _longest_monotone_run)

DYCK1 = grammar_by_name("dyck1")


def test_trace_length_equals_string_length():
    params, clf = initialize("lstm", 2, 2, "lstm_default", 0)
    seq = DYCK1.from_text("(((((()()())))))")
    tr = record_trace("lstm", params, clf, seq)
    assert len(tr.steps) == 16
    assert tr.string == seq
    assert 0.0 < tr.probability < 1.0


def test_zero_weight_lstm_gives_all_zero_trace():
    z = lambda *s: np.zeros(s)
    params = LSTMParams(*(z(2, 2) for _ in range(4)),
                        *(z(2, 2) for _ in range(4)),
                        *(z(2) for _ in range(4)))
    clf = ClassifierParams(np.zeros(2), 0.0)
    tr = record_trace("lstm", params, clf, (0, 1, 0, 1))
    for _, _, h, c in tr.steps:
        assert np.all(h == 0) and np.all(c == 0)
    assert tr.probability == 0.5


@pytest.mark.parametrize("cell", ["lstm", "o2rnn", "elman"])
def test_replaying_recorded_states_is_exact(cell):
    from rnnlab.nn_core import default_strategy
    params, clf = initialize(cell, 3, 2, default_strategy(cell), 4)
    seq = (0, 0, 1, 0, 1, 1)
    tr = record_trace(cell, params, clf, seq)
    st = zero_state(cell, 3)
    for (t, sym, h, c) in tr.steps:
        st = step_cell(cell, params, one_hot(sym, 2), st)
        assert np.array_equal(st.h, h)
        if c is not None:
            assert np.array_equal(st.c, c)


def test_probability_matches_plain_forward():
    params, clf = initialize("o2rnn", 4, 3, "o2rnn_default", 2)
    seq = (0, 1, 2, 2)
    tr = record_trace("o2rnn", params, clf, seq)
    prob, _ = forward_sequence("o2rnn", params, clf, seq)
    assert tr.probability == prob


def test_csv_round_trip_full_precision(tmp_path):
    params, clf = initialize("lstm", 3, 2, "lstm_default", 1)
    tr = record_trace("lstm", params, clf, (0, 0, 1, 1))
    path = tmp_path / "t.csv"
    export_trace_csv(tr, path)
    header = path.read_text().splitlines()[0]
    assert header == "t,symbol,h_0,h_1,h_2,c_0,c_1,c_2"
    steps = read_trace_csv(path)
    assert len(steps) == 4
    for (t1, s1, h1, c1), (t2, s2, h2, c2) in zip(tr.steps, steps):
        assert (t1, s1) == (t2, s2)
        assert np.array_equal(h1, h2)  # %.17g survives the round trip
        assert np.array_equal(c1, c2)


def test_csv_without_cell_state(tmp_path):
    params, clf = initialize("elman", 2, 2, "uniform", 3)
    tr = record_trace("elman", params, clf, (0, 1))
    path = tmp_path / "t.csv"
    export_trace_csv(tr, path)
    assert path.read_text().splitlines()[0] == "t,symbol,h_0,h_1"
    steps = read_trace_csv(path)
    assert steps[0][3] is None


def test_trace_filename_stable():
    a = trace_filename("dyck1", "lstm", 0, (0, 1, 0, 1))
    b = trace_filename("dyck1", "lstm", 0, (0, 1, 0, 1))
    c = trace_filename("dyck1", "lstm", 0, (0, 1, 1, 0))
    assert a == b != c
    assert a.startswith("dyck1_lstm_0_") and a.endswith(".csv")


# ---------------------------------------------------------------------------
# Counting statistic
# ---------------------------------------------------------------------------

def fake_trace(symbols, values):
    steps = tuple((t, sym, np.array([v]), None)
                  for t, (sym, v) in enumerate(zip(symbols, values)))
    return TrajectoryTrace(tuple(symbols), steps, 0.5)


def test_monotone_run_on_increasing_block():
    tr = fake_trace([0, 0, 0, 0, 1, 1], [0.1, 0.2, 0.3, 0.4, 0.3, 0.2])
    runs, sat = counting_statistic(tr, 0, use_cell_state=False)
    assert runs == [4, 2]
    assert not sat


def test_constant_trace_runs_of_one():
    tr = fake_trace([0, 0, 0], [0.5, 0.5, 0.5])
    runs, sat = counting_statistic(tr, 0, use_cell_state=False)
    assert runs == [1]
    assert not sat


def test_saturation_flag():
    v = 1.0 - 1e-18  # well inside the 10-epsilon band around 1
    tr = fake_trace([0, 0, 0, 0], [v, v, v, 0.0])
    _, sat = counting_statistic(tr, 0, use_cell_state=False)
    assert sat
    tr = fake_trace([0, 0, 0, 0], [v, v, 0.0, v])
    _, sat = counting_statistic(tr, 0, use_cell_state=False)
    assert not sat  # never 3 consecutive saturated steps


def test_unit_bounds_checked():
    tr = fake_trace([0], [0.1])
    with pytest.raises(RnnLabError):
        counting_statistic(tr, 5, use_cell_state=False)


def test_longest_monotone_run_edge_cases():
    assert _longest_monotone_run([]) == 0
    assert _longest_monotone_run([1.0]) == 1
    assert _longest_monotone_run([1.0, 2.0, 1.0, 0.0, -1.0]) == 4
    assert _longest_monotone_run([3, 3, 3]) == 1


def test_counting_statistic_on_trained_style_input():
    # qualitative: on a deep nesting, some LSTM cell unit moves monotonically
    # through the open-bracket block (the counting signature)
    params, clf = initialize("lstm", 2, 2, "lstm_default", 0)
    seq = DYCK1.from_text("(((((((())))))))")
    tr = record_trace("lstm", params, clf, seq)
    runs, _ = counting_statistic(tr, 0)
    assert len(runs) == 2  # one open block, one close block
    assert all(r >= 1 for r in runs)
