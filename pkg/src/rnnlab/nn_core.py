"""From-scratch recurrent cells (LSTM, second-order RNN, Elman-tanh),
sigmoid classifier head, binary cross-entropy, exact BPTT gradients,
plain SGD, and the weight initialization strategies.

Arrays are numpy; forward/backward are vectorized over a padded batch
with per-sequence masks.  Default arithmetic is float64; float32 is
selectable for precision experiments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

CELLS = ("lstm", "o2rnn", "elman")


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite values in parameters")


@dataclass
class LSTMParams:
    W_i: np.ndarray; W_f: np.ndarray; W_o: np.ndarray; W_c: np.ndarray
    U_i: np.ndarray; U_f: np.ndarray; U_o: np.ndarray; U_c: np.ndarray
    b_i: np.ndarray; b_f: np.ndarray; b_o: np.ndarray; b_c: np.ndarray


@dataclass
class O2RNNParams:
    w: np.ndarray  # (hidden, input, hidden)
    b: np.ndarray
    activation: str = "sigmoid"  # or "tanh"


@dataclass
class ElmanParams:
    W: np.ndarray  # recurrent (hidden, hidden)
    U: np.ndarray  # input (hidden, input)
    b: np.ndarray


@dataclass
class ClassifierParams:
    W: np.ndarray  # (hidden,)
    b: float


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray | None = None


_ARRAY_FIELDS = {
    LSTMParams: [f.name for f in fields(LSTMParams)],
    O2RNNParams: ["w", "b"],
    ElmanParams: ["W", "U", "b"],
}


def param_arrays(p):
    """(name, array) pairs of the trainable arrays of a params object."""
    if isinstance(p, ClassifierParams):
        return [("W", p.W), ("b", p.b)]
    return [(n, getattr(p, n)) for n in _ARRAY_FIELDS[type(p)]]


def copy_params(p):
    if isinstance(p, ClassifierParams):
        return ClassifierParams(p.W.copy(), float(p.b))
    kwargs = {n: getattr(p, n).copy() for n in _ARRAY_FIELDS[type(p)]}
    if isinstance(p, O2RNNParams):
        kwargs["activation"] = p.activation
    return type(p)(**kwargs)


def hidden_size(p) -> int:
    if isinstance(p, LSTMParams):
        return p.b_i.shape[0]
    if isinstance(p, O2RNNParams):
        return p.b.shape[0]
    return p.b.shape[0]


def input_size(p) -> int:
    if isinstance(p, LSTMParams):
        return p.W_i.shape[1]
    if isinstance(p, O2RNNParams):
        return p.w.shape[1]
    return p.U.shape[1]


# ---------------------------------------------------------------------------
# Single steps (thin wrappers over the batched kernels)
# ---------------------------------------------------------------------------

def lstm_step(p: LSTMParams, x: np.ndarray, prev: CellState) -> CellState:
    h, c, _ = _lstm_forward_step(p, x[None, :], prev.h[None, :],
                                 prev.c[None, :])
    return CellState(h[0], c[0])


def o2rnn_step(p: O2RNNParams, x: np.ndarray, prev: CellState) -> CellState:
    sym = int(np.argmax(x))
    h, _ = _o2rnn_forward_step(p, np.array([sym]), prev.h[None, :])
    return CellState(h[0])


def elman_step(p: ElmanParams, x: np.ndarray, prev: CellState) -> CellState:
    h, _ = _elman_forward_step(p, x[None, :], prev.h[None, :])
    return CellState(h[0])


def classify(p: ClassifierParams, h: np.ndarray) -> float:
    return float(sigmoid(np.atleast_1d(h @ p.W + p.b))[0])


def bce_loss(prob: float, label: int) -> float:
    p = min(max(prob, 1e-12), 1.0 - 1e-12)
    y = float(label)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def zero_state(cell: str, hidden: int, dtype=np.float64) -> CellState:
    h = np.zeros(hidden, dtype=dtype)
    c = np.zeros(hidden, dtype=dtype) if cell == "lstm" else None
    return CellState(h, c)


def one_hot(sym: int, n: int, dtype=np.float64) -> np.ndarray:
    x = np.zeros(n, dtype=dtype)
    x[sym] = 1.0
    return x


def step_cell(cell: str, params, x, prev: CellState) -> CellState:
    if cell == "lstm":
        return lstm_step(params, x, prev)
    if cell == "o2rnn":
        return o2rnn_step(params, x, prev)
    if cell == "elman":
        return elman_step(params, x, prev)
    raise ValueError(f"unknown cell: {cell}")


def forward_sequence(cell: str, params, clf: ClassifierParams, seq,
                     record_trace: bool = False):
    """(probability, trace).  trace is a list of per-step CellState when
    record_trace is set, else None.  Initial state is zeros; the
    classifier sees only the final hidden state."""
    n_in = input_size(params)
    dtype = clf.W.dtype
    state = zero_state(cell, hidden_size(params), dtype)
    trace = [] if record_trace else None
    for sym in seq:
        state = step_cell(cell, params, one_hot(sym, n_in, dtype), state)
        if record_trace:
            trace.append(CellState(state.h.copy(),
                                   None if state.c is None else state.c.copy()))
    return classify(clf, state.h), trace


# ---------------------------------------------------------------------------
# Batched kernels
# ---------------------------------------------------------------------------

def _lstm_forward_step(p: LSTMParams, x, h, c):
    i = sigmoid(x @ p.W_i.T + h @ p.U_i.T + p.b_i)
    f = sigmoid(x @ p.W_f.T + h @ p.U_f.T + p.b_f)
    o = sigmoid(x @ p.W_o.T + h @ p.U_o.T + p.b_o)
    g = np.tanh(x @ p.W_c.T + h @ p.U_c.T + p.b_c)
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (i, f, o, g, tc)


def _o2rnn_forward_step(p: O2RNNParams, syms, h):
    # one-hot input reduces the rank-3 contraction to one slice of w
    wsl = p.w[:, syms, :]                      # (H, B, H)
    pre = np.einsum("ibj,bj->bi", wsl, h) + p.b
    a = sigmoid(pre) if p.activation == "sigmoid" else np.tanh(pre)
    return a, pre


def _elman_forward_step(p: ElmanParams, x, h):
    pre = h @ p.W.T + x @ p.U.T + p.b
    return np.tanh(pre), pre


def batchify(sequences, dtype=np.float64):
    """Pad integer sequences into (ids, mask, lengths) arrays."""
    B = len(sequences)
    T = max((len(s) for s in sequences), default=0)
    ids = np.zeros((B, max(T, 1)), dtype=np.int64)
    mask = np.zeros((B, max(T, 1)), dtype=dtype)
    for b, s in enumerate(sequences):
        ids[b, :len(s)] = s
        mask[b, :len(s)] = 1.0
    return ids, mask, np.array([len(s) for s in sequences])


def forward_batch(cell: str, params, clf: ClassifierParams, sequences):
    """Probabilities for a batch of integer sequences; returns
    (probs, logits, cache) where cache feeds backward_batch."""
    dtype = clf.W.dtype
    n_in = input_size(params)
    H = hidden_size(params)
    _check_finite(*(np.asarray(a) for _, a in param_arrays(params)))
    ids, mask, lengths = batchify(sequences, dtype)
    B, T = ids.shape
    h = np.zeros((B, H), dtype=dtype)
    c = np.zeros((B, H), dtype=dtype)
    steps = []
    eye = np.eye(n_in, dtype=dtype)
    for t in range(T):
        m = mask[:, t:t + 1]
        if cell == "lstm":
            x = eye[ids[:, t]]
            h_new, c_new, gates = _lstm_forward_step(params, x, h, c)
            c_next = m * c_new + (1 - m) * c
            h_next = m * h_new + (1 - m) * h
            steps.append((x, h, c, gates, c_new, m))
            h, c = h_next, c_next
        elif cell == "o2rnn":
            syms = ids[:, t]
            h_new, pre = _o2rnn_forward_step(params, syms, h)
            h_next = m * h_new + (1 - m) * h
            steps.append((syms, h, h_new, m))
            h = h_next
        else:
            x = eye[ids[:, t]]
            h_new, pre = _elman_forward_step(params, x, h)
            h_next = m * h_new + (1 - m) * h
            steps.append((x, h, h_new, m))
            h = h_next
    logits = h @ clf.W + clf.b
    probs = sigmoid(logits)
    cache = (cell, sequences, steps, h)
    return probs, logits, cache


def _zeros_like_params(p):
    if isinstance(p, ClassifierParams):
        return ClassifierParams(np.zeros_like(p.W), 0.0)
    kwargs = {n: np.zeros_like(getattr(p, n)) for n in _ARRAY_FIELDS[type(p)]}
    if isinstance(p, O2RNNParams):
        kwargs["activation"] = p.activation
    return type(p)(**kwargs)


def backward_batch(params, clf: ClassifierParams, cache, dlogits):
    """Exact gradients of sum_b dlogits[b] * logit_b through the recurrence.

    Returns (cell_grads, clf_grads) shaped like the parameter objects.
    """
    cell, sequences, steps, h_final = cache
    gp = _zeros_like_params(params)
    gc = _zeros_like_params(clf)
    gc.W = h_final.T @ dlogits
    gc.b = float(dlogits.sum())
    dh = dlogits[:, None] * clf.W[None, :]
    dc = np.zeros_like(dh)
    for step in reversed(steps):
        if cell == "lstm":
            x, h_prev, c_prev, (i, f, o, g, tc), c_new, m = step
            dh_new = m * dh
            dh_pass = (1 - m) * dh
            dc_new = m * dc
            dc_pass = (1 - m) * dc
            do = dh_new * tc
            dc_new = dc_new + dh_new * o * (1 - tc * tc)
            df = dc_new * c_prev
            di = dc_new * g
            dg = dc_new * i
            dzi = di * i * (1 - i)
            dzf = df * f * (1 - f)
            dzo = do * o * (1 - o)
            dzc = dg * (1 - g * g)
            gp.W_i += dzi.T @ x; gp.U_i += dzi.T @ h_prev; gp.b_i += dzi.sum(0)
            gp.W_f += dzf.T @ x; gp.U_f += dzf.T @ h_prev; gp.b_f += dzf.sum(0)
            gp.W_o += dzo.T @ x; gp.U_o += dzo.T @ h_prev; gp.b_o += dzo.sum(0)
            gp.W_c += dzc.T @ x; gp.U_c += dzc.T @ h_prev; gp.b_c += dzc.sum(0)
            dh = (dzi @ params.U_i + dzf @ params.U_f +
                  dzo @ params.U_o + dzc @ params.U_c) + dh_pass
            dc = dc_new * f + dc_pass
        elif cell == "o2rnn":
            syms, h_prev, h_new, m = step
            dh_new = m * dh
            dh_pass = (1 - m) * dh
            if params.activation == "sigmoid":
                dpre = dh_new * h_new * (1 - h_new)
            else:
                dpre = dh_new * (1 - h_new * h_new)
            gp.b += dpre.sum(0)
            wsl = params.w[:, syms, :]          # (H, B, H)
            dh = np.einsum("bi,ibj->bj", dpre, wsl) + dh_pass
            for s in np.unique(syms):
                sel = syms == s
                gp.w[:, s, :] += dpre[sel].T @ h_prev[sel]
        else:
            x, h_prev, h_new, m = step
            dh_new = m * dh
            dh_pass = (1 - m) * dh
            dpre = dh_new * (1 - h_new * h_new)
            gp.W += dpre.T @ h_prev
            gp.U += dpre.T @ x
            gp.b += dpre.sum(0)
            dh = dpre @ params.W + dh_pass
    return gp, gc


def batch_loss(cell: str, params, clf: ClassifierParams, batch):
    """Mean BCE over [(seq, label), ...] via the batched forward."""
    probs, _, _ = forward_batch(cell, params, clf, [s for s, _ in batch])
    return float(np.mean([bce_loss(p, y) for p, (_, y) in zip(probs, batch)]))


def bptt_gradients(cell: str, params, clf: ClassifierParams, batch,
                   freeze: str = "none"):
    """Exact mean gradient of BCE over a batch of (sequence, label) pairs.

    freeze="recurrent" zeroes all cell-parameter gradients (classifier-only
    training).  Returns (cell_grads, clf_grads, mean_loss, probs).
    """
    if not batch:
        raise ValueError("empty batch")
    if freeze not in ("none", "recurrent"):
        raise ValueError(f"unknown freeze mode: {freeze}")
    sequences = [s for s, _ in batch]
    labels = np.array([float(y) for _, y in batch])
    probs, logits, cache = forward_batch(cell, params, clf, sequences)
    loss = float(np.mean([bce_loss(p, y) for p, y in zip(probs, labels)]))
    dlogits = ((probs - labels) / len(batch)).astype(clf.W.dtype)
    gp, gc = backward_batch(params, clf, cache, dlogits)
    if freeze == "recurrent":
        gp = _zeros_like_params(params)
    return gp, gc, loss, probs


def sgd_step(params, grads, lr: float):
    """theta' = theta - lr*g, elementwise; returns new params objects."""
    if isinstance(params, ClassifierParams):
        return ClassifierParams(params.W - lr * grads.W,
                                float(params.b - lr * grads.b))
    kwargs = {n: getattr(params, n) - lr * getattr(grads, n)
              for n in _ARRAY_FIELDS[type(params)]}
    if isinstance(params, O2RNNParams):
        kwargs["activation"] = params.activation
    return type(params)(**kwargs)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

STRATEGIES = ("lstm_default", "lstm_literal", "o2rnn_default",
              "uniform", "orthogonal", "sparse")


def _orthogonal(rng, shape, dtype):
    a = rng.standard_normal(shape)
    if shape[0] < shape[1]:
        q, r = np.linalg.qr(a.T)
        q = (q * np.sign(np.diag(r))).T
    else:
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
    return q[:shape[0], :shape[1]].astype(dtype)


def _init_matrix(rng, shape, strategy, hidden, dtype):
    if strategy == "lstm_default":
        k = 1.0 / np.sqrt(hidden)
        return rng.uniform(-k, k, size=shape).astype(dtype)
    if strategy == "lstm_literal":
        # the literal U(-sqrt(k), sqrt(k)) reading, exposed behind a flag
        k = np.sqrt(hidden)
        return rng.uniform(-k, k, size=shape).astype(dtype)
    if strategy == "o2rnn_default":
        return (rng.standard_normal(shape) * 0.1).astype(dtype)
    if strategy == "uniform":
        return rng.uniform(-0.1, 0.1, size=shape).astype(dtype)
    if strategy == "orthogonal":
        if len(shape) == 3:
            out = np.empty(shape)
            for j in range(shape[1]):  # per input slice of the rank-3 tensor
                out[:, j, :] = _orthogonal(rng, (shape[0], shape[2]),
                                           np.float64)
            return out.astype(dtype)
        if len(shape) == 1:
            return (rng.standard_normal(shape) * 0.1).astype(dtype)
        return _orthogonal(rng, shape, dtype)
    if strategy == "sparse":
        w = rng.standard_normal(shape) * 0.01
        w[rng.random(size=shape) < 0.9] = 0.0
        return w.astype(dtype)
    raise ValueError(f"unknown strategy: {strategy}")


def initialize(cell: str, hidden: int, n_input: int, strategy: str,
               seed: int, dtype=np.float64):
    """Returns (cell_params, classifier_params).  All biases are 0.01,
    classifier bias included."""
    rng = np.random.default_rng(seed)
    bias = lambda n: np.full(n, 0.01, dtype=dtype)
    if cell == "lstm":
        m = lambda shape: _init_matrix(rng, shape, strategy, hidden, dtype)
        p = LSTMParams(
            W_i=m((hidden, n_input)), W_f=m((hidden, n_input)),
            W_o=m((hidden, n_input)), W_c=m((hidden, n_input)),
            U_i=m((hidden, hidden)), U_f=m((hidden, hidden)),
            U_o=m((hidden, hidden)), U_c=m((hidden, hidden)),
            b_i=bias(hidden), b_f=bias(hidden),
            b_o=bias(hidden), b_c=bias(hidden))
    elif cell == "o2rnn":
        p = O2RNNParams(
            w=_init_matrix(rng, (hidden, n_input, hidden), strategy, hidden,
                           dtype),
            b=bias(hidden))
    elif cell == "elman":
        m = lambda shape: _init_matrix(rng, shape, strategy, hidden, dtype)
        p = ElmanParams(W=m((hidden, hidden)), U=m((hidden, n_input)),
                        b=bias(hidden))
    else:
        raise ValueError(f"unknown cell: {cell}")
    clf = ClassifierParams(
        W=_init_matrix(rng, (hidden,), strategy, hidden, dtype)
        if strategy not in ("orthogonal",)
        else (rng.standard_normal(hidden) * 0.1).astype(dtype),
        b=0.01)
    for _, a in param_arrays(p):
        _check_finite(a)
    return p, clf


def default_strategy(cell: str) -> str:
    return "o2rnn_default" if cell == "o2rnn" else "lstm_default"


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, cell: str, params, clf: ClassifierParams,
                    meta: dict | None = None):
    """JSON container with shapes and raw weights; save->load->save is
    byte-identical."""
    def arr(a):
        a = np.asarray(a)
        return {"shape": list(a.shape), "dtype": str(a.dtype),
                "data": a.ravel().tolist()}
    obj = {
        "cell": cell,
        "meta": meta or {},
        "params": {n: arr(a) for n, a in param_arrays(params)},
        "classifier": {"W": arr(clf.W), "b": clf.b},
    }
    if isinstance(params, O2RNNParams):
        obj["activation"] = params.activation
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)


def load_checkpoint(path):
    with open(path) as fh:
        obj = json.load(fh)

    def un(d):
        return np.array(d["data"], dtype=d["dtype"]).reshape(d["shape"])

    cell = obj["cell"]
    raw = {n: un(d) for n, d in obj["params"].items()}
    if cell == "lstm":
        params = LSTMParams(**raw)
    elif cell == "o2rnn":
        params = O2RNNParams(w=raw["w"], b=raw["b"],
                             activation=obj.get("activation", "sigmoid"))
    else:
        params = ElmanParams(**raw)
    clf = ClassifierParams(un(obj["classifier"]["W"]),
                           float(obj["classifier"]["b"]))
    return cell, params, clf, obj.get("meta", {})


# ---------------------------------------------------------------------------
# Finite differences (test oracle support)
# ---------------------------------------------------------------------------

def finite_difference_grads(cell, params, clf, batch, eps=1e-5):
    """Central finite differences of the mean BCE wrt every parameter."""
    gp = _zeros_like_params(params)
    gc = _zeros_like_params(clf)

    def loss():
        return batch_loss(cell, params, clf, batch)

    for name, a in param_arrays(params):
        ga = getattr(gp, name)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + eps
            lp = loss()
            a[idx] = orig - eps
            lm = loss()
            a[idx] = orig
            ga[idx] = (lp - lm) / (2 * eps)
    for i in range(clf.W.shape[0]):
        orig = clf.W[i]
        clf.W[i] = orig + eps; lp = loss()
        clf.W[i] = orig - eps; lm = loss()
        clf.W[i] = orig
        gc.W[i] = (lp - lm) / (2 * eps)
    orig = clf.b
    clf.b = orig + eps; lp = loss()
    clf.b = orig - eps; lm = loss()
    clf.b = orig
    gc.b = (lp - lm) / (2 * eps)
    return gp, gc


def grad_relative_error(g1, g2):
    """max over arrays of ||a-b|| / max(||a||, ||b||, 1e-12)."""
    err = 0.0
    for (n1, a), (n2, b) in zip(param_arrays(g1), param_arrays(g2)):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
        err = max(err, np.linalg.norm(a - b) / denom)
    return err
