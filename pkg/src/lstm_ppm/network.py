"""Recurrent networks with a shared trunk and two prediction heads.

The stack has ``total_layers`` recurrent layers per branch. The first
``shared_layers`` feed both heads; the remaining layers are duplicated into an
activity branch and a time branch:

* ``shared == 0``: two fully separate networks,
* ``shared == total``: one network with two heads,
* otherwise: a shared trunk followed by specialised layers.

Everything runs on float64 numpy arrays shaped ``(batch, steps, features)``.
Gradients are computed exactly by backpropagation through time.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .encoding import NormConstants, TargetPair

PROB_FLOOR = 1e-10
CHECKPOINT_VERSION = 1


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class NetworkConfig:
    total_layers: int
    shared_layers: int
    neurons: int
    input_dim: int
    activity_out_dim: int
    cell_kind: str = "lstm"
    seed: int = 0

    def __post_init__(self):
        if self.total_layers < 1:
            raise ValueError("total_layers must be >= 1")
        if not 0 <= self.shared_layers <= self.total_layers:
            raise ValueError("shared_layers must be in [0, total_layers]")
        if self.neurons < 1:
            raise ValueError("neurons must be >= 1")
        if self.cell_kind not in ("lstm", "rnn"):
            raise ValueError(f"unknown cell kind {self.cell_kind!r}")

    @property
    def architecture(self) -> str:
        if self.shared_layers == 0:
            return "a"
        if self.shared_layers == self.total_layers:
            return "b"
        return "c"

    @property
    def gates(self) -> int:
        return 4 if self.cell_kind == "lstm" else 1

    @classmethod
    def for_alphabet(cls, n_activities: int, **kwargs) -> NetworkConfig:
        return cls(input_dim=n_activities + 3, activity_out_dim=n_activities + 1, **kwargs)


@dataclass
class LayerParams:
    """One recurrent layer acting on ``[h_prev, x]``.

    For an LSTM ``W`` stacks the forget, input, candidate and output gate
    matrices row-wise (each ``N x (N + in)``); for a plain RNN it is the
    single ``N x (N + in)`` matrix ``[W | U]``.
    """

    W: np.ndarray
    b: np.ndarray

    def _gate(self, k):
        n = self.W.shape[0] // 4
        return self.W[k * n : (k + 1) * n]

    def _bias(self, k):
        n = self.b.shape[0] // 4
        return self.b[k * n : (k + 1) * n]

    W_f = property(lambda self: self._gate(0))
    W_i = property(lambda self: self._gate(1))
    W_C = property(lambda self: self._gate(2))
    W_o = property(lambda self: self._gate(3))
    b_f = property(lambda self: self._bias(0))
    b_i = property(lambda self: self._bias(1))
    b_C = property(lambda self: self._bias(2))
    b_o = property(lambda self: self._bias(3))


@dataclass
class NetworkParams:
    shared: list[LayerParams]
    activity: list[LayerParams]
    time: list[LayerParams]
    act_W: np.ndarray
    act_b: np.ndarray
    time_W: np.ndarray
    time_b: np.ndarray

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """All parameter arrays in a fixed order."""
        for stack in ("shared", "activity", "time"):
            for i, layer in enumerate(getattr(self, stack)):
                yield f"{stack}.{i}.W", layer.W
                yield f"{stack}.{i}.b", layer.b
        yield "head.activity.W", self.act_W
        yield "head.activity.b", self.act_b
        yield "head.time.W", self.time_W
        yield "head.time.b", self.time_b

    def arrays(self) -> list[np.ndarray]:
        return [a for _, a in self.named_arrays()]

    def map(self, fn) -> NetworkParams:
        def stack(layers):
            return [LayerParams(fn(p.W), fn(p.b)) for p in layers]

        return NetworkParams(
            stack(self.shared),
            stack(self.activity),
            stack(self.time),
            fn(self.act_W),
            fn(self.act_b),
            fn(self.time_W),
            fn(self.time_b),
        )

    def copy(self) -> NetworkParams:
        return self.map(np.array)

    def zeros_like(self) -> NetworkParams:
        return self.map(np.zeros_like)

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], config: NetworkConfig) -> NetworkParams:
        s, L = config.shared_layers, config.total_layers

        def stack(name, n):
            return [LayerParams(arrays[f"{name}.{i}.W"], arrays[f"{name}.{i}.b"]) for i in range(n)]

        return cls(
            stack("shared", s),
            stack("activity", L - s),
            stack("time", L - s),
            arrays["head.activity.W"],
            arrays["head.activity.b"],
            arrays["head.time.W"],
            arrays["head.time.b"],
        )


def init_params(config: NetworkConfig) -> NetworkParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, LSTM forget bias 1."""
    rng = np.random.default_rng(config.seed)
    N, g = config.neurons, config.gates

    def layer(n_in):
        bound = 1.0 / np.sqrt(N + n_in)
        W = rng.uniform(-bound, bound, size=(g * N, N + n_in))
        b = np.zeros(g * N)
        if config.cell_kind == "lstm":
            b[:N] = 1.0
        return LayerParams(W, b)

    S, L = config.shared_layers, config.total_layers
    shared = [layer(config.input_dim if i == 0 else N) for i in range(S)]
    branch_in = N if S > 0 else config.input_dim
    activity = [layer(branch_in if i == 0 else N) for i in range(L - S)]
    time = [layer(branch_in if i == 0 else N) for i in range(L - S)]
    bound = 1.0 / np.sqrt(N)
    act_W = rng.uniform(-bound, bound, size=(config.activity_out_dim, N))
    time_W = rng.uniform(-bound, bound, size=(1, N))
    return NetworkParams(
        shared, activity, time, act_W, np.zeros(config.activity_out_dim), time_W, np.zeros(1)
    )


# ---------------------------------------------------------------------------
# cells


@dataclass
class CellState:
    h: np.ndarray
    C: np.ndarray


def lstm_cell(x: np.ndarray, prev: CellState, p: LayerParams) -> CellState:
    """One LSTM step for a single input vector (or a batch of rows)."""
    z = np.concatenate([prev.h, x], axis=-1)
    if z.shape[-1] != p.W.shape[1]:
        raise ValueError(f"input size {z.shape[-1]} does not match weights {p.W.shape}")
    f = sigmoid(z @ p.W_f.T + p.b_f)
    i = sigmoid(z @ p.W_i.T + p.b_i)
    C_cand = np.tanh(z @ p.W_C.T + p.b_C)
    C = f * prev.C + i * C_cand
    o = sigmoid(z @ p.W_o.T + p.b_o)
    return CellState(o * np.tanh(C), C)


def rnn_cell(x: np.ndarray, prev_h: np.ndarray, p: LayerParams) -> np.ndarray:
    """``tanh(W h_prev + U x + b)``; ``p.W`` is ``[W | U]``."""
    z = np.concatenate([prev_h, x], axis=-1)
    if z.shape[-1] != p.W.shape[1]:
        raise ValueError(f"input size {z.shape[-1]} does not match weights {p.W.shape}")
    return np.tanh(z @ p.W.T + p.b)


# ---------------------------------------------------------------------------
# layer passes over whole sequences


def _lstm_layer_forward(X, p, h0, c0):
    B, T, _ = X.shape
    N = p.W.shape[0] // 4
    Wh, Wx = p.W[:, :N], p.W[:, N:]
    ax = X @ Wx.T + p.b
    H = np.empty((B, T, N))
    Cs = np.empty((B, T + 1, N))
    Cs[:, 0] = c0
    act = np.empty((B, T, 4 * N))
    tanhC = np.empty((B, T, N))
    Hprev = np.empty((B, T, N))
    h = h0
    for t in range(T):
        Hprev[:, t] = h
        a = ax[:, t] + h @ Wh.T
        gates = act[:, t]
        gates[:, : 2 * N] = sigmoid(a[:, : 2 * N])
        gates[:, 2 * N : 3 * N] = np.tanh(a[:, 2 * N : 3 * N])
        gates[:, 3 * N :] = sigmoid(a[:, 3 * N :])
        f, i, g, o = gates[:, :N], gates[:, N : 2 * N], gates[:, 2 * N : 3 * N], gates[:, 3 * N :]
        Cs[:, t + 1] = f * Cs[:, t] + i * g
        tanhC[:, t] = np.tanh(Cs[:, t + 1])
        h = o * tanhC[:, t]
        H[:, t] = h
    cache = dict(X=X, Hprev=Hprev, act=act, Cs=Cs, tanhC=tanhC)
    return H, cache, (h, Cs[:, T].copy())


def _lstm_layer_backward(dH, p, cache):
    X, Hprev, act, Cs, tanhC = (cache[k] for k in ("X", "Hprev", "act", "Cs", "tanhC"))
    B, T, N = dH.shape
    Wh = p.W[:, :N]
    dA = np.empty((B, T, 4 * N))
    dh_next = np.zeros((B, N))
    dc_next = np.zeros((B, N))
    for t in reversed(range(T)):
        gates = act[:, t]
        f, i, g, o = gates[:, :N], gates[:, N : 2 * N], gates[:, 2 * N : 3 * N], gates[:, 3 * N :]
        dh = dH[:, t] + dh_next
        tc = tanhC[:, t]
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da = dA[:, t]
        da[:, :N] = dc * Cs[:, t] * f * (1.0 - f)
        da[:, N : 2 * N] = dc * g * i * (1.0 - i)
        da[:, 2 * N : 3 * N] = dc * i * (1.0 - g * g)
        da[:, 3 * N :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = da @ Wh
    return _affine_grads(dA, X, Hprev, p, N)


def _rnn_layer_forward(X, p, h0, c0=None):
    B, T, _ = X.shape
    N = p.W.shape[0]
    Wh, Wx = p.W[:, :N], p.W[:, N:]
    ax = X @ Wx.T + p.b
    H = np.empty((B, T, N))
    Hprev = np.empty((B, T, N))
    h = h0
    for t in range(T):
        Hprev[:, t] = h
        h = np.tanh(ax[:, t] + h @ Wh.T)
        H[:, t] = h
    return H, dict(X=X, Hprev=Hprev, H=H), (h, None)


def _rnn_layer_backward(dH, p, cache):
    X, Hprev, H = cache["X"], cache["Hprev"], cache["H"]
    B, T, N = dH.shape
    Wh = p.W[:, :N]
    dA = np.empty((B, T, N))
    dh_next = np.zeros((B, N))
    for t in reversed(range(T)):
        h = H[:, t]
        dA[:, t] = (dH[:, t] + dh_next) * (1.0 - h * h)
        dh_next = dA[:, t] @ Wh
    return _affine_grads(dA, X, Hprev, p, N)


def _affine_grads(dA, X, Hprev, p, N):
    """Parameter and input gradients from pre-activation gradients ``dA``."""
    rows = dA.shape[-1]
    dA2 = dA.reshape(-1, rows)
    Z = np.concatenate([Hprev, X], axis=-1).reshape(dA2.shape[0], -1)
    grad = LayerParams(dA2.T @ Z, dA2.sum(axis=0))
    dX = dA @ p.W[:, N:]
    return dX, grad


_LAYER_FWD = {"lstm": _lstm_layer_forward, "rnn": _rnn_layer_forward}
_LAYER_BWD = {"lstm": _lstm_layer_backward, "rnn": _rnn_layer_backward}


# ---------------------------------------------------------------------------
# whole network


@dataclass
class Tape:
    """Activations recorded by :func:`forward` for :func:`backward`."""

    config: NetworkConfig
    params: NetworkParams
    caches: dict[str, list[dict]]
    top_activity: np.ndarray
    top_time: np.ndarray
    logits: np.ndarray
    time_pred: np.ndarray
    final_state: dict[str, list[tuple]]
    single: bool = False


def _run_stack(kind, X, layers, states):
    caches, finals = [], []
    for layer, (h0, c0) in zip(layers, states):
        X, cache, final = _LAYER_FWD[kind](X, layer, h0, c0)
        caches.append(cache)
        finals.append(final)
    return X, caches, finals


def zero_state(config: NetworkConfig, batch: int) -> dict[str, list[tuple]]:
    N, S, L = config.neurons, config.shared_layers, config.total_layers

    def z():
        c = np.zeros((batch, N)) if config.cell_kind == "lstm" else None
        return (np.zeros((batch, N)), c)

    return {
        "shared": [z() for _ in range(S)],
        "activity": [z() for _ in range(L - S)],
        "time": [z() for _ in range(L - S)],
    }


def forward(X, params: NetworkParams, config: NetworkConfig, state=None):
    """Run the network over ``X`` of shape ``(B, T, input_dim)`` or ``(T, input_dim)``.

    Returns ``(logits, time_pred, tape)``: activity logits ``(B, T, |A|+1)``,
    time outputs ``(B, T)`` (leading axis dropped for 2-D input), and the tape
    whose ``final_state`` can seed a continuation of the same sequences.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[1] == 0:
        raise ValueError(f"expected non-empty (batch, steps, features) input, got {X.shape}")
    if X.shape[2] != config.input_dim:
        raise ValueError(f"input width {X.shape[2]} != config input_dim {config.input_dim}")
    if state is None:
        state = zero_state(config, X.shape[0])
    kind = config.cell_kind
    trunk, c_sh, f_sh = _run_stack(kind, X, params.shared, state["shared"])
    top_a, c_a, f_a = _run_stack(kind, trunk, params.activity, state["activity"])
    top_t, c_t, f_t = _run_stack(kind, trunk, params.time, state["time"])
    logits = top_a @ params.act_W.T + params.act_b
    time_pred = (top_t @ params.time_W.T + params.time_b)[..., 0]
    tape = Tape(
        config,
        params,
        {"shared": c_sh, "activity": c_a, "time": c_t},
        top_a,
        top_t,
        logits,
        time_pred,
        {"shared": f_sh, "activity": f_a, "time": f_t},
        single,
    )
    if single:
        return logits[0], time_pred[0], tape
    return logits, time_pred, tape


# ---------------------------------------------------------------------------
# loss


@dataclass
class Targets:
    """Per-step supervision: class labels (0-based, ``|A|`` = end of case),
    normalised deltas, and a mask selecting the supervised steps."""

    labels: np.ndarray
    deltas: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.deltas = np.asarray(self.deltas, dtype=np.float64)
        if self.mask is None:
            self.mask = np.ones(self.labels.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if not (self.labels.shape == self.deltas.shape == self.mask.shape):
            raise ValueError("labels, deltas and mask must have the same shape")

    @classmethod
    def from_pairs(cls, pairs: list[TargetPair]) -> Targets:
        return cls([p.label for p in pairs], [p.next_delta for p in pairs])

    def batched(self) -> Targets:
        if self.labels.ndim == 1:
            return Targets(self.labels[None], self.deltas[None], self.mask[None])
        return self


def _loss_terms(logits, time_pred, targets: Targets, weight: float):
    if logits.ndim == 2:
        logits, time_pred = logits[None], time_pred[None]
    targets = targets.batched()
    if logits.shape[:2] != targets.labels.shape or time_pred.shape != targets.labels.shape:
        raise ValueError("outputs and targets are not aligned")
    mask = targets.mask
    count = mask.sum()
    if count == 0:
        raise ValueError("no supervised steps")
    probs = softmax(logits)
    p_true = np.take_along_axis(probs, targets.labels[..., None], axis=-1)[..., 0]
    ce = -np.log(np.maximum(p_true, PROB_FLOOR))
    err = time_pred - targets.deltas
    value = ce[mask].sum() / count + weight * np.abs(err[mask]).sum() / count
    return value, probs, p_true, err, mask, count


def loss(logits, time_pred, targets: Targets, weight: float = 1.0) -> float:
    """Mean cross-entropy plus ``weight`` times mean absolute time error."""
    return float(_loss_terms(logits, time_pred, targets, weight)[0])


def backward(tape: Tape, targets: Targets, weight: float = 1.0) -> tuple[float, NetworkParams]:
    """Loss value and its gradient with respect to every parameter."""
    config, params = tape.config, tape.params
    value, probs, p_true, err, mask, count = _loss_terms(
        tape.logits, tape.time_pred, targets, weight
    )
    targets = targets.batched()
    # cross-entropy is flat where the probability floor is active
    live = (mask & (p_true >= PROB_FLOOR))[..., None]
    d_logits = probs.copy()
    np.put_along_axis(
        d_logits,
        targets.labels[..., None],
        np.take_along_axis(d_logits, targets.labels[..., None], axis=-1) - 1.0,
        axis=-1,
    )
    d_logits *= live / count
    d_time = weight * np.sign(err) * mask / count

    N = config.neurons
    ga = d_logits.reshape(-1, d_logits.shape[-1])
    gt = d_time.reshape(-1, 1)
    act_W = ga.T @ tape.top_activity.reshape(-1, N)
    act_b = ga.sum(axis=0)
    time_W = gt.T @ tape.top_time.reshape(-1, N)
    time_b = gt.sum(axis=0)
    d_top_a = d_logits @ params.act_W
    d_top_t = d_time[..., None] * params.time_W[0]

    kind = config.cell_kind

    def back_stack(dH, layers, caches):
        grads = [None] * len(layers)
        for j in reversed(range(len(layers))):
            dH, grads[j] = _LAYER_BWD[kind](dH, layers[j], caches[j])
        return dH, grads

    d_trunk_a, g_act = back_stack(d_top_a, params.activity, tape.caches["activity"])
    d_trunk_t, g_time = back_stack(d_top_t, params.time, tape.caches["time"])
    _, g_shared = back_stack(d_trunk_a + d_trunk_t, params.shared, tape.caches["shared"])
    grads = NetworkParams(g_shared, g_act, g_time, act_W, act_b, time_W, time_b)
    return float(value), grads


def loss_and_grad(X, targets: Targets, params: NetworkParams, config: NetworkConfig, weight=1.0):
    _, _, tape = forward(X, params, config)
    return backward(tape, targets, weight)


# ---------------------------------------------------------------------------
# trained model bundle and checkpoint files


@dataclass
class Model:
    """Everything needed to predict: network, normaliser and alphabet."""

    config: NetworkConfig
    params: NetworkParams
    norm: NormConstants
    alphabet: tuple[str, ...]
    max_trace_length: int = 1

    @property
    def activity_index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.alphabet, start=1)}

    @property
    def end_class(self) -> int:
        return len(self.alphabet)

    @property
    def suffix_cap(self) -> int:
        return 5 * self.max_trace_length


def save_checkpoint(path, model: Model) -> None:
    """Write a ``.npz`` container: one float64 array per parameter plus JSON metadata."""
    meta = {
        "format": "lstm_ppm.checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "norm": asdict(model.norm),
        "activity_index": model.activity_index,
        "max_trace_length": model.max_trace_length,
    }
    arrays = {name: np.ascontiguousarray(a) for name, a in model.params.named_arrays()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> Model:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != "lstm_ppm.checkpoint":
            raise ValueError(f"{path} is not a model checkpoint")
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    config = NetworkConfig(**meta["config"])
    index = meta["activity_index"]
    alphabet = tuple(sorted(index, key=index.get))
    return Model(
        config,
        NetworkParams.from_named(arrays, config),
        NormConstants(**meta["norm"]),
        alphabet,
        meta["max_trace_length"],
    )
