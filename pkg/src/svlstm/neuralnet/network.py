"""LSTM regressor in plain numpy: forward pass, backpropagation through time, losses.

Gate layout inside every stacked weight block is (forget, input, candidate, output):

    f_t = sigmoid(U_f x_t + V_f h_{t-1} + b_f)
    i_t = sigmoid(U_i x_t + V_i h_{t-1} + b_i)
    C+_t = act(U_c x_t + V_c h_{t-1} + b_c)
    o_t = sigmoid(U_o x_t + V_o h_{t-1} + b_o)
    C_t = f_t * C_{t-1} + i_t * C+_t
    h_t = o_t * act(C_t)

``act`` is the layer activation (tanh by default). Hidden LSTM layers pass
their full output sequence upward; the last one passes only its final hidden
state to the dense stack, which ends in a linear scalar head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .hyperparams import HyperParams

GATES = ("forget", "input", "candidate", "output")
FORMAT_NAME = "svlstm-network"
FORMAT_VERSION = 1
MADL_SHARPNESS = 100.0


def _relu(z):
    return np.maximum(z, 0.0)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return expit(z)
    if name == "relu":
        return _relu(z)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation ``z`` given its output ``a``."""
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (z > 0).astype(float)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(eq=False)
class LstmLayerWeights:
    U: np.ndarray  # (4 * units, input_dim)
    V: np.ndarray  # (4 * units, units)
    b: np.ndarray  # (4 * units,)
    activation: str = "tanh"
    recurrent_dropout: float = 0.0

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        units = self.units
        if self.U.ndim != 2 or self.U.shape[0] != 4 * units:
            raise ValueError(f"U must have shape (4*units, input_dim), got {self.U.shape}")
        if self.V.shape != (4 * units, units) or self.b.shape != (4 * units,):
            raise ValueError(f"V/b shapes {self.V.shape}/{self.b.shape} do not match {units} units")

    @property
    def units(self) -> int:
        return self.V.shape[1]

    @property
    def input_dim(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(U_g, V_g, b_g) views for one gate."""
        k = GATES.index(name)
        s = slice(k * self.units, (k + 1) * self.units)
        return self.U[s], self.V[s], self.b[s]

    def params(self) -> list[np.ndarray]:
        return [self.U, self.V, self.b]


@dataclass(eq=False)
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"dense shapes {self.W.shape}/{self.b.shape} are inconsistent")

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]


@dataclass(eq=False)
class LstmNetwork:
    lstm_layers: list
    dense_layers: list
    head: DenseLayer
    loss_id: str = "mse"
    dropout: float = 0.0
    hyperparams: HyperParams | None = None
    madl_sharpness: float = MADL_SHARPNESS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= len(self.lstm_layers) <= 3 or len(self.dense_layers) > 3:
            raise ValueError("network needs 1-3 LSTM layers and 0-3 dense layers")
        width = self.lstm_layers[0].input_dim
        for layer in self.lstm_layers:
            if layer.input_dim != width:
                raise ValueError("LSTM layer input does not match the previous layer width")
            width = layer.units
        for layer in self.dense_layers:
            if layer.W.shape[1] != width:
                raise ValueError("dense layer input does not match the previous layer width")
            width = layer.W.shape[0]
        if self.head.W.shape != (1, width):
            raise ValueError("output head must map the last width to one scalar")
        if self.loss_id not in ("mse", "mae", "madl"):
            raise ValueError(f"unknown loss {self.loss_id!r}")

    @property
    def input_dim(self) -> int:
        return self.lstm_layers[0].input_dim

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in (*self.lstm_layers, *self.dense_layers, self.head):
            out.extend(layer.params())
        return out

    def param_names(self) -> list[str]:
        names = []
        for k in range(len(self.lstm_layers)):
            names += [f"lstm{k}.U", f"lstm{k}.V", f"lstm{k}.b"]
        for k in range(len(self.dense_layers)):
            names += [f"dense{k}.W", f"dense{k}.b"]
        return names + ["head.W", "head.b"]

    def get_weights(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def set_weights(self, weights) -> None:
        params = self.params()
        if len(weights) != len(params):
            raise ValueError("weight list length does not match the network")
        for p, w in zip(params, weights):
            if p.shape != np.shape(w):
                raise ValueError(f"weight shape {np.shape(w)} does not match {p.shape}")
            p[...] = w


def _glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_network(input_dim: int, hp: HyperParams, rng: np.random.Generator) -> LstmNetwork:
    """Glorot-uniform weights, forget-gate bias 1, all other biases 0."""
    lstm = []
    width = input_dim
    for units, act, rdrop in hp.active_lstm():
        U = np.vstack([_glorot(rng, units, width) for _ in GATES])
        V = np.vstack([_glorot(rng, units, units) for _ in GATES])
        b = np.zeros(4 * units)
        b[:units] = 1.0
        lstm.append(LstmLayerWeights(U, V, b, act, rdrop))
        width = units
    dense = []
    for units, act in hp.active_dense():
        dense.append(DenseLayer(_glorot(rng, units, width), np.zeros(units), act))
        width = units
    head = DenseLayer(_glorot(rng, 1, width), np.zeros(1), "linear")
    return LstmNetwork(lstm, dense, head, hp.loss, hp.dropout, hp)


def lstm_cell_step(x_t, h_prev, c_prev, w: LstmLayerWeights):
    """One cell update for a single sample or a batch (leading axis)."""
    x_t = np.asarray(x_t, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    if x_t.shape[-1] != w.input_dim or h_prev.shape[-1] != w.units or c_prev.shape != h_prev.shape:
        raise ValueError(
            f"cell expects input dim {w.input_dim} and state dim {w.units}, "
            f"got {x_t.shape}, {h_prev.shape}, {c_prev.shape}"
        )
    h_t, c_t, _ = _cell(x_t, h_prev, c_prev, w)
    return h_t, c_t


def _cell(x_t, h_in, c_prev, w: LstmLayerWeights, x_proj=None):
    n = w.units
    if x_proj is None:
        x_proj = x_t @ w.U.T + w.b
    z = x_proj + h_in @ w.V.T
    f = expit(z[..., :n])
    i = expit(z[..., n:2 * n])
    zc = z[..., 2 * n:3 * n]
    g = _activate(w.activation, zc)
    o = expit(z[..., 3 * n:])
    c = f * c_prev + i * g
    ac = _activate(w.activation, c)
    h = o * ac
    return h, c, (f, i, g, o, zc, ac)


def _check_batch(net: LstmNetwork, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != net.input_dim:
        raise ValueError(f"expected sequences of shape (lookback, {net.input_dim}), got {np.shape(X)}")
    if X.shape[1] < 1:
        raise ValueError("sequences must have at least one time step")
    return X


def _draw_masks(net: LstmNetwork, batch: int, rng: np.random.Generator | None):
    """Inverted-dropout masks: one fixed recurrent mask per layer and sequence, one per dense input."""
    rec, dense = [], []
    for layer in net.lstm_layers:
        p = layer.recurrent_dropout
        if rng is None or p == 0:
            rec.append(None)
        else:
            rec.append((rng.random((batch, layer.units)) >= p) / (1.0 - p))
    widths = [net.lstm_layers[-1].units] + [d.W.shape[0] for d in net.dense_layers]
    for width in widths:
        p = net.dropout
        if rng is None or p == 0:
            dense.append(None)
        else:
            dense.append((rng.random((batch, width)) >= p) / (1.0 - p))
    return rec, dense


def _forward(net: LstmNetwork, X: np.ndarray, masks=None):
    B, L, _ = X.shape
    rec_masks, dense_masks = masks if masks is not None else _draw_masks(net, B, None)
    caches = []
    seq = X
    for layer, mask in zip(net.lstm_layers, rec_masks):
        h = np.zeros((B, layer.units))
        c = np.zeros((B, layer.units))
        out = np.empty((B, L, layer.units))
        proj = seq @ layer.U.T + layer.b
        steps = []
        for t in range(L):
            h_in = h if mask is None else h * mask
            c_prev = c
            h, c, gates = _cell(None, h_in, c_prev, layer, proj[:, t])
            out[:, t] = h
            steps.append((h_in, c_prev, gates))
        caches.append((seq, steps, mask))
        seq = out
    a = seq[:, -1]
    dense_caches = []
    for layer, mask in zip((*net.dense_layers, net.head), dense_masks):
        a_in = a if mask is None else a * mask
        z = a_in @ layer.W.T + layer.b
        a = _activate(layer.activation, z)
        dense_caches.append((a_in, z, a, mask))
    return a[:, 0], (caches, dense_caches)


def forward(net: LstmNetwork, sequence) -> float:
    """Prediction for one (lookback, features) sequence; dropout is off."""
    X = np.asarray(sequence, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a (lookback, features) matrix, got shape {X.shape}")
    return float(predict(net, X[None])[0])


def predict(net: LstmNetwork, X, batch_size: int = 1024) -> np.ndarray:
    X = _check_batch(net, X)
    out = [_forward(net, X[s:s + batch_size])[0] for s in range(0, X.shape[0], batch_size)]
    return np.concatenate(out)


# ---------------------------------------------------------------- losses


def _directional(y_true, y_pred, reference):
    if reference is None:
        return y_true, y_pred
    reference = np.asarray(reference, dtype=float)
    return y_true - reference, y_pred - reference


def _check_pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size != y_pred.size:
        raise ValueError(f"length mismatch: {y_true.size} targets vs {y_pred.size} predictions")
    if y_true.size == 0:
        raise ValueError("loss of an empty sample is undefined")
    return y_true, y_pred


def loss(loss_id: str, y_true, y_pred, reference=None) -> float:
    """MSE, MAE or MADL of a forecast.

    MADL is ``mean(-sign(R * R_hat) * |R|)``. With ``reference`` given, R and
    R_hat are the moves ``y_true - reference`` and ``y_pred - reference``;
    otherwise the raw series are used as returns.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    if loss_id == "mse":
        return float(np.mean((y_true - y_pred) ** 2))
    if loss_id == "mae":
        return float(np.mean(np.abs(y_true - y_pred)))
    if loss_id == "madl":
        R, R_hat = _directional(y_true, y_pred, reference)
        return float(np.mean(-np.sign(R * R_hat) * np.abs(R)))
    raise ValueError(f"unknown loss {loss_id!r}")


def training_loss(loss_id, y_true, y_pred, reference=None, sharpness=MADL_SHARPNESS):
    """Differentiable loss value and dL/dy_pred.

    Identical to :func:`loss` for MSE and MAE; MADL replaces sign(x) with
    tanh(sharpness * x).
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    n = y_true.size
    if loss_id == "mse":
        diff = y_pred - y_true
        return float(np.mean(diff**2)), 2.0 * diff / n
    if loss_id == "mae":
        diff = y_pred - y_true
        return float(np.mean(np.abs(diff))), np.sign(diff) / n
    if loss_id == "madl":
        R, R_hat = _directional(y_true, y_pred, reference)
        s = np.tanh(sharpness * R * R_hat)
        value = float(np.mean(-s * np.abs(R)))
        grad = -(1.0 - s * s) * sharpness * R * np.abs(R) / n
        return value, grad
    raise ValueError(f"unknown loss {loss_id!r}")


# ---------------------------------------------------------------- backward


def backward(net: LstmNetwork, X, y, reference=None, masks=None):
    """Mean training loss over the batch and its gradient for every parameter.

    Returns ``(loss_value, grads)`` with ``grads`` ordered like ``net.params()``.
    ``masks`` fixes the dropout masks (see :func:`draw_masks`); ``None`` runs
    without dropout.
    """
    X = _check_batch(net, X)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0] or y.size == 0:
        raise ValueError("batch must be non-empty with one target per sequence")
    pred, (caches, dense_caches) = _forward(net, X, masks)
    value, d_pred = training_loss(net.loss_id, y, pred, reference, net.madl_sharpness)

    dense_grads = []
    grad_a = d_pred[:, None]
    for layer, (a_in, z, a, mask) in zip(reversed((*net.dense_layers, net.head)), reversed(dense_caches)):
        dz = grad_a * _activate_grad(layer.activation, z, a)
        dense_grads.append([dz.T @ a_in, dz.sum(axis=0)])
        grad_a = dz @ layer.W
        if mask is not None:
            grad_a = grad_a * mask
    dense_grads.reverse()

    B, L, _ = X.shape
    d_seq = np.zeros((B, L, net.lstm_layers[-1].units))
    d_seq[:, -1] = grad_a
    lstm_grads = []
    for layer, (inputs, steps, mask) in zip(reversed(net.lstm_layers), reversed(caches)):
        n = layer.units
        dz_all = np.empty((B, L, 4 * n))
        h_all = np.empty((B, L, n))
        dh_next = np.zeros((B, n))
        dc_next = np.zeros((B, n))
        for t in range(L - 1, -1, -1):
            h_in, c_prev, (f, i, g, o, zc, ac) = steps[t]
            c = f * c_prev + i * g
            dh = d_seq[:, t] + dh_next
            do = dh * ac
            dc = dh * o * _activate_grad(layer.activation, c, ac) + dc_next
            dz = dz_all[:, t]
            dz[:, :n] = dc * c_prev * f * (1.0 - f)
            dz[:, n:2 * n] = dc * g * i * (1.0 - i)
            dz[:, 2 * n:3 * n] = dc * i * _activate_grad(layer.activation, zc, g)
            dz[:, 3 * n:] = do * o * (1.0 - o)
            h_all[:, t] = h_in
            dh_next = dz @ layer.V
            if mask is not None:
                dh_next = dh_next * mask
            dc_next = dc * f
        flat = dz_all.reshape(B * L, 4 * n)
        dU = flat.T @ inputs.reshape(B * L, -1)
        dV = flat.T @ h_all.reshape(B * L, n)
        db = flat.sum(axis=0)
        lstm_grads.append([dU, dV, db])
        d_seq = dz_all @ layer.U
    lstm_grads.reverse()

    grads = [g for trio in lstm_grads for g in trio] + [g for pair in dense_grads for g in pair]
    return value, grads


def draw_masks(net: LstmNetwork, batch: int, rng: np.random.Generator):
    return _draw_masks(net, batch, rng)


# ---------------------------------------------------------------- serialization


def to_json(net: LstmNetwork) -> str:
    """Versioned JSON document: hyperparameters plus flat row-major weights with shapes."""
    arrays = []
    for name, p in zip(net.param_names(), net.params()):
        arrays.append({"name": name, "shape": list(p.shape), "data": [float(v) for v in p.ravel(order="C")]})
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "input_dim": net.input_dim,
        "loss": net.loss_id,
        "dropout": net.dropout,
        "madl_sharpness": net.madl_sharpness,
        "lstm": [{"units": l.units, "activation": l.activation, "recurrent_dropout": l.recurrent_dropout}
                 for l in net.lstm_layers],
        "dense": [{"units": d.W.shape[0], "activation": d.activation} for d in net.dense_layers],
        "hyperparams": None if net.hyperparams is None else net.hyperparams.to_dict(),
        "weights": arrays,
    }
    return json.dumps(doc)


def from_json(text: str) -> LstmNetwork:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not a serialized network document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {doc.get('version')}")
    weights = {w["name"]: np.asarray(w["data"], dtype=float).reshape(w["shape"]) for w in doc["weights"]}
    lstm = [
        LstmLayerWeights(weights[f"lstm{k}.U"], weights[f"lstm{k}.V"], weights[f"lstm{k}.b"],
                         spec["activation"], spec["recurrent_dropout"])
        for k, spec in enumerate(doc["lstm"])
    ]
    dense = [DenseLayer(weights[f"dense{k}.W"], weights[f"dense{k}.b"], spec["activation"])
             for k, spec in enumerate(doc["dense"])]
    head = DenseLayer(weights["head.W"], weights["head.b"], "linear")
    hp = None if doc.get("hyperparams") is None else HyperParams.from_dict(doc["hyperparams"])
    return LstmNetwork(lstm, dense, head, doc["loss"], doc["dropout"], hp, doc.get("madl_sharpness", MADL_SHARPNESS))
