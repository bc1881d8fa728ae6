"""Graph-convolutional LSTM, baseline forward passes, and exact gradients.

Three model kinds share a dense head (Hardswish -> linear -> Hardswish ->
dropout -> linear):

  * ``gcn_lstm`` - one weight-shared graph-convolutional LSTM cell with
    peepholes, unrolled over the ten yearly graphs oldest to newest.
  * ``gcn``      - a single Chebyshev convolution over the 12-feature static
    graph.
  * ``lstm``     - the same cell equations with the graph filters replaced by
    dense per-node linear maps (order-1 Chebyshev filters), no adjacency.

All math is float64. Gradients are computed by hand-written reverse-mode
differentiation and validated against central finite differences in the test
suite. Parameters live in a flat ``{name: ndarray}`` dict; gate blocks are
stored concatenated in i, f, c, o order along the last axis (see
``gate_slices``).
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .ingest import _atomic_write_bytes
from .spectral import cheb_stack, cheb_stack_backward, scaled_laplacian

KINDS = ("gcn_lstm", "gcn", "lstm")
GATES = ("i", "f", "c", "o")
DROPOUT_P = 0.2
CHECKPOINT_MAGIC = b"FGC1"


def gate_slices(hidden: int) -> dict[str, slice]:
    """Column ranges of each gate inside a concatenated [*, 4*hidden] tensor."""
    return {g: slice(k * hidden, (k + 1) * hidden) for k, g in enumerate(GATES)}


def init_params(
    kind: str,
    cheb_k: int = 3,
    in_channels: int = 3,
    hidden: int = 64,
    head_hidden: int = 32,
    n_targets: int = 5,
    static_channels: int = 12,
    seed=0,
) -> dict[str, np.ndarray]:
    """Initialize all learnable tensors for one model kind.

    Filters are uniform in +-sqrt(1 / (K * fan_in)), which keeps the variance
    of an order-K polynomial filter's output comparable to its input; biases
    and peepholes start at zero.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    rng = np.random.default_rng(seed)

    def uniform(shape, order, fan_in):
        bound = np.sqrt(1.0 / (order * fan_in))
        return rng.uniform(-bound, bound, size=shape)

    params: dict[str, np.ndarray] = {}
    if kind == "gcn":
        params["gcn.theta"] = uniform(
            (cheb_k, static_channels, hidden), cheb_k, static_channels
        )
    else:
        order = cheb_k if kind == "gcn_lstm" else 1
        params["cell.wx"] = uniform((order, in_channels, 4 * hidden), order, in_channels)
        params["cell.wh"] = uniform((order, hidden, 4 * hidden), order, hidden)
        params["cell.b"] = np.zeros(4 * hidden)
        for g in ("i", "f", "o"):
            params[f"cell.p{g}"] = np.zeros(hidden)
    params["head.w1"] = uniform((hidden, head_hidden), 1, hidden)
    params["head.b1"] = np.zeros(head_hidden)
    params["head.w2"] = uniform((head_hidden, n_targets), 1, head_hidden)
    params["head.b2"] = np.zeros(n_targets)
    return params


def hardswish(x: np.ndarray) -> np.ndarray:
    return x * np.clip(x + 3.0, 0.0, 6.0) / 6.0


def _hardswish_grad(x: np.ndarray) -> np.ndarray:
    g = (2.0 * x + 3.0) / 6.0
    return np.where(x <= -3.0, 0.0, np.where(x >= 3.0, 1.0, g))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # overflow-free for any x: exp argument is always <= 0
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over all entries of the squared prediction error."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# cell


def _cell_forward(x_seq, l_tilde, params, cache=None):
    """Unroll the peephole GConvLSTM cell; returns the final hidden state.

    When ``cache`` is a list, per-step intermediates needed by the backward
    pass are appended to it.
    """
    wx, wh, b = params["cell.wx"], params["cell.wh"], params["cell.b"]
    p_i, p_f, p_o = params["cell.pi"], params["cell.pf"], params["cell.po"]
    hidden = b.size // 4
    kx, c_in, _ = wx.shape
    kh = wh.shape[0]
    n = x_seq.shape[1]
    if x_seq.shape[2] != c_in:
        raise ShapeMismatch(f"features {x_seq.shape} vs input filter {wx.shape}")
    if wh.shape[1] != hidden:
        raise ShapeMismatch(f"hidden filter {wh.shape} vs bias {b.shape}")
    wx_flat = wx.reshape(kx * c_in, 4 * hidden)
    wh_flat = wh.reshape(kh * hidden, 4 * hidden)
    sl = gate_slices(hidden)
    h = np.zeros((n, hidden))
    c = np.zeros((n, hidden))
    for t in range(x_seq.shape[0]):
        sx = cheb_stack(x_seq[t], l_tilde, kx)
        sh = cheb_stack(h, l_tilde, kh)
        sx_flat = sx.transpose(1, 0, 2).reshape(n, kx * c_in)
        sh_flat = sh.transpose(1, 0, 2).reshape(n, kh * hidden)
        z = sx_flat @ wx_flat + sh_flat @ wh_flat + b
        gate_i = _sigmoid(z[:, sl["i"]] + p_i * c)
        gate_f = _sigmoid(z[:, sl["f"]] + p_f * c)
        gate_g = np.tanh(z[:, sl["c"]])
        c_new = gate_f * c + gate_i * gate_g
        gate_o = _sigmoid(z[:, sl["o"]] + p_o * c_new)
        tanh_c = np.tanh(c_new)
        h_new = gate_o * tanh_c
        if cache is not None:
            cache.append(
                (sx_flat, sh_flat, gate_i, gate_f, gate_g, gate_o, c, c_new, tanh_c)
            )
        h, c = h_new, c_new
    return h


def _cell_backward(d_h, cache, l_tilde, params, grads):
    """Backpropagate through time; accumulates into ``grads`` in place."""
    wx, wh = params["cell.wx"], params["cell.wh"]
    p_i, p_f, p_o = params["cell.pi"], params["cell.pf"], params["cell.po"]
    hidden = params["cell.b"].size // 4
    kx, c_in, _ = wx.shape
    kh = wh.shape[0]
    wh_flat = wh.reshape(kh * hidden, 4 * hidden)
    sl = gate_slices(hidden)
    dh = d_h
    dc = np.zeros_like(d_h)
    for step in reversed(cache):
        sx_flat, sh_flat, g_i, g_f, g_g, g_o, c_prev, c_new, tanh_c = step
        n = dh.shape[0]
        d_o = dh * tanh_c
        dz_o = d_o * g_o * (1.0 - g_o)
        dc_new = dc + dh * g_o * (1.0 - tanh_c * tanh_c) + dz_o * p_o
        grads["cell.po"] += (dz_o * c_new).sum(axis=0)
        d_i = dc_new * g_g
        d_f = dc_new * c_prev
        d_g = dc_new * g_i
        dz_i = d_i * g_i * (1.0 - g_i)
        dz_f = d_f * g_f * (1.0 - g_f)
        dz_g = d_g * (1.0 - g_g * g_g)
        grads["cell.pi"] += (dz_i * c_prev).sum(axis=0)
        grads["cell.pf"] += (dz_f * c_prev).sum(axis=0)
        dz = np.concatenate([dz_i, dz_f, dz_g, dz_o], axis=1)
        grads["cell.b"] += dz.sum(axis=0)
        grads["cell.wx"] += (sx_flat.T @ dz).reshape(kx, c_in, 4 * hidden)
        grads["cell.wh"] += (sh_flat.T @ dz).reshape(kh, hidden, 4 * hidden)
        d_sh = (dz @ wh_flat.T).reshape(n, kh, hidden).transpose(1, 0, 2)
        dh = cheb_stack_backward(np.ascontiguousarray(d_sh), l_tilde)
        dc = dc_new * g_f + dz_i * p_i + dz_f * p_f


# ---------------------------------------------------------------------------
# head


def _head_forward(h, params, rng, training, dropout_p, cache=None):
    a1 = hardswish(h)
    z1 = a1 @ params["head.w1"] + params["head.b1"]
    a2 = hardswish(z1)
    if training and dropout_p > 0.0:
        if rng is None:
            raise ValueError("training forward pass needs an rng for dropout")
        mask = (rng.random(a2.shape) >= dropout_p) / (1.0 - dropout_p)
    else:
        mask = None
    d = a2 if mask is None else a2 * mask
    y = d @ params["head.w2"] + params["head.b2"]
    if cache is not None:
        cache.update(h=h, a1=a1, z1=z1, a2=a2, mask=mask, d=d)
    return y


def _head_backward(dy, cache, params, grads):
    """Returns the gradient w.r.t. the head input."""
    grads["head.w2"] = cache["d"].T @ dy
    grads["head.b2"] = dy.sum(axis=0)
    dd = dy @ params["head.w2"].T
    da2 = dd if cache["mask"] is None else dd * cache["mask"]
    dz1 = da2 * _hardswish_grad(cache["z1"])
    grads["head.w1"] = cache["a1"].T @ dz1
    grads["head.b1"] = dz1.sum(axis=0)
    da1 = dz1 @ params["head.w1"].T
    return da1 * _hardswish_grad(cache["h"])


# ---------------------------------------------------------------------------
# full forward passes


def forward_gcn_lstm(
    sample,
    params,
    rng=None,
    training=False,
    dropout_p=DROPOUT_P,
    l_tilde=None,
):
    """Predict the five target-year thicknesses from a temporal graph sample."""
    if l_tilde is None:
        l_tilde = scaled_laplacian(sample.adjacency)
    h = _cell_forward(sample.features, l_tilde, params)
    return _head_forward(h, params, rng, training, dropout_p)


def forward_gcn_baseline(
    sample,
    params,
    rng=None,
    training=False,
    dropout_p=DROPOUT_P,
    l_tilde=None,
):
    """Single Chebyshev convolution over the static 12-feature graph + head."""
    theta = params["gcn.theta"]
    if l_tilde is None and theta.shape[0] > 1:
        l_tilde = scaled_laplacian(sample.adjacency)
    h = _gcn_layer_forward(sample.features, l_tilde, theta)
    return _head_forward(h, params, rng, training, dropout_p)


def forward_lstm_baseline(
    features,
    params,
    rng=None,
    training=False,
    dropout_p=DROPOUT_P,
):
    """Per-node LSTM over the ten yearly feature vectors; no adjacency."""
    h = _cell_forward(np.asarray(features), None, params)
    return _head_forward(h, params, rng, training, dropout_p)


def _gcn_layer_forward(x, l_tilde, theta, cache=None):
    order, c_in, c_out = theta.shape
    if x.ndim != 2 or x.shape[1] != c_in:
        raise ShapeMismatch(f"features {x.shape} vs filter {theta.shape}")
    n = x.shape[0]
    stack = cheb_stack(x, l_tilde, order)
    flat = stack.transpose(1, 0, 2).reshape(n, order * c_in)
    if cache is not None:
        cache.update(flat=flat)
    return flat @ theta.reshape(order * c_in, c_out)


# ---------------------------------------------------------------------------
# loss + gradients


def loss_and_gradients(
    kind,
    sample,
    params,
    target,
    rng=None,
    training=False,
    dropout_p=DROPOUT_P,
    l_tilde=None,
):
    """One paired forward/backward pass.

    Returns (loss, prediction, gradient dict keyed like ``params``). The
    dropout mask sampled during the forward pass is held fixed for the
    backward pass.
    """
    target = np.asarray(target, dtype=np.float64)
    head_cache: dict = {}
    if kind == "gcn_lstm":
        if l_tilde is None:
            l_tilde = scaled_laplacian(sample.adjacency)
        cell_cache: list = []
        h = _cell_forward(sample.features, l_tilde, params, cache=cell_cache)
    elif kind == "lstm":
        l_tilde = None
        cell_cache = []
        h = _cell_forward(sample.features, l_tilde, params, cache=cell_cache)
    elif kind == "gcn":
        theta = params["gcn.theta"]
        if l_tilde is None and theta.shape[0] > 1:
            l_tilde = scaled_laplacian(sample.adjacency)
        gcn_cache: dict = {}
        h = _gcn_layer_forward(sample.features, l_tilde, theta, cache=gcn_cache)
    else:
        raise ValueError(f"unknown model kind {kind!r}")

    pred = _head_forward(h, params, rng, training, dropout_p, cache=head_cache)
    loss = mse_loss(pred, target)
    d_pred = 2.0 * (pred - target) / pred.size

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d_h = _head_backward(d_pred, head_cache, params, grads)
    if kind == "gcn":
        order, c_in, c_out = params["gcn.theta"].shape
        grads["gcn.theta"] = (gcn_cache["flat"].T @ d_h).reshape(order, c_in, c_out)
    else:
        _cell_backward(d_h, cell_cache, l_tilde, params, grads)
    return loss, pred, grads


def backward(sample, params, target, kind="gcn_lstm", **kwargs):
    """Exact gradients of the MSE loss w.r.t. every parameter tensor."""
    _, _, grads = loss_and_gradients(kind, sample, params, target, **kwargs)
    return grads


# ---------------------------------------------------------------------------
# checkpoint I/O


def save_checkpoint(path: str | os.PathLike, params: dict, meta: dict):
    """Versioned checkpoint: metadata strings + named float64 tensors, LE."""
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", 1)
    meta_items = sorted((str(k), str(v)) for k, v in meta.items())
    buf += struct.pack("<H", len(meta_items))
    for k, v in meta_items:
        for s in (k, v):
            raw = s.encode("utf-8")
            buf += struct.pack("<H", len(raw)) + raw
    buf += struct.pack("<H", len(params))
    for name in sorted(params):
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    _atomic_write_bytes(path, bytes(buf))


def load_checkpoint(path: str | os.PathLike) -> tuple[dict, dict]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a firngraph checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 8

    def take_str():
        nonlocal off
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        s = data[off : off + ln].decode("utf-8")
        off += ln
        return s

    (n_meta,) = struct.unpack_from("<H", data, off)
    off += 2
    meta = {}
    for _ in range(n_meta):
        k = take_str()
        meta[k] = take_str()
    (n_tensors,) = struct.unpack_from("<H", data, off)
    off += 2
    params = {}
    for _ in range(n_tensors):
        name = take_str()
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        params[name] = (
            np.frombuffer(data, dtype="<f8", count=n, offset=off)
            .reshape(shape)
            .copy()
        )
        off += 8 * n
    return params, meta
