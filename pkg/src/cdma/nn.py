"""Differentiable building blocks: LSTM, binary softmax head, cross-entropy, RMSProp.

Everything is plain numpy in float64. Parameters live in flat ``dict[str, ndarray]``
so that the optimizer, checkpoints and finite-difference checks can treat every
layer the same way. Gate order inside the stacked LSTM matrices is (input,
forget, output, cell) so the three sigmoid gates form one contiguous block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np

from .errors import FormatError, ShapeError

Params = Dict[str, np.ndarray]

PROB_EPS = 1e-12
CHECKPOINT_VERSION = 1


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------------- init

def init_lstm(rng: np.random.Generator, input_dim: int, hidden_dim: int = 32) -> Params:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias fixed at +1."""
    bound = 1.0 / np.sqrt(hidden_dim)
    H = hidden_dim
    p = {
        "Wx": rng.uniform(-bound, bound, size=(input_dim, 4 * H)),
        "Wh": rng.uniform(-bound, bound, size=(H, 4 * H)),
        "b": rng.uniform(-bound, bound, size=4 * H),
    }
    p["b"][H:2 * H] = 1.0
    return p


def init_head(rng: np.random.Generator, input_dim: int) -> Params:
    bound = 1.0 / np.sqrt(input_dim)
    return {
        "W": rng.uniform(-bound, bound, size=(input_dim, 2)),
        "b": rng.uniform(-bound, bound, size=2),
    }


# --------------------------------------------------------------------------- LSTM

@dataclass
class LstmCache:
    x: np.ndarray        # (B, T, D)
    hs: np.ndarray       # (B, T+1, H), hs[:, 0] is the zero initial state
    cs: np.ndarray       # (B, T+1, H)
    gates: np.ndarray    # (B, T, 4H) post-activation
    squeeze: bool


def _as_batch(x: np.ndarray, input_dim: int):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != input_dim:
        raise ShapeError(f"expected (..., T, {input_dim}) input, got {x.shape}")
    return x, squeeze


def lstm_forward_cache(p: Params, x: np.ndarray):
    """Run the recurrence from a zero state.

    ``x`` is ``(T, D)`` or ``(B, T, D)``; returns hidden states of matching
    leading shape ``(..., T, H)`` together with the cache needed by
    :func:`lstm_backward`.
    """
    Wx, Wh, b = p["Wx"], p["Wh"], p["b"]
    H = Wh.shape[0]
    x, squeeze = _as_batch(x, Wx.shape[0])
    B, T, _ = x.shape
    # sigmoid(z) = 0.5 + 0.5 tanh(z / 2): halve the sigmoid columns so one tanh covers all gates
    scale = np.ones(4 * H)
    scale[:3 * H] = 0.5
    xw = (x @ Wx + b) * scale
    Wh_s = Wh * scale
    hs = np.zeros((B, T + 1, H))
    cs = np.zeros((B, T + 1, H))
    gates = np.empty((B, T, 4 * H))
    h = hs[:, 0]
    c = cs[:, 0]
    for t in range(T):
        g = gates[:, t]
        np.tanh(xw[:, t] + h @ Wh_s, out=g)
        sg = g[:, :3 * H]
        sg *= 0.5
        sg += 0.5
        c = g[:, H:2 * H] * c
        c += g[:, :H] * g[:, 3 * H:]
        h = g[:, 2 * H:3 * H] * np.tanh(c)
        cs[:, t + 1] = c
        hs[:, t + 1] = h
    out = hs[:, 1:]
    cache = LstmCache(x=x, hs=hs, cs=cs, gates=gates, squeeze=squeeze)
    return (out[0] if squeeze else out), cache


def lstm_forward(p: Params, x: np.ndarray) -> np.ndarray:
    return lstm_forward_cache(p, x)[0]


def lstm_backward(p: Params, cache: LstmCache, dhs: np.ndarray, need_dx: bool = True):
    """Backpropagate ``dL/dh_t`` for every step; returns ``(dx, grads)``.

    ``dx`` is None when ``need_dx`` is false (inputs that are data, not activations).
    """
    Wx, Wh = p["Wx"], p["Wh"]
    H = Wh.shape[0]
    dhs = np.asarray(dhs, dtype=float)
    if cache.squeeze:
        dhs = dhs[None]
    B, T, _ = cache.x.shape
    if dhs.shape != (B, T, H):
        raise ShapeError(f"upstream gradient shape {dhs.shape} != {(B, T, H)}")
    dz_all = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    tanh_c = np.tanh(cache.cs[:, 1:])
    sig = cache.gates[:, :, :3 * H]
    dsig = sig * (1.0 - sig)
    dtanh_g = 1.0 - cache.gates[:, :, 3 * H:] ** 2
    dtanh_c = 1.0 - tanh_c ** 2
    WhT = np.ascontiguousarray(Wh.T)
    for t in range(T - 1, -1, -1):
        g = cache.gates[:, t]
        dh = dhs[:, t] + dh_next
        dc = dh * g[:, 2 * H:3 * H]
        dc *= dtanh_c[:, t]
        dc += dc_next
        dz = dz_all[:, t]
        np.multiply(dc, g[:, 3 * H:], out=dz[:, :H])
        np.multiply(dc, cache.cs[:, t], out=dz[:, H:2 * H])
        np.multiply(dh, tanh_c[:, t], out=dz[:, 2 * H:3 * H])
        dz[:, :3 * H] *= dsig[:, t]
        np.multiply(dc, g[:, :H], out=dz[:, 3 * H:])
        dz[:, 3 * H:] *= dtanh_g[:, t]
        dc_next = dc * g[:, H:2 * H]
        dh_next = dz @ WhT
    hs_prev = cache.hs[:, :-1].reshape(B * T, H)
    flat_dz = dz_all.reshape(B * T, 4 * H)
    grads = {
        "Wx": cache.x.reshape(B * T, -1).T @ flat_dz,
        "Wh": hs_prev.T @ flat_dz,
        "b": flat_dz.sum(axis=0),
    }
    if not need_dx:
        return None, grads
    dx = dz_all @ Wx.T
    return (dx[0] if cache.squeeze else dx), grads


# --------------------------------------------------------------------------- head

def dense_softmax(h: Params, v: np.ndarray) -> np.ndarray:
    """Two-class softmax over ``v @ W + b``; last axis is (control, depressed)."""
    z = np.asarray(v, dtype=float) @ h["W"] + h["b"]
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def head_backward(h: Params, v: np.ndarray, p_dep: np.ndarray, dp_dep: np.ndarray):
    """Gradient of a loss that depends on the head only through ``p_dep``.

    With two classes ``p_dep = sigmoid(z1 - z0)``, so ``dp/dz = p(1-p)(-1, +1)``.
    Returns ``(dv, grads)``.
    """
    v = np.asarray(v, dtype=float)
    s = np.asarray(dp_dep * p_dep * (1.0 - p_dep))
    dz = np.stack([-s, s], axis=-1)
    v2 = v.reshape(-1, v.shape[-1])
    dz2 = dz.reshape(-1, 2)
    grads = {"W": v2.T @ dz2, "b": dz2.sum(axis=0)}
    return dz @ h["W"].T, grads


# --------------------------------------------------------------------------- loss

def cross_entropy(p, y):
    """Binary cross-entropy ``-[y ln p + (1-y) ln(1-p)]`` on a clamped probability."""
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def cross_entropy_grad(p, y):
    """d(cross_entropy)/dp; zero where the clamp is active."""
    p = np.asarray(p, dtype=float)
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    g = -y / pc + (1.0 - y) / (1.0 - pc)
    return np.where((p > PROB_EPS) & (p < 1.0 - PROB_EPS), g, 0.0)


# --------------------------------------------------------------------------- RMSProp

@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    decay: float = 0.99
    epsilon: float = 1e-8
    acc: Dict[str, np.ndarray] = field(default_factory=dict)


def rmsprop_step(params: Params, grads: Params, state: OptimizerState):
    """In-place update: ``acc = d*acc + (1-d)*g^2``; ``theta -= lr*g/sqrt(acc+eps)``."""
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        theta = params[name]
        if g.shape != theta.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        acc = state.acc.get(name)
        if acc is None:
            acc = state.acc[name] = np.zeros_like(theta)
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        theta -= state.learning_rate * g / np.sqrt(acc + state.epsilon)
    return params, state


# --------------------------------------------------------------------------- checkpoints

def save_params(path, params: Params, meta: dict | None = None) -> None:
    doc = {
        "format": "cdma-params",
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "arrays": {
            k: {"shape": list(v.shape), "data": v.ravel().tolist()}
            for k, v in sorted(params.items())
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "cdma-params":
        raise FormatError(f"{path}: not a parameter checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    params = {}
    for k, entry in doc["arrays"].items():
        arr = np.asarray(entry["data"], dtype=float)
        params[k] = arr.reshape(entry["shape"])
    return params, doc.get("meta", {})
