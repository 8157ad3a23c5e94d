"""Cross-data multilevel attention classifier over read + spontaneous speech.

One model pairs read speech with one emotional category of spontaneous speech.
Per speaker it produces six depression probabilities::

    p_c, p_o     stage-1 segment classifiers (read, spontaneous), soft proportion
    p_t, p_d     stage-2 LSTMs over cross-type attended segment representations
    p_f, p_fstar heads over r + s and r* + s* (global averages)

The forward pass is batched over speakers: stage-1 segments of every speaker
are stacked into one ``(S, M, D)`` tensor, stage-2 sequences are right-padded
to the longest speaker and masked. Because the LSTMs are causal, padded steps
never influence valid outputs, so the reverse pass is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, List, Sequence

import numpy as np

from . import nn
from .errors import ArityError, EmptySegmentSet, StateError

PROB_KEYS = ("p_c", "p_o", "p_t", "p_d", "p_f", "p_fstar")
LSTM_NAMES = ("read1", "spont1", "read2", "spont2")
HEAD_NAMES = ("head_c", "head_o", "head_t", "head_d", "head_f", "head_fstar")


@dataclass(frozen=True)
class ProbSet:
    p_c: float
    p_o: float
    p_t: float
    p_d: float
    p_f: float
    p_fstar: float

    def values(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass
class SpeakerInput:
    """Segments of one speaker for one (read, spontaneous condition) pairing."""

    speaker_id: str
    read: np.ndarray    # (N, M, D)
    spont: np.ndarray   # (L, M, D)
    label: int = 0


# --------------------------------------------------------------------------- params

def init_params(rng: np.random.Generator, input_dim: int = 32, hidden_dim: int = 32) -> nn.Params:
    params: nn.Params = {}
    for name in LSTM_NAMES:
        d = input_dim if name.endswith("1") else hidden_dim
        for k, v in nn.init_lstm(rng, d, hidden_dim).items():
            params[f"{name}.{k}"] = v
    for name in HEAD_NAMES:
        for k, v in nn.init_head(rng, hidden_dim).items():
            params[f"{name}.{k}"] = v
    return params


def sub(params: nn.Params, prefix: str) -> nn.Params:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".")}


def _put(grads: nn.Params, prefix: str, g: nn.Params) -> None:
    for k, v in g.items():
        grads[f"{prefix}.{k}"] = v


# --------------------------------------------------------------------------- attention

def cosine_to(x: np.ndarray, ref: np.ndarray):
    """Cosine of each row of ``x`` (..., n, D) against ``ref`` (..., D); 0 for zero norms."""
    nx = np.linalg.norm(x, axis=-1)
    nr = np.linalg.norm(ref, axis=-1)[..., None]
    dot = np.einsum("...nd,...d->...n", x, ref)
    denom = nx * nr
    ok = denom > 0
    cos = np.where(ok, dot / np.where(ok, denom, 1.0), 0.0)
    return cos, nx, np.broadcast_to(nr, nx.shape), ok


def cosine_attention(x: np.ndarray, ref: np.ndarray, mask: np.ndarray | None = None):
    """Rescale rows by ``1 + softmax(cos(row, ref))``.

    Returns ``(y, w, cache)``; masked rows get weight 0 and are excluded from
    the softmax normaliser.
    """
    cos, nx, nr, ok = cosine_to(x, ref)
    logits = cos if mask is None else np.where(mask, cos, -np.inf)
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    w = e / e.sum(axis=-1, keepdims=True)
    y = (1.0 + w)[..., None] * x
    return y, w, (x, ref, cos, nx, nr, ok, w)


def cosine_attention_backward(cache, dy: np.ndarray):
    """Returns ``(dx, dref)``."""
    x, ref, cos, nx, nr, ok, w = cache
    dx = (1.0 + w)[..., None] * dy
    dw = np.einsum("...nd,...nd->...n", dy, x)
    dcos = w * (dw - (w * dw).sum(axis=-1, keepdims=True))
    dcos = np.where(ok, dcos, 0.0)
    safe_nx = np.where(ok, nx, 1.0)
    safe_nr = np.where(ok, nr, 1.0)
    xhat = x / safe_nx[..., None]
    rnorm = np.linalg.norm(ref, axis=-1)
    rhat = ref / np.where(rnorm > 0, rnorm, 1.0)[..., None]
    rhat_b = np.expand_dims(rhat, -2)
    dx += (dcos / safe_nx)[..., None] * (rhat_b - cos[..., None] * xhat)
    dref = np.einsum("...n,...nd->...d", dcos / safe_nr, xhat - cos[..., None] * rhat_b)
    return dx, dref


def segment_average(seg: np.ndarray) -> np.ndarray:
    return np.asarray(seg, dtype=float).mean(axis=-2)


def itmla_enhance(seg: np.ndarray):
    """Reweight the rows of one segment (M, D) against the segment mean.

    Returns ``(enhanced, weights)``.
    """
    seg = np.asarray(seg, dtype=float)
    y, w, _ = cosine_attention(seg, segment_average(seg))
    return y, w


def ctga_enhance(reprs: np.ndarray, reference: np.ndarray):
    """Reweight segment representations (N, H) against the other type's global mean."""
    reprs = np.asarray(reprs, dtype=float)
    y, w, _ = cosine_attention(reprs, np.asarray(reference, dtype=float))
    return y, w


# --------------------------------------------------------------------------- forward

@dataclass
class _TypeCache:
    att: tuple
    lstm: nn.LstmCache
    h_last: np.ndarray
    q: np.ndarray
    owner: np.ndarray
    pos: np.ndarray
    counts: np.ndarray
    mask: np.ndarray
    reps: np.ndarray          # padded (K, Nmax, H)
    ctga: tuple | None = None
    star: np.ndarray | None = None
    lstm2: nn.LstmCache | None = None
    g_mean: np.ndarray | None = None


@dataclass
class ForwardResult:
    probs: Dict[str, np.ndarray]          # each (K,)
    hard_c: np.ndarray
    hard_o: np.ndarray
    cache: dict

    def prob_set(self, k: int) -> ProbSet:
        return ProbSet(**{key: float(self.probs[key][k]) for key in PROB_KEYS})

    @property
    def p_hat(self) -> np.ndarray:
        return aggregate_batch(self.probs)


def _stack(segs: Sequence[np.ndarray]):
    counts = np.array([len(s) for s in segs])
    if np.any(counts < 1):
        raise EmptySegmentSet("every speaker needs at least one segment of each type")
    X = np.concatenate([np.asarray(s, dtype=float) for s in segs], axis=0)
    owner = np.repeat(np.arange(len(segs)), counts)
    pos = np.concatenate([np.arange(c) for c in counts])
    return X, owner, pos, counts


def _stage1(params, prefix, head, segs):
    X, owner, pos, counts = _stack(segs)
    K = len(segs)
    Y, _, att = cosine_attention(X, X.mean(axis=1))
    hs, lc = nn.lstm_forward_cache(sub(params, prefix), Y)
    h_last = hs[:, -1]
    q = nn.dense_softmax(sub(params, head), h_last)[:, 1]
    reps_flat = hs.mean(axis=1)
    p = np.bincount(owner, weights=q, minlength=K) / counts
    hard = np.bincount(owner, weights=(q > 0.5).astype(float), minlength=K) / counts
    nmax = counts.max()
    reps = np.zeros((K, nmax, reps_flat.shape[1]))
    reps[owner, pos] = reps_flat
    mask = np.arange(nmax)[None, :] < counts[:, None]
    tc = _TypeCache(att=att, lstm=lc, h_last=h_last, q=q, owner=owner, pos=pos,
                    counts=counts, mask=mask, reps=reps)
    return p, hard, tc


def _masked_mean(a: np.ndarray, mask: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return (a * mask[..., None]).sum(axis=1) / counts[:, None]


def forward(params: nn.Params, batch: Sequence[SpeakerInput]) -> ForwardResult:
    if len(batch) == 0:
        raise EmptySegmentSet("empty speaker batch")
    p_c, hard_c, rc = _stage1(params, "read1", "head_c", [b.read for b in batch])
    p_o, hard_o, oc = _stage1(params, "spont1", "head_o", [b.spont for b in batch])
    r = _masked_mean(rc.reps, rc.mask, rc.counts)
    s = _masked_mean(oc.reps, oc.mask, oc.counts)

    probs = {"p_c": p_c, "p_o": p_o}
    for tc, ref, lstm_name, head_name, key in (
        (rc, s, "read2", "head_t", "p_t"),
        (oc, r, "spont2", "head_d", "p_d"),
    ):
        star, _, tc.ctga = cosine_attention(tc.reps, ref, tc.mask)
        tc.star = star
        g, tc.lstm2 = nn.lstm_forward_cache(sub(params, lstm_name), star)
        tc.g_mean = _masked_mean(g, tc.mask, tc.counts)
        probs[key] = nn.dense_softmax(sub(params, head_name), tc.g_mean)[:, 1]

    r_star = _masked_mean(rc.star, rc.mask, rc.counts)
    s_star = _masked_mean(oc.star, oc.mask, oc.counts)
    f = r + s
    f_star = r_star + s_star
    probs["p_f"] = nn.dense_softmax(sub(params, "head_f"), f)[:, 1]
    probs["p_fstar"] = nn.dense_softmax(sub(params, "head_fstar"), f_star)[:, 1]
    cache = {"read": rc, "spont": oc, "r": r, "s": s, "r_star": r_star,
             "s_star": s_star, "f": f, "f_star": f_star, "probs": probs}
    return ForwardResult(probs=probs, hard_c=hard_c, hard_o=hard_o, cache=cache)


# --------------------------------------------------------------------------- loss

def cdma_loss_batch(probs: Dict[str, np.ndarray], labels) -> float:
    y = np.asarray(labels, dtype=float)
    total = sum(nn.cross_entropy(probs[k], y).sum() for k in PROB_KEYS)
    return float(total / len(y))


def cdma_loss(prob_sets: Sequence[ProbSet], labels) -> float:
    """Sum of the six per-head cross-entropies, summed over speakers, divided by K."""
    probs = {k: np.array([getattr(ps, k) for ps in prob_sets]) for k in PROB_KEYS}
    return cdma_loss_batch(probs, labels)


def backward(params: nn.Params, result: ForwardResult | None, labels) -> nn.Params:
    """Exact gradient of :func:`cdma_loss_batch` w.r.t. every parameter."""
    if result is None or not result.cache:
        raise StateError("backward called before a forward pass")
    c = result.cache
    y = np.asarray(labels, dtype=float)
    K = len(y)
    dp = {k: nn.cross_entropy_grad(c["probs"][k], y) / K for k in PROB_KEYS}
    grads: nn.Params = {}
    rc, oc = c["read"], c["spont"]

    df, g = nn.head_backward(sub(params, "head_f"), c["f"], c["probs"]["p_f"], dp["p_f"])
    _put(grads, "head_f", g)
    dfs, g = nn.head_backward(sub(params, "head_fstar"), c["f_star"], c["probs"]["p_fstar"],
                              dp["p_fstar"])
    _put(grads, "head_fstar", g)
    dr = df.copy()
    ds = df.copy()

    d_reps = {}
    d_ref = {}
    for tc, d_glob_star, lstm_name, head_name, key, name in (
        (rc, dfs, "read2", "head_t", "p_t", "read"),
        (oc, dfs, "spont2", "head_d", "p_d", "spont"),
    ):
        dgm, g = nn.head_backward(sub(params, head_name), tc.g_mean, c["probs"][key], dp[key])
        _put(grads, head_name, g)
        w_t = tc.mask[..., None] / tc.counts[:, None, None]
        dG = w_t * dgm[:, None, :]
        dstar, g = nn.lstm_backward(sub(params, lstm_name), tc.lstm2, dG)
        _put(grads, lstm_name, g)
        dstar = dstar + w_t * d_glob_star[:, None, :]
        d_reps[name], d_ref[name] = cosine_attention_backward(tc.ctga, dstar)

    # read reprs were attended against s, spontaneous ones against r
    ds += d_ref["read"]
    dr += d_ref["spont"]
    d_reps["read"] += rc.mask[..., None] / rc.counts[:, None, None] * dr[:, None, :]
    d_reps["spont"] += oc.mask[..., None] / oc.counts[:, None, None] * ds[:, None, :]

    for tc, lstm_name, head_name, key, name in (
        (rc, "read1", "head_c", "p_c", "read"),
        (oc, "spont1", "head_o", "p_o", "spont"),
    ):
        dq = dp[key][tc.owner] / tc.counts[tc.owner]
        dh_last, g = nn.head_backward(sub(params, head_name), tc.h_last, tc.q, dq)
        _put(grads, head_name, g)
        d_rep_flat = d_reps[name][tc.owner, tc.pos]
        S, M, H = tc.lstm.x.shape[0], tc.lstm.x.shape[1], d_rep_flat.shape[1]
        dH = np.broadcast_to(d_rep_flat[:, None, :] / M, (S, M, H)).copy()
        dH[:, -1] += dh_last
        _, g = nn.lstm_backward(sub(params, lstm_name), tc.lstm, dH, need_dx=False)
        _put(grads, lstm_name, g)
    return grads


# --------------------------------------------------------------------------- single-speaker views

def stage1_forward(params: nn.Params, segs: np.ndarray, prefix: str = "read1",
                   head: str = "head_c"):
    """Per-segment probabilities, segment representations and the type probability."""
    segs = np.asarray(segs, dtype=float)
    if segs.ndim != 3 or len(segs) == 0:
        raise EmptySegmentSet("stage-1 needs at least one (M, D) segment")
    p, _, tc = _stage1(params, prefix, head, [segs])
    return tc.q, tc.reps[0], float(p[0])


def stage2_forward(params: nn.Params, reprs: np.ndarray, prefix: str = "read2",
                   head: str = "head_t") -> float:
    reprs = np.asarray(reprs, dtype=float)
    if len(reprs) == 0:
        raise EmptySegmentSet("stage-2 needs at least one representation")
    hs = nn.lstm_forward(sub(params, prefix), reprs)
    return float(nn.dense_softmax(sub(params, head), hs.mean(axis=0))[1])


def ctf_fuse(r, s, r_star, s_star, params: nn.Params):
    p_f = nn.dense_softmax(sub(params, "head_f"), np.asarray(r) + np.asarray(s))[1]
    p_fs = nn.dense_softmax(sub(params, "head_fstar"), np.asarray(r_star) + np.asarray(s_star))[1]
    return float(p_f), float(p_fs)


# --------------------------------------------------------------------------- decisions

def aggregate_batch(probs: Dict[str, np.ndarray]) -> np.ndarray:
    return np.mean([probs[k] for k in PROB_KEYS], axis=0)


def aggregate(ps: ProbSet):
    """Mean of the six probabilities and the strict ``> 0.5`` decision."""
    p_hat = float(np.mean(ps.values()))
    return p_hat, int(p_hat > 0.5)


def majority_vote(preds: Sequence[int]) -> int:
    preds = list(preds)
    if len(preds) != 3:
        raise ArityError(f"majority vote needs exactly 3 labels, got {len(preds)}")
    if any(p not in (0, 1) for p in preds):
        raise ValueError(f"labels must be binary, got {preds}")
    return int(sum(preds) >= 2)


def predict(params: nn.Params, speakers: Sequence[SpeakerInput], batch_size: int = 64) -> List[dict]:
    out = []
    for start in range(0, len(speakers), batch_size):
        chunk = speakers[start:start + batch_size]
        res = forward(params, chunk)
        p_hat = res.p_hat
        for k, sp in enumerate(chunk):
            row = {"speaker_id": sp.speaker_id}
            row.update({key: float(res.probs[key][k]) for key in PROB_KEYS})
            row["hard_c"] = float(res.hard_c[k])
            row["hard_o"] = float(res.hard_o[k])
            row["p_hat"] = float(p_hat[k])
            row["label"] = int(p_hat[k] > 0.5)
            row["logit"] = float(p_hat[k])
            out.append(row)
    return out
