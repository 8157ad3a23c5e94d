"""Shared oracles for the test suite."""

import math

import numpy as np

from cdma import model

REL_FLOOR = 1e-6  # below this magnitude both numbers are finite-difference roundoff


def rel_err(a, f):
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), REL_FLOOR)


def numeric_grad(fn, arr, eps=1e-5):
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + eps
        lp = fn()
        arr[idx] = old - eps
        lm = fn()
        arr[idx] = old
        g[idx] = (lp - lm) / (2 * eps)
    return g


def random_batch(rng, n_speakers=2, M=8, D=32, max_segments=3):
    return [model.SpeakerInput(f"s{k}",
                               rng.normal(size=(int(rng.integers(1, max_segments + 1)), M, D)),
                               rng.normal(size=(int(rng.integers(1, max_segments + 1)), M, D)),
                               k % 2)
            for k in range(n_speakers)]


def cdma_gradcheck(seed, hidden=4, M=8, D=32, eps=1e-5):
    """Max relative error between analytic and central-difference gradients of the full graph."""
    rng = np.random.default_rng(seed)
    params = model.init_params(rng, D, hidden)
    batch = random_batch(rng, M=M, D=D)
    labels = [b.label for b in batch]
    grads = model.backward(params, model.forward(params, batch), labels)

    def loss():
        return model.cdma_loss_batch(model.forward(params, batch).probs, labels)

    worst = 0.0
    for name, arr in params.items():
        num = numeric_grad(loss, arr, eps)
        worst = max(worst, float(rel_err(grads[name], num).max()))
    return worst


# direct-definition statistics oracles

def t_oracle(a, b):
    n1, n2 = len(a), len(b)
    m1, m2 = sum(a) / n1, sum(b) / n2
    v1 = sum((x - m1) ** 2 for x in a) / (n1 - 1)
    v2 = sum((x - m2) ** 2 for x in b) / (n2 - 1)
    sp = math.sqrt(((n1 - 1) * v1 + (n2 - 1) * v2) / (n1 + n2 - 2))
    return (m1 - m2) / (sp * math.sqrt(1 / n1 + 1 / n2)), n1 + n2 - 2, sp


def avg_ranks(x):
    order = sorted(range(len(x)), key=lambda i: x[i])
    r = [0.0] * len(x)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        for k in range(i, j + 1):
            r[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return r


def pearson_oracle(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    return num / den


ACCEPTANCE = []  # one line per acceptance criterion, printed by conftest
