"""Hot numeric kernels.

Each kernel has a vectorised numpy version (``*_np``) and a loop version
compiled with numba (``*_nb``). The public name is bound to one of the two
according to :data:`uavroute._accel.USE_NUMBA`. Both versions are exercised
by the test-suite and compared in ``benchmarks/bench_kernels.py``.
"""
import numpy as np

from ._accel import njit, select


# -- geometry -----------------------------------------------------------------

def pairwise_distances_np(pos):
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1])


@njit
def pairwise_distances_nb(pos):
    n = pos.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            out[i, j] = np.sqrt(dx * dx + dy * dy)
    return out


# -- advantage estimation -----------------------------------------------------

def _gae_loop(rewards, values, dones, last_value, gamma, lam):
    n = rewards.shape[0]
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = last_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv


gae_np = _gae_loop
gae_nb = njit(_gae_loop)


# -- masked softmax -----------------------------------------------------------

def masked_log_softmax_np(logits, mask):
    z = np.where(mask, logits, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return np.where(mask, shifted - lse, -np.inf)


@njit
def masked_log_softmax_nb(logits, mask):
    n, k = logits.shape
    out = np.empty((n, k))
    for r in range(n):
        zmax = -np.inf
        for c in range(k):
            if mask[r, c] and logits[r, c] > zmax:
                zmax = logits[r, c]
        total = 0.0
        for c in range(k):
            if mask[r, c]:
                total += np.exp(logits[r, c] - zmax)
        lse = np.log(total)
        for c in range(k):
            if mask[r, c]:
                out[r, c] = (logits[r, c] - zmax) - lse
            else:
                out[r, c] = -np.inf
    return out


# -- two-hidden-layer tanh MLP ------------------------------------------------

def _mlp_forward(x, w1, b1, w2, b2, w3, b3):
    h1 = np.tanh(x @ w1 + b1)
    h2 = np.tanh(h1 @ w2 + b2)
    return h1, h2, h2 @ w3 + b3


def _mlp_backward(x, h1, h2, w2, w3, dout):
    dw3 = h2.T @ dout
    db3 = dout.sum(axis=0)
    dh2 = (dout @ w3.T) * (1.0 - h2 * h2)
    dw2 = h1.T @ dh2
    db2 = dh2.sum(axis=0)
    dh1 = (dh2 @ w2.T) * (1.0 - h1 * h1)
    dw1 = x.T @ dh1
    db1 = dh1.sum(axis=0)
    return dw1, db1, dw2, db2, dw3, db3


mlp_forward_np = _mlp_forward
mlp_backward_np = _mlp_backward
mlp_forward_nb = njit(_mlp_forward)
mlp_backward_nb = njit(_mlp_backward)


pairwise_distances = select(pairwise_distances_nb, pairwise_distances_np)
gae = select(gae_nb, gae_np)
masked_log_softmax = select(masked_log_softmax_nb, masked_log_softmax_np)
mlp_forward = select(mlp_forward_nb, mlp_forward_np)
mlp_backward = select(mlp_backward_nb, mlp_backward_np)
