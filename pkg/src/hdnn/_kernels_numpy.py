"""Pure-numpy kernels: the fallback backend.

Same signatures and semantics as ``_kernels_numba``.  Matrix products go
through BLAS here, so the per-element summation order is whatever the BLAS
build chooses; results are still deterministic for a fixed installation.
The lattice kernel is a direct port of the numba version with per-node
numpy reductions.
"""

import numpy as np


def matmul(a, b):
    return a @ b


def matmul_nt(a, b):
    """a @ b.T"""
    return a @ b.T


def matmul_tn(a, b):
    """a.T @ b"""
    return a.T @ b


# saturation clamps keep sigmoid strictly inside (0, 1) for any finite input
_SIG_LO = 5e-324
_SIG_HI = 1.0 - 2.0 ** -53


def sigmoid(x):
    """Elementwise logistic function, branch-stable for large negative input."""
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _SIG_LO, _SIG_HI, out=out)


def softmax_rows(logits, temperature):
    u = logits / temperature
    u = u - u.max(axis=1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(logits, temperature):
    u = logits / temperature
    m = u.max(axis=1, keepdims=True)
    return u - m - np.log(np.exp(u - m).sum(axis=1, keepdims=True))


def smbr_forward_backward(num_frames, num_states, node_time,
                          in_ptr, in_arc, out_ptr, out_arc,
                          arc_src, arc_dst, arc_time, arc_state,
                          arc_weight, arc_correct, acoustic_scale):
    """Lattice forward-backward for the expected frame-state accuracy.

    Returns ``(log_total_fwd, log_total_bwd, expected_accuracy,
    d_log_posteriors)`` where the gradient is of the risk (num_frames minus
    expected accuracy) with respect to each per-frame log-posterior entry.
    """
    num_nodes = node_time.shape[0]
    alpha = np.full(num_nodes, -np.inf)
    alpha[0] = 0.0
    # expected partial accuracy of prefixes arriving at each node
    alpha_acc = np.zeros(num_nodes)
    for n in range(1, num_nodes):
        arcs = in_arc[in_ptr[n]:in_ptr[n + 1]]
        scores = alpha[arc_src[arcs]] + arc_weight[arcs]
        m = scores.max()
        post = np.exp(scores - m)
        alpha[n] = m + np.log(post.sum())
        post = np.exp(scores - alpha[n])
        alpha_acc[n] = (post * (alpha_acc[arc_src[arcs]] + arc_correct[arcs])).sum()

    beta = np.full(num_nodes, -np.inf)
    beta[node_time == num_frames] = 0.0
    beta_acc = np.zeros(num_nodes)
    for n in range(num_nodes - 1, -1, -1):
        arcs = out_arc[out_ptr[n]:out_ptr[n + 1]]
        if arcs.size == 0:
            continue  # final node; beta already 0
        scores = arc_weight[arcs] + beta[arc_dst[arcs]]
        m = scores.max()
        beta[n] = m + np.log(np.exp(scores - m).sum())
        post = np.exp(scores - beta[n])
        beta_acc[n] = (post * (arc_correct[arcs] + beta_acc[arc_dst[arcs]])).sum()

    final = node_time == num_frames
    m = alpha[final].max()
    log_total = m + np.log(np.exp(alpha[final] - m).sum())
    expected_acc = beta_acc[0]

    gamma = np.exp(alpha[arc_src] + arc_weight + beta[arc_dst] - log_total)
    mean_acc_through = alpha_acc[arc_src] + arc_correct + beta_acc[arc_dst]
    d_log_post = np.zeros((num_frames, num_states))
    np.add.at(d_log_post, (arc_time, arc_state),
              -acoustic_scale * gamma * (mean_acc_through - expected_acc))
    return log_total, beta[0], expected_acc, d_log_post
