"""Numba-compiled kernels: the default backend.

The matrix products accumulate over the shared dimension in ascending
order, so results are bit-reproducible and independent of any BLAS build;
this also makes the packed-gate product bit-identical to the three
separate products.  Kernels are cached to disk, so only the first process
ever pays the JIT cost.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def matmul(a, b):
    n, shared = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for k in range(shared):
            aik = a[i, k]
            for j in range(m):
                out[i, j] += aik * b[k, j]
    return out


@njit(cache=True)
def matmul_nt(a, b):
    """a @ b.T; transposing up front keeps the inner loop vectorizable
    without changing the ascending-k summation order per element."""
    bt = np.ascontiguousarray(b.T)
    n, shared = a.shape
    m = bt.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for k in range(shared):
            aik = a[i, k]
            for j in range(m):
                out[i, j] += aik * bt[k, j]
    return out


@njit(cache=True)
def matmul_tn(a, b):
    """a.T @ b"""
    shared, n = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for k in range(shared):
        for i in range(n):
            aki = a[k, i]
            for j in range(m):
                out[i, j] += aki * b[k, j]
    return out


# saturation clamps keep sigmoid strictly inside (0, 1) for any finite input
_SIG_LO = 5e-324
_SIG_HI = 1.0 - 2.0 ** -53


@njit(cache=True)
def sigmoid(x):
    out = np.empty_like(x)
    flat_in = x.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        v = flat_in[i]
        if v >= 0.0:
            r = 1.0 / (1.0 + np.exp(-v))
            flat_out[i] = r if r < _SIG_HI else _SIG_HI
        else:
            e = np.exp(v)
            r = e / (1.0 + e)
            flat_out[i] = r if r > _SIG_LO else _SIG_LO
    return out


@njit(cache=True)
def softmax_rows(logits, temperature):
    n, m = logits.shape
    out = np.empty((n, m))
    for i in range(n):
        top = logits[i, 0] / temperature
        for j in range(1, m):
            u = logits[i, j] / temperature
            if u > top:
                top = u
        total = 0.0
        for j in range(m):
            e = np.exp(logits[i, j] / temperature - top)
            out[i, j] = e
            total += e
        for j in range(m):
            out[i, j] /= total
    return out


@njit(cache=True)
def log_softmax_rows(logits, temperature):
    n, m = logits.shape
    out = np.empty((n, m))
    for i in range(n):
        top = logits[i, 0] / temperature
        for j in range(1, m):
            u = logits[i, j] / temperature
            if u > top:
                top = u
        total = 0.0
        for j in range(m):
            total += np.exp(logits[i, j] / temperature - top)
        norm = top + np.log(total)
        for j in range(m):
            out[i, j] = logits[i, j] / temperature - norm
    return out


@njit(cache=True)
def smbr_forward_backward(num_frames, num_states, node_time,
                          in_ptr, in_arc, out_ptr, out_arc,
                          arc_src, arc_dst, arc_time, arc_state,
                          arc_weight, arc_correct, acoustic_scale):
    """Lattice forward-backward for the expected frame-state accuracy.

    Nodes must be numbered in topological (time) order with node 0 the
    unique start node; every node must lie on a complete path.  Returns
    ``(log_total_fwd, log_total_bwd, expected_accuracy, d_log_posteriors)``
    where the gradient is of the risk (num_frames minus expected accuracy)
    with respect to each per-frame log-posterior entry.
    """
    num_nodes = node_time.shape[0]
    num_arcs = arc_weight.shape[0]

    alpha = np.full(num_nodes, -np.inf)
    alpha[0] = 0.0
    alpha_acc = np.zeros(num_nodes)
    for n in range(1, num_nodes):
        lo, hi = in_ptr[n], in_ptr[n + 1]
        m = -np.inf
        for ii in range(lo, hi):
            a = in_arc[ii]
            v = alpha[arc_src[a]] + arc_weight[a]
            if v > m:
                m = v
        total = 0.0
        for ii in range(lo, hi):
            a = in_arc[ii]
            total += np.exp(alpha[arc_src[a]] + arc_weight[a] - m)
        alpha[n] = m + np.log(total)
        acc = 0.0
        for ii in range(lo, hi):
            a = in_arc[ii]
            post = np.exp(alpha[arc_src[a]] + arc_weight[a] - alpha[n])
            acc += post * (alpha_acc[arc_src[a]] + arc_correct[a])
        alpha_acc[n] = acc

    beta = np.full(num_nodes, -np.inf)
    beta_acc = np.zeros(num_nodes)
    for n in range(num_nodes):
        if node_time[n] == num_frames:
            beta[n] = 0.0
    for n in range(num_nodes - 1, -1, -1):
        lo, hi = out_ptr[n], out_ptr[n + 1]
        if lo == hi:
            continue  # final node; beta already 0
        m = -np.inf
        for ii in range(lo, hi):
            a = out_arc[ii]
            v = arc_weight[a] + beta[arc_dst[a]]
            if v > m:
                m = v
        total = 0.0
        for ii in range(lo, hi):
            a = out_arc[ii]
            total += np.exp(arc_weight[a] + beta[arc_dst[a]] - m)
        beta[n] = m + np.log(total)
        acc = 0.0
        for ii in range(lo, hi):
            a = out_arc[ii]
            post = np.exp(arc_weight[a] + beta[arc_dst[a]] - beta[n])
            acc += post * (arc_correct[a] + beta_acc[arc_dst[a]])
        beta_acc[n] = acc

    m = -np.inf
    for n in range(num_nodes):
        if node_time[n] == num_frames and alpha[n] > m:
            m = alpha[n]
    total = 0.0
    for n in range(num_nodes):
        if node_time[n] == num_frames:
            total += np.exp(alpha[n] - m)
    log_total = m + np.log(total)
    expected_acc = beta_acc[0]

    d_log_post = np.zeros((num_frames, num_states))
    for a in range(num_arcs):
        gamma = np.exp(alpha[arc_src[a]] + arc_weight[a] + beta[arc_dst[a]] - log_total)
        mean_acc_through = alpha_acc[arc_src[a]] + arc_correct[a] + beta_acc[arc_dst[a]]
        d_log_post[arc_time[a], arc_state[a]] += (
            -acoustic_scale * gamma * (mean_acc_through - expected_acc))
    return log_total, beta[0], expected_acc, d_log_post
