#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the hot kernels on representative shapes: small-net training
products, elementwise sigmoid/softmax, and lattice forward-backward.
Run:  python benchmarks/bench_backends.py
"""

import time

import numpy as np

from hdnn import _kernels_numpy as np_k
from hdnn.harness import random_lattice

try:
    from hdnn import _kernels_numba as nb_k
except ImportError:
    nb_k = None


def timeit(fn, *args, repeat=200):
    fn(*args)                      # warm up (and JIT-compile)
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def row(name, np_time, nb_time):
    if nb_time is None:
        print(f"{name:34s} {np_time * 1e6:10.1f}          (numba unavailable)")
    else:
        print(f"{name:34s} {np_time * 1e6:10.1f} {nb_time * 1e6:10.1f} "
              f"{np_time / nb_time:8.2f}x")


def main():
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")

    cases = []
    for batch, dim in ((8, 16), (32, 64), (128, 512)):
        a = rng.normal(size=(batch, dim))
        b = rng.normal(size=(dim, dim))
        cases.append((f"matmul {batch}x{dim} @ {dim}x{dim}", "matmul", (a, b)))
        cases.append((f"matmul_nt {batch}x{dim} @ ({dim}x{dim})T", "matmul_nt", (a, b)))
    x = rng.normal(size=(128, 512))
    cases.append(("sigmoid 128x512", "sigmoid", (x,)))
    cases.append(("softmax rows 128x512", "softmax_rows", (x, 1.0)))
    cases.append(("log-softmax rows 128x512", "log_softmax_rows", (x, 1.0)))

    for name, kernel, args in cases:
        np_time = timeit(getattr(np_k, kernel), *args)
        nb_time = timeit(getattr(nb_k, kernel), *args) if nb_k else None
        row(name, np_time, nb_time)

    # lattice forward-backward on a 400-frame, 32-state lattice
    lattice, reference = random_lattice(rng, 400, 32, max_nodes_per_frame=4,
                                        max_arcs_per_node=3)
    logits = rng.normal(size=(400, 32))
    log_post = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    weights = log_post[lattice.arc_time, lattice.arc_state] + lattice.arc_lm
    correct = (reference.states[lattice.arc_time] == lattice.arc_state).astype(float)
    args = (lattice.num_frames, 32, lattice.node_time,
            lattice.in_ptr, lattice.in_arc, lattice.out_ptr, lattice.out_arc,
            lattice.arc_src, lattice.arc_dst, lattice.arc_time, lattice.arc_state,
            weights, correct, 1.0)
    np_time = timeit(np_k.smbr_forward_backward, *args, repeat=20)
    nb_time = (timeit(nb_k.smbr_forward_backward, *args, repeat=20)
               if nb_k else None)
    row(f"lattice fwd-bwd T=400 ({lattice.num_arcs} arcs)", np_time, nb_time)


if __name__ == "__main__":
    main()
