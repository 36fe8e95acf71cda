"""Hypothesis lattices and the expected-accuracy sequence objective.

A lattice is a time-synchronous acyclic graph: every arc spans exactly one
frame and carries a state id plus a language-model log score.  Paths from
the unique start node (time 0) to any node at the final frame are the
hypothesis space; a path's posterior is the softmax of its total score,
where each arc contributes ``acoustic_scale * log_posterior + lm_score``.

The sequence risk minimized here is ``num_frames - expected accuracy``,
with accuracy counting frames whose arc state matches the reference state.
The forward-backward routine computes it with per-arc occupation
posteriors; ``brute_force_smbr`` is the independent enumeration oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import (CapacityError, ConsistencyError, FormatError, ParameterError,
                     ShapeError, StructureError)

# brute_force_smbr refuses lattices with more complete paths than this
ENUMERATION_LIMIT = 10_000


class Lattice:
    """Validated, topologically ordered lattice with CSR arc indexes.

    ``arcs`` is an iterable of (src_node, dst_node, state_id, lm_logscore).
    Node ids are renumbered internally so that ids ascend with time; all
    public arrays use the internal numbering.
    """

    def __init__(self, num_frames: int, arcs, num_nodes: int | None = None):
        if num_frames < 1:
            raise StructureError("a lattice needs at least one frame")
        arcs = list(arcs)
        if not arcs:
            raise StructureError("a lattice needs at least one arc")
        src = np.asarray([a[0] for a in arcs], dtype=np.int64)
        dst = np.asarray([a[1] for a in arcs], dtype=np.int64)
        state = np.asarray([a[2] for a in arcs], dtype=np.int64)
        lm = np.asarray([a[3] for a in arcs], dtype=np.float64)

        if src.min() < 0 or dst.min() < 0:
            raise StructureError("negative node id")
        if state.min() < 0:
            raise StructureError("negative state id")
        used = np.unique(np.concatenate([src, dst]))
        if used[0] != 0:
            raise StructureError("node 0 (the start node) is never referenced")
        if num_nodes is None:
            # compact sparse ids; node 0 stays the start
            if used.size != used[-1] + 1:
                lookup = np.full(int(used[-1]) + 1, -1, dtype=np.int64)
                lookup[used] = np.arange(used.size)
                src = lookup[src]
                dst = lookup[dst]
            n_nodes = int(used.size)
        else:
            if num_nodes < int(used[-1]) + 1:
                raise StructureError(
                    f"arcs reference node {int(used[-1])} but num_nodes={num_nodes}")
            n_nodes = int(num_nodes)

        node_time = self._infer_times(n_nodes, src, dst, num_frames)
        order = np.argsort(node_time, kind="stable")
        rank = np.empty(n_nodes, dtype=np.int64)
        rank[order] = np.arange(n_nodes)

        self.num_frames = int(num_frames)
        self.num_nodes = n_nodes
        self.node_time = node_time[order]
        self.arc_src = rank[src]
        self.arc_dst = rank[dst]
        self.arc_state = state
        self.arc_lm = lm
        self.arc_time = self.node_time[self.arc_src]

        self.in_ptr, self.in_arc = self._csr(self.arc_dst)
        self.out_ptr, self.out_arc = self._csr(self.arc_src)
        self._validate_connectivity()

    @property
    def num_arcs(self) -> int:
        return self.arc_src.shape[0]

    @staticmethod
    def _infer_times(n_nodes, src, dst, num_frames):
        # propagate time[dst] = time[src] + 1 from node 0 at time 0
        time = np.full(n_nodes, -1, dtype=np.int64)
        time[0] = 0
        out = [[] for _ in range(n_nodes)]
        for a in range(src.shape[0]):
            out[src[a]].append(dst[a])
        frontier = [0]
        while frontier:
            nxt = []
            for n in frontier:
                if not out[n]:
                    continue
                t = time[n] + 1
                if t > num_frames:
                    raise StructureError(f"node {n} has arcs beyond the last frame")
                for d in out[n]:
                    if time[d] == -1:
                        time[d] = t
                        nxt.append(d)
                    elif time[d] != t:
                        raise StructureError(
                            f"node {d} is reached at times {time[d]} and {t}; "
                            "arcs must each span exactly one frame")
            frontier = nxt
        if np.count_nonzero(time == 0) != 1:
            raise StructureError("exactly one start node (time 0) is required")
        if np.any(time == -1):
            orphan = int(np.argmax(time == -1))
            raise StructureError(f"node {orphan} is unreachable from the start node")
        return time

    def _csr(self, keys):
        order = np.argsort(keys, kind="stable").astype(np.int64)
        ptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.add.at(ptr, keys + 1, 1)
        np.cumsum(ptr, out=ptr)
        return ptr, order

    def _validate_connectivity(self):
        # every node must reach some node at the final frame
        reaches_end = self.node_time == self.num_frames
        if not reaches_end.any():
            raise StructureError("no node at the final frame; no complete path exists")
        reaches_end = reaches_end.copy()
        for n in range(self.num_nodes - 1, -1, -1):
            if reaches_end[n]:
                continue
            lo, hi = self.out_ptr[n], self.out_ptr[n + 1]
            for a in self.out_arc[lo:hi]:
                if reaches_end[self.arc_dst[a]]:
                    reaches_end[n] = True
                    break
            if not reaches_end[n]:
                raise StructureError(f"node {n} cannot reach the final frame")

    def count_paths(self) -> int:
        """Number of complete start-to-end paths."""
        paths_to = np.zeros(self.num_nodes, dtype=np.int64)
        paths_to[0] = 1
        for n in range(1, self.num_nodes):
            lo, hi = self.in_ptr[n], self.in_ptr[n + 1]
            paths_to[n] = paths_to[self.arc_src[self.in_arc[lo:hi]]].sum()
        return int(paths_to[self.node_time == self.num_frames].sum())

    def enumerate_paths(self, limit: int = ENUMERATION_LIMIT) -> list[list[int]]:
        """All complete paths as arc-index lists; guarded by ``limit``."""
        total = self.count_paths()
        if total > limit:
            raise CapacityError(
                f"lattice has {total} complete paths, above the enumeration "
                f"limit of {limit}")
        paths: list[list[int]] = []
        # iterative DFS: (node, arcs taken so far)
        stack: list[tuple[int, list[int]]] = [(0, [])]
        while stack:
            node, taken = stack.pop()
            if self.node_time[node] == self.num_frames:
                paths.append(taken)
                continue
            lo, hi = self.out_ptr[node], self.out_ptr[node + 1]
            for a in reversed(self.out_arc[lo:hi]):
                stack.append((int(self.arc_dst[a]), taken + [int(a)]))
        return paths


@dataclass(frozen=True, eq=False)
class ReferencePath:
    """Ground-truth state id per frame."""
    states: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=np.int64))
        if self.states.ndim != 1:
            raise ShapeError("reference path must be a 1-D state sequence")

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class SmbrResult:
    expected_accuracy: float
    loss: float                     # num_frames - expected_accuracy
    d_log_posteriors: np.ndarray    # gradient of loss wrt per-frame log-posteriors


def _check_inputs(lattice: Lattice, reference: ReferencePath | None, log_posteriors,
                  acoustic_scale: float) -> np.ndarray:
    log_post = np.ascontiguousarray(log_posteriors, dtype=np.float64)
    if log_post.ndim != 2 or log_post.shape[0] != lattice.num_frames:
        raise ShapeError(
            f"log-posteriors shape {log_post.shape} does not match "
            f"{lattice.num_frames} frames")
    if lattice.arc_state.max() >= log_post.shape[1]:
        raise StructureError(
            f"arc state {int(lattice.arc_state.max())} outside the "
            f"{log_post.shape[1]}-state posterior matrix")
    if reference is not None and len(reference) != lattice.num_frames:
        raise ConsistencyError(
            f"reference has {len(reference)} frames, lattice has {lattice.num_frames}")
    if acoustic_scale < 0.0:
        raise ParameterError(f"acoustic scale must be non-negative, got {acoustic_scale}")
    return log_post


def _arc_weights(lattice: Lattice, log_post: np.ndarray, acoustic_scale: float):
    return acoustic_scale * log_post[lattice.arc_time, lattice.arc_state] + lattice.arc_lm


def path_score(lattice: Lattice, path, log_posteriors, acoustic_scale: float = 1.0) -> float:
    """Total score of one complete path given as a sequence of arc indexes."""
    log_post = _check_inputs(lattice, None, log_posteriors, acoustic_scale)
    path = np.asarray(path, dtype=np.int64)
    if path.ndim != 1 or path.shape[0] != lattice.num_frames:
        raise StructureError(
            f"a complete path has {lattice.num_frames} arcs, got {path.shape}")
    if path.min() < 0 or path.max() >= lattice.num_arcs:
        raise StructureError("path contains an arc index outside the lattice")
    if lattice.node_time[lattice.arc_src[path[0]]] != 0:
        raise StructureError("path does not begin at the start node")
    if np.any(lattice.arc_dst[path[:-1]] != lattice.arc_src[path[1:]]):
        raise StructureError("path arcs are not contiguous")
    weights = _arc_weights(lattice, log_post, acoustic_scale)
    return float(weights[path].sum())


def total_path_logscore(lattice: Lattice, log_posteriors, acoustic_scale: float = 1.0) -> float:
    """Log of the summed exp-scores of all complete paths (the normalizer)."""
    log_post = _check_inputs(lattice, None, log_posteriors, acoustic_scale)
    ref_dummy = ReferencePath(np.zeros(lattice.num_frames, dtype=np.int64))
    log_total, _, _, _ = _run_kernel(lattice, ref_dummy, log_post, acoustic_scale)
    return float(log_total)


def _run_kernel(lattice: Lattice, reference: ReferencePath, log_post, acoustic_scale):
    weights = _arc_weights(lattice, log_post, acoustic_scale)
    correct = (reference.states[lattice.arc_time] == lattice.arc_state).astype(np.float64)
    return backend.smbr_forward_backward(
        lattice.num_frames, log_post.shape[1], lattice.node_time,
        lattice.in_ptr, lattice.in_arc, lattice.out_ptr, lattice.out_arc,
        lattice.arc_src, lattice.arc_dst, lattice.arc_time, lattice.arc_state,
        weights, correct, float(acoustic_scale))


def smbr_forward_backward(lattice: Lattice, reference: ReferencePath,
                          log_posteriors, acoustic_scale: float = 1.0) -> SmbrResult:
    """Expected accuracy and its exact gradient via forward-backward."""
    log_post = _check_inputs(lattice, reference, log_posteriors, acoustic_scale)
    _, _, expected_acc, d_log_post = _run_kernel(
        lattice, reference, log_post, acoustic_scale)
    return SmbrResult(expected_accuracy=float(expected_acc),
                      loss=float(lattice.num_frames - expected_acc),
                      d_log_posteriors=d_log_post)


def brute_force_smbr(lattice: Lattice, reference: ReferencePath, log_posteriors,
                     acoustic_scale: float = 1.0, fd_step: float = 1e-6) -> SmbrResult:
    """Enumeration oracle: explicit path posteriors, finite-difference gradient.

    Independent of the forward-backward route; only usable on lattices
    within the enumeration limit.
    """
    log_post = _check_inputs(lattice, reference, log_posteriors, acoustic_scale)
    paths = lattice.enumerate_paths()
    num_frames, num_states = log_post.shape

    arc_idx = np.asarray(paths, dtype=np.int64)            # paths x frames
    states = lattice.arc_state[arc_idx]
    lm_total = lattice.arc_lm[arc_idx].sum(axis=1)
    accuracy = (states == reference.states).sum(axis=1).astype(np.float64)
    frame_of = lattice.arc_time[arc_idx]

    def expected(lp):
        scores = acoustic_scale * lp[frame_of, states].sum(axis=1) + lm_total
        scores = scores - scores.max()
        post = np.exp(scores)
        post /= post.sum()
        return float((post * accuracy).sum())

    expected_acc = expected(log_post)
    d_log_post = np.zeros_like(log_post)
    for t in range(num_frames):
        for s in range(num_states):
            bump = np.zeros_like(log_post)
            bump[t, s] = fd_step
            plus = expected(log_post + bump)
            minus = expected(log_post - bump)
            # loss = num_frames - expected accuracy
            d_log_post[t, s] = -(plus - minus) / (2.0 * fd_step)
    return SmbrResult(expected_accuracy=expected_acc,
                      loss=float(num_frames - expected_acc),
                      d_log_posteriors=d_log_post)


def regularized_sequence_loss(smbr: SmbrResult, frame_loss, posteriors,
                              smoothing: float, mode: str,
                              temperature: float = 1.0):
    """Sequence risk plus ``smoothing`` times a frame-level loss.

    ``mode`` says which frame loss is being blended in ("ce_smoothed" or
    "kl_smoothed").  Returns ``(value, d_logits)`` with the sequence
    gradient chained through the log-softmax Jacobian and added to the
    frame-loss gradient.
    """
    if mode not in ("ce_smoothed", "kl_smoothed"):
        raise ParameterError(f"unknown smoothing mode {mode!r}")
    if smoothing < 0.0:
        raise ParameterError(f"smoothing must be non-negative, got {smoothing}")
    y = np.ascontiguousarray(posteriors, dtype=np.float64)
    g_lp = smbr.d_log_posteriors
    if frame_loss.d_logits.shape != g_lp.shape or y.shape != g_lp.shape:
        raise ConsistencyError(
            f"frame loss covers {frame_loss.d_logits.shape}, sequence loss "
            f"covers {g_lp.shape}")
    row = g_lp.sum(axis=1, keepdims=True)
    d_logits = (g_lp - y * row) / temperature + smoothing * frame_loss.d_logits
    value = smbr.loss + smoothing * frame_loss.value
    return float(value), d_logits


# ---------------------------------------------------------------------------
# text format: "LAT <num_frames> <num_nodes>", one "ARC <from> <to> <state>
# <lm_logscore>" per arc, and a trailing "REF <s_0> ... <s_{T-1}>" line.
# ---------------------------------------------------------------------------

def write_lattice(path, lattice: Lattice, reference: ReferencePath) -> None:
    if len(reference) != lattice.num_frames:
        raise ConsistencyError("reference length does not match lattice frames")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"LAT {lattice.num_frames} {lattice.num_nodes}\n")
        for a in range(lattice.num_arcs):
            fh.write(f"ARC {int(lattice.arc_src[a])} {int(lattice.arc_dst[a])} "
                     f"{int(lattice.arc_state[a])} {float(lattice.arc_lm[a])!r}\n")
        fh.write("REF " + " ".join(str(s) for s in reference.states) + "\n")


def read_lattice(path) -> tuple[Lattice, ReferencePath]:
    header = None
    arcs = []
    ref = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            tag = fields[0]
            try:
                if tag == "LAT":
                    if header is not None:
                        raise FormatError(f"{path}:{lineno}: duplicate LAT header")
                    header = (int(fields[1]), int(fields[2]))
                elif tag == "ARC":
                    arcs.append((int(fields[1]), int(fields[2]), int(fields[3]),
                                 float(fields[4])))
                elif tag == "REF":
                    ref = [int(s) for s in fields[1:]]
                else:
                    raise FormatError(f"{path}:{lineno}: unknown record {tag!r}")
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path}:{lineno}: malformed {tag} line: {exc}") from exc
    if header is None:
        raise FormatError(f"{path}: missing LAT header")
    if ref is None:
        raise FormatError(f"{path}: missing REF line")
    num_frames, num_nodes = header
    lattice = Lattice(num_frames, arcs, num_nodes=num_nodes)
    if len(ref) != num_frames:
        raise FormatError(
            f"{path}: REF has {len(ref)} states for {num_frames} frames")
    return lattice, ReferencePath(ref)
