"""Recorded computation graph over unrolled solver iterations.

A :class:`Tape` is a Wengert list: recording appends :class:`TapeNode`
entries in execution order; the backward sweep walks them in exact reverse
order, accumulating cotangents per variable id.  Every node owns the buffers
its backward needs (``saved``) and reports their exact byte size, which is
what the per-iteration memory accounting measures.

Variables are plain integer ids; array values live in the nodes' saved
buffers only when a backward formula needs them.  Scalars (the
regularization weight and quantities derived from it) are ordinary floats
and count 8 bytes each when saved.
"""

from dataclasses import dataclass

import numpy as np


def _bytes_of(saved):
    total = 0
    for s in saved:
        total += s.nbytes if isinstance(s, np.ndarray) else 8
    return total


class TapeNode:
    """One recorded operation: op kind, dataflow ids, saved buffers, backward.

    ``backward_fn(node, out_bar)`` maps the output cotangent to a tuple of
    input cotangents aligned with ``inputs`` (entries may be None when an
    input receives no contribution).  It must be linear in the cotangent.
    """

    __slots__ = ("op_kind", "inputs", "outputs", "saved", "attrs",
                 "backward_fn", "saved_bytes")

    def __init__(self, op_kind, inputs, outputs, saved, backward_fn, attrs=None):
        self.op_kind = op_kind
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        self.saved = tuple(saved)
        self.attrs = attrs or {}
        self.backward_fn = backward_fn
        self.saved_bytes = _bytes_of(self.saved)

    def backward(self, out_bar):
        return self.backward_fn(self, out_bar)


class Tape:
    """Append-only node list plus variable shape registry.

    ``save_dtype`` narrows saved array buffers (float32 trades gradient
    precision for half the tape size); forward values are always float64.
    """

    def __init__(self, save_dtype=np.float64):
        self.nodes = []
        self.save_dtype = np.dtype(save_dtype)
        self._shapes = {}
        self._next_id = 0
        self._iter_marks = []
        self.lambda_id = None
        self.output_id = None

    def new_var(self, shape):
        vid = self._next_id
        self._next_id += 1
        self._shapes[vid] = shape
        return vid

    def leaf(self, shape):
        """Register an input variable (no node is recorded for it)."""
        return self.new_var(shape)

    def begin_iteration(self):
        self._iter_marks.append(len(self.nodes))

    def add_node(self, op_kind, inputs, out_shape, saved, backward_fn, attrs=None):
        if self.save_dtype != np.float64:
            saved = tuple(s.astype(self.save_dtype) if isinstance(s, np.ndarray)
                          else s for s in saved)
        out_id = self.new_var(out_shape)
        node = TapeNode(op_kind, inputs, (out_id,), saved, backward_fn, attrs)
        self.nodes.append(node)
        return out_id

    @property
    def n_iterations(self):
        return len(self._iter_marks)

    @property
    def total_saved_bytes(self):
        return sum(n.saved_bytes for n in self.nodes)

    @property
    def preamble_bytes(self):
        """Saved bytes of nodes recorded before the first iteration mark."""
        first = self._iter_marks[0] if self._iter_marks else len(self.nodes)
        return sum(n.saved_bytes for n in self.nodes[:first])

    @property
    def per_iteration_bytes(self):
        marks = self._iter_marks + [len(self.nodes)]
        return [sum(n.saved_bytes for n in self.nodes[marks[i]:marks[i + 1]])
                for i in range(len(self._iter_marks))]

    def _zero(self, vid):
        shape = self._shapes[vid]
        return 0.0 if shape == () else np.zeros(shape, dtype=np.float64)

    def backward(self, seeds, visit_log=None):
        """Reverse sweep from output cotangents; returns all accumulated bars.

        ``seeds`` maps variable ids to cotangents.  Nodes are visited in
        exact reverse recording order; ``visit_log``, if given, collects the
        node indices in visit order (used by the replay-order tests).
        """
        bars = dict(seeds)
        for idx in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[idx]
            if visit_log is not None:
                visit_log.append(idx)
            out_id = node.outputs[0]
            out_bar = bars.get(out_id)
            if out_bar is None:
                out_bar = self._zero(out_id)
            in_bars = node.backward(out_bar)
            for vid, bar in zip(node.inputs, in_bars):
                if bar is None:
                    continue
                if vid in bars:
                    bars[vid] = bars[vid] + bar
                else:
                    bars[vid] = bar
        return bars


@dataclass
class MemoryReport:
    """Byte accounting of one tape: totals, per-iteration blocks, op split."""

    total_bytes: int
    preamble_bytes: int
    per_iteration_bytes: list
    by_kind: dict
    n_nodes: int

    def format(self):
        lines = [f"nodes: {self.n_nodes}", f"total saved bytes: {self.total_bytes}"]
        if self.per_iteration_bytes:
            per = self.per_iteration_bytes[0]
            lines.append(f"iterations: {len(self.per_iteration_bytes)}"
                         f" x {per} bytes (preamble {self.preamble_bytes})")
        for kind in sorted(self.by_kind):
            lines.append(f"  {kind:<16s} {self.by_kind[kind]:>12d}")
        return "\n".join(lines)


def memory_report(tape):
    """Summarize a tape's saved-buffer bytes (per kind, per iteration)."""
    if not tape.nodes:
        raise ValueError("cannot report on an empty tape")
    by_kind = {}
    for n in tape.nodes:
        by_kind[n.op_kind] = by_kind.get(n.op_kind, 0) + n.saved_bytes
    return MemoryReport(
        total_bytes=tape.total_saved_bytes,
        preamble_bytes=tape.preamble_bytes,
        per_iteration_bytes=tape.per_iteration_bytes,
        by_kind=by_kind,
        n_nodes=len(tape.nodes),
    )
