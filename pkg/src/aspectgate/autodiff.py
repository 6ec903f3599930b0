"""Minimal reverse-mode differentiation over small dense arrays.

The engine keeps a closed catalog of primitives: exactly what a gated
bidirectional GRU classifier with a focal objective needs, nothing more.
Every primitive carries a hand-written backward rule, and ``grad_check``
validates analytic gradients against central finite differences, so the
catalog stays small enough to test exhaustively.

Values are plain numpy arrays.  The graph is precision-generic: training
runs in float32, gradient checking in float64 (finite differences are not
trustworthy at single precision).
"""

from __future__ import annotations

import gc
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

PROB_CLAMP = 1e-12  # floor applied to probabilities before log


@contextmanager
def gc_paused():
    """Temporarily disable the cycle collector.

    Graph construction allocates thousands of small objects that form no
    reference cycles, so generation-0 scans only add overhead; plain
    reference counting reclaims every node.
    """
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


class ShapeError(ValueError):
    """Operands do not conform to a primitive's shape rules."""


class Tensor:
    """A node in the computation graph: forward values plus a gradient slot.

    ``grad`` is lazily allocated; ``None`` means "all zeros".  ``parents``
    are the nodes the producing primitive consumed, kept only for the
    backward traversal.
    """

    __slots__ = ("values", "grad", "parents", "_backward")

    def __init__(self, values, parents=(), backward=None):
        self.values = values if type(values) is np.ndarray else np.asarray(values)
        self.grad = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _require(cond, primitive, detail):
    if not cond:
        raise ShapeError(f"{primitive}: {detail}")


# ---------------------------------------------------------------------------
# Primitive catalog
# ---------------------------------------------------------------------------

def matvec(w, x):
    """Matrix-vector product ``w @ x``."""
    wv, xv = w.values, x.values
    if wv.ndim != 2 or xv.ndim != 1 or wv.shape[1] != xv.shape[0]:
        raise ShapeError(f"matvec: expected matrix @ conforming vector, "
                         f"got shapes {wv.shape} and {xv.shape}")
    out = Tensor(wv @ xv, parents=(w, x))

    def _backward(g):
        w.accumulate(np.outer(g, xv))
        x.accumulate(wv.T @ g)

    out._backward = _backward
    return out


def add(a, b):
    """Element-wise sum of two same-shaped arrays."""
    av, bv = a.values, b.values
    if av.shape != bv.shape:
        raise ShapeError(f"add: shape mismatch: {av.shape} vs {bv.shape}")
    out = Tensor(av + bv, parents=(a, b))

    def _backward(g):
        a.accumulate(g)
        b.accumulate(g)

    out._backward = _backward
    return out


def mul(a, b):
    """Element-wise (Hadamard) product."""
    av, bv = a.values, b.values
    if av.shape != bv.shape:
        raise ShapeError(f"mul: shape mismatch: {av.shape} vs {bv.shape}")
    out = Tensor(av * bv, parents=(a, b))

    def _backward(g):
        a.accumulate(g * bv)
        b.accumulate(g * av)

    out._backward = _backward
    return out


def _sigmoid_values(v):
    # exp(-v) overflows only for v < -709; clip lazily on that rare path
    # (the v > 709 side underflows harmlessly to 0, giving exactly 1.0)
    if v.size and v.min() < -500.0:
        v = np.clip(v, -500.0, None)
    return 1.0 / (1.0 + np.exp(-v))


def sigmoid(x):
    """Logistic function, element-wise."""
    s = _sigmoid_values(x.values)
    out = Tensor(s, parents=(x,))

    def _backward(g):
        x.accumulate(g * s * (1.0 - s))

    out._backward = _backward
    return out


def tanh(x):
    """Hyperbolic tangent, element-wise."""
    t = np.tanh(x.values)
    out = Tensor(t, parents=(x,))

    def _backward(g):
        x.accumulate(g * (1.0 - t * t))

    out._backward = _backward
    return out


def concat(*xs):
    """Concatenate vectors into one longer vector."""
    _require(len(xs) >= 1, "concat", "needs at least one input")
    sizes = []
    for x in xs:
        if x.values.ndim != 1:
            raise ShapeError(f"concat: expected vectors, got shape {x.values.shape}")
        sizes.append(x.values.shape[0])
    out = Tensor(np.concatenate([x.values for x in xs]), parents=tuple(xs))

    def _backward(g):
        off = 0
        for x, n in zip(xs, sizes):
            x.accumulate(g[off:off + n])
            off += n

    out._backward = _backward
    return out


def stack(*xs):
    """Stack same-length vectors into a matrix, one row per input."""
    _require(len(xs) >= 1, "stack", "needs at least one input")
    d = xs[0].values.shape
    for x in xs:
        if x.values.ndim != 1 or x.values.shape != d:
            raise ShapeError(f"stack: expected vectors of shape {d}, got {x.values.shape}")
    out = Tensor(np.stack([x.values for x in xs]), parents=tuple(xs))

    def _backward(g):
        for i, x in enumerate(xs):
            x.accumulate(g[i])

    out._backward = _backward
    return out


def row(x, index):
    """Extract one row of a matrix (used for embedding lookups and unstacking)."""
    xv = x.values
    if xv.ndim != 2 or not 0 <= index < xv.shape[0]:
        raise ShapeError(f"row: row {index} invalid for shape {xv.shape}")
    out = Tensor(xv[index].copy(), parents=(x,))

    def _backward(g):
        # scatter into a single row without materialising a full-size update
        if x.grad is None:
            x.grad = np.zeros_like(x.values)
        x.grad[index] += g

    out._backward = _backward
    return out


def softmax(x):
    """Softmax along axis 0, computed with max-subtraction for stability.

    For a vector this normalises its entries; for a matrix it normalises
    each column across rows (used to let gate vectors compete per feature).
    """
    _require(x.values.ndim in (1, 2), "softmax", f"expected 1-D or 2-D, got {x.shape}")
    v = x.values
    shifted = v - v.max(axis=0, keepdims=v.ndim == 2)
    e = np.exp(shifted)
    s = e / e.sum(axis=0, keepdims=v.ndim == 2)
    out = Tensor(s, parents=(x,))

    def _backward(g):
        dot = (g * s).sum(axis=0, keepdims=v.ndim == 2)
        x.accumulate(s * (g - dot))

    out._backward = _backward
    return out


def maxpool(x):
    """Column-wise maximum of a matrix (max over time of stacked states)."""
    _require(x.values.ndim == 2, "maxpool", f"expected a matrix, got shape {x.shape}")
    idx = np.argmax(x.values, axis=0)  # first maximum wins, deterministically
    cols = np.arange(x.shape[1])
    out = Tensor(x.values[idx, cols], parents=(x,))

    def _backward(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.values)
        x.grad[idx, cols] += g

    out._backward = _backward
    return out


def focal_term(p, target, gamma):
    """Focal loss of one probability vector against a one-hot target.

    Computes ``-sum_i y_i (1 - p_i)^gamma log(max(p_i, clamp))`` as a scalar
    node.  The gradient flows through the modulating factor as well as the
    log; inside the clamp region the log is constant, so only the factor
    contributes.
    """
    _require(p.values.ndim == 1, "focal_term", f"expected a vector, got shape {p.shape}")
    y = np.asarray(target, dtype=p.dtype)
    _require(y.shape == p.shape, "focal_term",
             f"target shape {y.shape} does not match {p.shape}")
    if not (np.isfinite(gamma) and gamma >= 0):
        raise ValueError(f"focal_term: gamma must be finite and >= 0, got {gamma}")

    pv = p.values
    q = np.maximum(pv, PROB_CLAMP)
    logq = np.log(q)
    omp = 1.0 - pv
    mod = omp ** gamma  # 0**0 == 1, so gamma=0 reduces to cross-entropy exactly
    out = Tensor(np.asarray(-(y * mod * logq).sum()), parents=(p,))

    def _backward(g):
        first = np.zeros_like(pv)
        if gamma != 0.0:
            safe = omp > 0
            first[safe] = gamma * omp[safe] ** (gamma - 1.0) * logq[safe]
        second = np.where(pv > PROB_CLAMP, mod / q, 0.0)
        p.accumulate(float(g) * y * (first - second))

    out._backward = _backward
    return out


PRIMITIVES = {
    "matvec": matvec,
    "add": add,
    "mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "concat": concat,
    "stack": stack,
    "row": row,
    "softmax": softmax,
    "maxpool": maxpool,
    "focal_term": focal_term,
}


def apply_primitive(kind, inputs, **kwargs):
    """Dispatch into the closed primitive catalog by name."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}; catalog: {sorted(PRIMITIVES)}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# Compositions (not primitives, just common graph idioms)
# ---------------------------------------------------------------------------

def constant(values, dtype=None):
    """Leaf node holding non-trainable values."""
    return Tensor(np.asarray(values, dtype=dtype))


_CONST_ARRAYS = {}


def _const_like(values, fill):
    # constant leaves recur with the same few shapes; share readonly arrays
    key = (values.shape, values.dtype.str, fill)
    arr = _CONST_ARRAYS.get(key)
    if arr is None:
        arr = np.full(values.shape, fill, dtype=values.dtype)
        arr.setflags(write=False)
        _CONST_ARRAYS[key] = arr
    return Tensor(arr)


def one_minus(x):
    """``1 - x`` built from constant leaves, mul and add."""
    return add(_const_like(x.values, 1.0), mul(x, _const_like(x.values, -1.0)))


def scale(x, c):
    """Multiply by a Python scalar via a constant leaf."""
    return mul(x, _const_like(x.values, float(c)))


def vsum(x):
    """Sum of a vector's elements as a size-1 node (matvec against ones)."""
    ones = Tensor(np.ones((1, x.shape[0]), dtype=x.dtype))
    return matvec(ones, x)


# ---------------------------------------------------------------------------
# Backward traversal
# ---------------------------------------------------------------------------

def _topo_order(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(output):
    """Populate ``grad`` on every node reachable from a scalar output.

    Each node's backward rule runs exactly once, in reverse topological
    order, so shared subgraphs accumulate their contributions correctly.
    """
    if output.values.size != 1:
        raise ValueError(
            f"backward requires a scalar output, got shape {output.values.shape}")
    order = _topo_order(output)
    output.grad = np.ones_like(output.values)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class BlockCheck:
    name: str
    max_rel_err: float
    ok: bool
    note: str = ""


@dataclass
class GradCheckReport:
    tolerance: float
    blocks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(b.ok for b in self.blocks)

    @property
    def max_rel_err(self):
        return max((b.max_rel_err for b in self.blocks), default=0.0)

    def failures(self):
        return [b for b in self.blocks if not b.ok]

    def __str__(self):
        lines = [f"{'block':<24} {'max_rel_err':>14}  status"]
        for b in self.blocks:
            status = "ok" if b.ok else f"FAIL {b.note}".rstrip()
            lines.append(f"{b.name:<24} {b.max_rel_err:>14.3e}  {status}")
        return "\n".join(lines)


def _named_blocks(params):
    if hasattr(params, "blocks"):
        return dict(params.blocks)
    return dict(params)


def grad_check(loss_fn, params, step=1e-5, tolerance=1e-4, block_names=None):
    """Compare analytic gradients with central finite differences.

    ``loss_fn`` rebuilds the loss graph from the current parameter values
    and returns a scalar node; the numeric side only ever calls it forward,
    keeping the two routes independent.  Reports, per parameter block, the
    max over entries of ``|analytic - numeric| / max(|analytic|, |numeric|,
    1e-8)``.  ``block_names`` restricts the (expensive) numeric sweep to a
    subset of blocks.
    """
    blocks = _named_blocks(params)
    if not 0 < step <= 1e-3:
        raise ValueError(f"step must be in (0, 1e-3], got {step}")
    for name, t in blocks.items():
        if t.dtype != np.float64:
            raise ValueError(
                f"grad_check requires float64 parameters, block {name!r} is {t.dtype}")
    if block_names is not None:
        missing = set(block_names) - set(blocks)
        if missing:
            raise ValueError(f"unknown parameter blocks: {sorted(missing)}")

    with gc_paused():
        for t in blocks.values():
            t.zero_grad()
        out = loss_fn()
        backward(out)
        analytic = {
            name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.values))
            for name, t in blocks.items()
        }

        report = GradCheckReport(tolerance=tolerance)
        for name in sorted(blocks if block_names is None else block_names):
            t = blocks[name]
            flat = t.values.reshape(-1)
            ana = analytic[name].reshape(-1)
            worst = 0.0
            note = ""
            ok = True
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = loss_fn().values.item()
                flat[i] = orig - step
                f_minus = loss_fn().values.item()
                flat[i] = orig
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    worst = np.inf
                    ok = False
                    note = "non-finite loss during perturbation"
                    break
                numeric = (f_plus - f_minus) / (2.0 * step)
                denom = max(abs(ana[i]), abs(numeric), 1e-8)
                worst = max(worst, abs(ana[i] - numeric) / denom)
            if ok:
                ok = worst < tolerance
            report.blocks.append(BlockCheck(name=name, max_rel_err=worst, ok=ok, note=note))
    return report
