"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Everything trainable in this package (the two encoders, the imitation policy
head) is built from the handful of primitives here: broadcast arithmetic,
matrix products, rectifier, reductions, a numerically stable log-sum-exp and
an epsilon-stabilized cosine similarity. Graphs are built eagerly by calling
operations on :class:`Tensor` values and differentiated with
:meth:`Tensor.backward`.

Plain ``numpy`` arrays flow through the same public helpers
(``cosine_similarity``, ``logsumexp``, ``mlp_apply``) without building a
graph, which is how frozen encoders are evaluated cheaply downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    EmptyInputError,
    GraphError,
    NumericalError,
    ShapeMismatchError,
)

COSINE_EPS = 1e-8


def as_array(x) -> np.ndarray:
    """Coerce input to a float64 ndarray."""
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node in the compute graph: a float64 array plus accumulated gradient.

    Leaf tensors (no parents) are parameters; interior nodes cache the
    forward value and know how to push gradients to their parents.
    """

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward: Callable[[], None] | None = None):
        self.value = as_array(value)
        if not parents and not np.all(np.isfinite(self.value)):
            raise NumericalError("leaf tensor contains non-finite values")
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    # ---- graph construction -------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(as_array(x))

    def __add__(self, other):
        other = Tensor._lift(other)
        out = Tensor(self.value + other.value, (self, other))

        def backward():
            self.grad += _unbroadcast(out.grad, self.value.shape)
            other.grad += _unbroadcast(out.grad, other.value.shape)

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.value, (self,))

        def backward():
            self.grad -= out.grad

        out._backward = backward
        return out

    def __sub__(self, other):
        other = Tensor._lift(other)
        out = Tensor(self.value - other.value, (self, other))

        def backward():
            self.grad += _unbroadcast(out.grad, self.value.shape)
            other.grad -= _unbroadcast(out.grad, other.value.shape)

        out._backward = backward
        return out

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        other = Tensor._lift(other)
        out = Tensor(self.value * other.value, (self, other))

        def backward():
            self.grad += _unbroadcast(out.grad * other.value, self.value.shape)
            other.grad += _unbroadcast(out.grad * self.value, other.value.shape)

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        out = Tensor(self.value / other.value, (self, other))

        def backward():
            self.grad += _unbroadcast(out.grad / other.value, self.value.shape)
            other.grad -= _unbroadcast(
                out.grad * self.value / (other.value * other.value), other.value.shape
            )

        out._backward = backward
        return out

    def __matmul__(self, other):
        other = Tensor._lift(other)
        out = Tensor(self.value @ other.value, (self, other))

        def backward():
            g = out.grad
            a, b = self.value, other.value
            if a.ndim == 1 and b.ndim == 2:
                self.grad += g @ b.T
                other.grad += np.outer(a, g)
            elif a.ndim == 2 and b.ndim == 1:
                self.grad += np.outer(g, b)
                other.grad += a.T @ g
            else:
                self.grad += g @ b.T
                other.grad += a.T @ g

        out._backward = backward
        return out

    @property
    def T(self):
        out = Tensor(self.value.T, (self,))

        def backward():
            self.grad += out.grad.T

        out._backward = backward
        return out

    def relu(self):
        out = Tensor(np.maximum(self.value, 0.0), (self,))

        def backward():
            self.grad += out.grad * (self.value > 0)

        out._backward = backward
        return out

    def exp(self):
        out = Tensor(np.exp(self.value), (self,))

        def backward():
            self.grad += out.grad * out.value

        out._backward = backward
        return out

    def log(self):
        out = Tensor(np.log(self.value), (self,))

        def backward():
            self.grad += out.grad / self.value

        out._backward = backward
        return out

    def sqrt(self):
        out = Tensor(np.sqrt(self.value), (self,))

        def backward():
            self.grad += out.grad / (2.0 * out.value)

        out._backward = backward
        return out

    def maximum(self, floor: float):
        """Elementwise max against a constant floor."""
        out = Tensor(np.maximum(self.value, floor), (self,))

        def backward():
            self.grad += out.grad * (self.value > floor)

        out._backward = backward
        return out

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.value.sum(axis=axis, keepdims=keepdims), (self,))

        def backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.value.shape)

        out._backward = backward
        return out

    def reshape(self, shape):
        out = Tensor(self.value.reshape(shape), (self,))

        def backward():
            self.grad += out.grad.reshape(self.value.shape)

        out._backward = backward
        return out

    def slice1d(self, start: int, stop: int):
        """Contiguous slice of a rank-1 tensor."""
        if self.value.ndim != 1:
            raise ShapeMismatchError(f"slice1d requires rank-1 input, got shape {self.value.shape}")
        out = Tensor(self.value[start:stop], (self,))

        def backward():
            self.grad[start:stop] += out.grad

        out._backward = backward
        return out

    def take_rows(self, indices):
        """Gather rows of a rank-2 tensor; duplicate indices accumulate gradient."""
        idx = np.asarray(indices, dtype=np.int64)
        out = Tensor(self.value[idx], (self,))

        def backward():
            np.add.at(self.grad, idx, out.grad)

        out._backward = backward
        return out

    def diagonal(self):
        n = min(self.value.shape)
        out = Tensor(np.diagonal(self.value).copy(), (self,))

        def backward():
            self.grad[np.arange(n), np.arange(n)] += out.grad

        out._backward = backward
        return out

    # ---- differentiation ----------------------------------------------------

    def _topo_order(self):
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return order

    def backward(self):
        """Accumulate d(self)/d(node) into ``grad`` for every reachable node.

        The root must be scalar-valued. Gradients on reachable nodes are
        zero-initialized first, so repeated passes do not leak across calls.
        """
        if self.value.ndim != 0:
            raise GraphError(f"backward requires a scalar root, got shape {self.value.shape}")
        order = self._topo_order()
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, leaf={not self._parents})"


def gradients(root: Tensor, leaves: Sequence[Tensor]) -> list[np.ndarray]:
    """Run backward from a scalar root and return a gradient per leaf."""
    root.backward()
    return [leaf.grad.copy() for leaf in leaves]


# ---- similarity and log-sum-exp ----------------------------------------------


def cosine_similarity(a, b, eps: float = COSINE_EPS):
    """Cosine similarity of two equal-length rank-1 vectors.

    Norms are floored at ``eps`` so degenerate (near-zero) vectors yield a
    similarity of ~0 instead of dividing by zero. Accepts either two plain
    arrays (returns float) or Tensors (returns a differentiable Tensor).
    """
    a_val = a.value if isinstance(a, Tensor) else as_array(a)
    b_val = b.value if isinstance(b, Tensor) else as_array(b)
    if a_val.ndim != 1 or b_val.ndim != 1 or a_val.shape != b_val.shape:
        raise ShapeMismatchError(
            f"cosine_similarity requires equal-length rank-1 inputs, got {a_val.shape} and {b_val.shape}"
        )
    if isinstance(a, Tensor) or isinstance(b, Tensor):
        at, bt = Tensor._lift(a), Tensor._lift(b)
        # flooring happens inside the sqrt so the graph never hits sqrt(0)
        na = (at * at).sum().maximum(eps * eps).sqrt()
        nb = (bt * bt).sum().maximum(eps * eps).sqrt()
        return (at * bt).sum() / (na * nb)
    na = max(float(np.linalg.norm(a_val)), eps)
    nb = max(float(np.linalg.norm(b_val)), eps)
    return float(np.dot(a_val, b_val)) / (na * nb)


def normalize_rows(m: "Tensor | np.ndarray", eps: float = COSINE_EPS):
    """Row-normalize a rank-2 array with the same eps floor as cosine_similarity."""
    if isinstance(m, Tensor):
        sq = (m * m).sum(axis=1, keepdims=True)
        return m / sq.maximum(eps * eps).sqrt()
    m = as_array(m)
    norms = np.sqrt(np.maximum((m * m).sum(axis=1, keepdims=True), eps * eps))
    return m / norms


def cosine_matrix(a, b, eps: float = COSINE_EPS):
    """All-pairs cosine similarities between the rows of ``a`` and of ``b``."""
    an, bn = normalize_rows(a, eps), normalize_rows(b, eps)
    if isinstance(an, Tensor) or isinstance(bn, Tensor):
        return Tensor._lift(an) @ Tensor._lift(bn).T
    return an @ bn.T


def logsumexp(xs):
    """Stable log(sum(exp(xs))) of a non-empty sequence of scalars.

    Shift-invariant by construction: the max is subtracted before
    exponentiation and added back outside.
    """
    if isinstance(xs, Tensor):
        if xs.value.size == 0:
            raise EmptyInputError("logsumexp of an empty sequence")
        m = float(xs.value.max())
        return (xs - m).exp().sum().log() + m
    xs = as_array(xs)
    if xs.size == 0:
        raise EmptyInputError("logsumexp of an empty sequence")
    m = float(xs.max())
    return m + float(np.log(np.exp(xs - m).sum()))


def logsumexp_axis(t: Tensor, axis: int) -> Tensor:
    """Log-sum-exp of a rank-2 Tensor along one axis, returning a rank-1 Tensor."""
    m = t.value.max(axis=axis, keepdims=True)
    shifted = (t - m).exp().sum(axis=axis).log()
    return shifted + np.squeeze(m, axis=axis)


# ---- multilayer perceptron -----------------------------------------------------


@dataclass
class MlpParams:
    """Dense MLP parameters: rectifier between affine layers, affine output.

    Weight matrices are stored (out, in). Entries are Tensor leaves so the
    same container serves training (Tensor inputs build a graph into them)
    and frozen evaluation (array inputs read .value and skip the graph).
    """

    widths: list[int]
    weights: list[Tensor]
    biases: list[Tensor]

    def leaves(self) -> list[Tensor]:
        return [*self.weights, *self.biases]

    def arrays(self) -> list[np.ndarray]:
        return [leaf.value.copy() for leaf in self.leaves()]


def init_mlp(widths: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Zero-mean weights scaled by 1/sqrt(fan_in); zero biases."""
    widths = [int(w) for w in widths]
    if any(w <= 0 for w in widths) or len(widths) < 2:
        raise ShapeMismatchError(f"invalid layer widths {widths}")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(Tensor(rng.normal(0.0, 1.0, (fan_out, fan_in)) / np.sqrt(fan_in)))
        biases.append(Tensor(np.zeros(fan_out)))
    return MlpParams(widths=widths, weights=weights, biases=biases)


def mlp_apply(params: MlpParams, x):
    """Apply the MLP to a single vector or a (batch, in) matrix.

    Tensor input builds a differentiable graph through the parameters;
    ndarray input is a pure numpy forward pass that cannot backpropagate,
    which is what "frozen" consumers rely on.
    """
    n_layers = len(params.weights)
    tensor_mode = isinstance(x, Tensor)
    h = x if tensor_mode else as_array(x)
    val = h.value if tensor_mode else h
    if val.ndim not in (1, 2) or val.shape[-1] != params.widths[0]:
        raise ShapeMismatchError(
            f"mlp input shape {val.shape} does not match first layer width {params.widths[0]}"
        )
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        if tensor_mode:
            h = h @ w.T + b
            if i < n_layers - 1:
                h = h.relu()
        else:
            h = h @ w.value.T + b.value
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
    return h


# ---- gradient checking ----------------------------------------------------------


def finite_difference_check(
    f: Callable[[Tensor], Tensor], theta, step: float = 1e-6
) -> float:
    """Compare the analytic gradient of ``f`` at ``theta`` against central differences.

    ``f`` takes a leaf Tensor and must rebuild its graph on every call.
    Returns the worst per-coordinate discrepancy relative to the gradient's
    overall magnitude (floored at 1e-8), so exactly-zero gradients compare
    clean and near-zero coordinates are judged against the gradient scale
    rather than their own vanishing magnitude.
    """
    theta = as_array(theta)
    if step <= 0:
        raise ValueError("step must be positive")
    leaf = Tensor(theta.copy())
    out = f(leaf)
    if not isinstance(out, Tensor):
        raise GraphError("f must return a Tensor for the analytic gradient")
    if not np.isfinite(out.value):
        raise NumericalError("f(theta) is not finite")
    out.backward()
    analytic = leaf.grad.copy()

    numeric = np.zeros_like(theta)
    flat = theta.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(Tensor(theta.copy()))
        flat[i] = orig - step
        lo = f(Tensor(theta.copy()))
        flat[i] = orig
        hi_v, lo_v = float(hi.value), float(lo.value)
        if not (np.isfinite(hi_v) and np.isfinite(lo_v)):
            raise NumericalError(f"non-finite value during finite differences at coordinate {i}")
        num_flat[i] = (hi_v - lo_v) / (2.0 * step)

    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)), 1e-8)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale
