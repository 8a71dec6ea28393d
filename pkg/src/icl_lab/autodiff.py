"""Minimal reverse-mode differentiation over dense float64 arrays.

A Tape records tensors in creation order; ``backward`` sweeps it once in
reverse, accumulating gradients additively into shared inputs.  Shapes
follow numpy broadcasting for the supported ops (notably adding a row
vector to a matrix).  Tapes are single use.

GELU uses the exact Gaussian CDF via the error function; softmax always
subtracts the row maximum.
"""

import numpy as np
from scipy.special import erf

from .errors import ShapeError, TapeError

# extra invariant checking (softmax row sums); enabled by tests
debug_checks = False

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gauss_cdf(x):
    return 0.5 * (1.0 + erf(x * _INV_SQRT2))


def _gauss_pdf(x):
    return _INV_SQRT2PI * np.exp(-0.5 * x * x)


class Tape:
    """Creation-order record of one forward pass."""

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def tensor(self, data, requires_grad=False) -> "Tensor":
        return Tensor(np.asarray(data, dtype=np.float64), self, requires_grad)

    def param(self, data) -> "Tensor":
        return self.tensor(data, requires_grad=True)


class Tensor:
    """Dense array node; ``grad`` is populated by the backward sweep."""

    __slots__ = ("data", "grad", "tape", "requires_grad", "parents", "backward_fn")

    def __init__(self, data, tape: Tape, requires_grad=False,
                 parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.tape = tape
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.parents = parents
        self.backward_fn = backward_fn
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.data.shape


def _node(data, parents, backward_fn) -> Tensor:
    tape = parents[0].tape
    if any(p.tape is not tape for p in parents):
        raise TapeError("operands live on different tapes")
    return Tensor(data, tape, parents=tuple(parents), backward_fn=backward_fn)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, grad: np.ndarray):
    if not t.requires_grad:
        return
    grad = _unbroadcast(np.asarray(grad), t.data.shape)
    if t.grad is None:
        t.grad = grad.copy()
    else:
        t.grad += grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul mismatch {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(grad):
        bt = np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else b.data
        at = np.swapaxes(a.data, -1, -2) if a.data.ndim > 1 else a.data
        _accumulate(a, grad @ bt)
        _accumulate(b, at @ grad)

    return _node(out_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add mismatch {a.shape} + {b.shape}") from exc

    def backward(grad):
        _accumulate(a, grad)
        _accumulate(b, grad)

    return _node(out_data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def backward(grad):
        _accumulate(a, grad)
        _accumulate(b, -grad)

    return _node(out_data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim < 2:
        raise ShapeError("transpose needs at least two axes")
    out_data = np.swapaxes(a.data, -1, -2)

    def backward(grad):
        _accumulate(a, np.swapaxes(grad, -1, -2))

    return _node(out_data, (a,), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out_data = a.data * c

    def backward(grad):
        _accumulate(a, grad * c)

    return _node(out_data, (a,), backward)


def rowwise_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    if debug_checks:
        sums = s.sum(axis=-1)
        assert np.all(np.abs(sums - 1.0) <= 1e-12), "softmax row sums drifted"

    def backward(grad):
        inner = (grad * s).sum(axis=-1, keepdims=True)
        _accumulate(a, (grad - inner) * s)

    return _node(s, (a,), backward)


_ACTIVATIONS = ("relu", "gelu", "silu")


def activation(a: Tensor, rho: str) -> Tensor:
    if rho not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {rho!r}")
    x = a.data
    if rho == "relu":
        out_data = np.maximum(x, 0.0)

        def backward(grad):
            _accumulate(a, grad * (x > 0.0))
    elif rho == "gelu":
        cdf = _gauss_cdf(x)
        out_data = x * cdf

        def backward(grad):
            _accumulate(a, grad * (cdf + x * _gauss_pdf(x)))
    else:  # silu
        sig = 1.0 / (1.0 + np.exp(-x))
        out_data = x * sig

        def backward(grad):
            _accumulate(a, grad * sig * (1.0 + x * (1.0 - sig)))

    return _node(out_data, (a,), backward)


def rowwise_layernorm(a: Tensor, eps: float = 1e-6) -> Tensor:
    """Rows rescaled to zero mean, unit variance (no learned affine)."""
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = centered * inv

    def backward(grad):
        gmean = grad.mean(axis=-1, keepdims=True)
        gydot = (grad * y).mean(axis=-1, keepdims=True)
        _accumulate(a, inv * (grad - gmean - y * gydot))

    return _node(y, (a,), backward)


def pick(a: Tensor, row: int, col: int) -> Tensor:
    """Entry [..., row, col]; the leading axes (if any) are kept."""
    out_data = a.data[..., row, col]

    def backward(grad):
        full = np.zeros_like(a.data)
        full[..., row, col] = grad
        _accumulate(a, full)

    return _node(out_data, (a,), backward)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"loss mismatch {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out_data = np.array(np.mean(diff ** 2))
    scale_c = 2.0 / diff.size

    def backward(grad):
        _accumulate(pred, grad * scale_c * diff)
        _accumulate(target, -grad * scale_c * diff)

    return _node(out_data, (pred, target), backward)


def backward(loss: Tensor):
    """Reverse sweep from a scalar loss; gradients land in ``.grad``.

    The tape is consumed; a second sweep raises."""
    tape = loss.tape
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward pass")
    tape.consumed = True
    if loss.data.size != 1:
        raise ShapeError("backward starts from a scalar")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.backward_fn is not None and node.grad is not None and node.requires_grad:
            node.backward_fn(node.grad)


def grad_check(make_loss, params, h: float = 1e-5, max_coords: int = 64,
               rng: np.random.Generator = None) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    ``make_loss(param_arrays) -> float or Tensor`` must rebuild the loss
    from plain arrays; ``params`` are the Tensors whose gradients were
    already populated by a backward pass.  The relative error denominator
    is floored at 1e-6: central differences on an O(1) loss carry ~1e-11
    of roundoff, which would otherwise swamp near-zero gradients.
    """
    rng = rng or np.random.default_rng(0)

    def loss_value(arrays):
        out = make_loss(arrays)
        return float(out.data) if isinstance(out, Tensor) else float(out)

    arrays = [p.data.copy() for p in params]
    worst = 0.0
    for pi, p in enumerate(params):
        flat = arrays[pi].reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, max_coords, replace=False)
        for ci in coords:
            orig = flat[ci]
            flat[ci] = orig + h
            up = loss_value(arrays)
            flat[ci] = orig - h
            dn = loss_value(arrays)
            flat[ci] = orig
            fd = (up - dn) / (2.0 * h)
            an = p.grad.reshape(-1)[ci] if p.grad is not None else 0.0
            denom = max(abs(fd), abs(an), 1e-6)
            worst = max(worst, abs(fd - an) / denom)
    return worst
