"""Minimal dense-tensor math with reverse-mode automatic differentiation.

Tensors wrap float64 numpy arrays and record a computation graph on the fly.
Calling ``backward()`` on a scalar output accumulates gradients into every
reachable tensor with ``requires_grad=True``. Only the ops needed by the
model live here; everything is deterministic and single threaded.
"""

import numpy as np


class ShapeError(ValueError):
    pass


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        if type(data) is np.ndarray and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar output, got shape "
                             f"{self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                acc = grads.get(id(parent))
                # no in-place accumulation: pg may alias g or be a readonly view
                grads[id(parent)] = pg if acc is None else acc + pg

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_along(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_along(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


class Parameter(Tensor):
    """A named trainable tensor; grad is always allocated."""

    __slots__ = ("name",)

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(out, parents, backward):
    if any(p.requires_grad or p._parents for p in parents):
        out._parents = parents
        out._backward = backward
    return out


# -- elementwise binary -----------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)
    return _track(out, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)
    return _track(out, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)
    return _track(out, (a, b), lambda g: (
        _unbroadcast(g * b.data, a.data.shape),
        _unbroadcast(g * a.data, b.data.shape)))


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data / b.data)
    return _track(out, (a, b), lambda g: (
        _unbroadcast(g / b.data, a.data.shape),
        _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _track(out, (a, b), backward)


def dot(a, b):
    """Inner product of two vectors, returns a scalar tensor."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ShapeError(f"dot: need equal-length vectors, got {a.data.shape} and {b.data.shape}")
    return sum_along(mul(a, b), None, False)


# -- elementwise unary ------------------------------------------------------

def relu(x):
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))
    return _track(out, (x,), lambda g: (g * (x.data > 0.0),))


def sigmoid(x):
    x = _as_tensor(x)
    y = np.empty_like(x.data)
    pos = x.data >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)
    return _track(out, (x,), lambda g: (g * y * (1.0 - y),))


def softplus(x):
    x = _as_tensor(x)
    out = Tensor(np.logaddexp(0.0, x.data))
    # d/dx softplus = sigmoid(x)
    s = np.empty_like(x.data)
    pos = x.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    s[~pos] = ex / (1.0 + ex)
    return _track(out, (x,), lambda g: (g * s,))


def log(x):
    x = _as_tensor(x)
    out = Tensor(np.log(x.data))
    return _track(out, (x,), lambda g: (g / x.data,))


def exp(x):
    x = _as_tensor(x)
    out = Tensor(np.exp(x.data))
    return _track(out, (x,), lambda g: (g * out.data,))


def square(x):
    x = _as_tensor(x)
    out = Tensor(x.data * x.data)
    return _track(out, (x,), lambda g: (g * 2.0 * x.data,))


def sqrt(x):
    x = _as_tensor(x)
    out = Tensor(np.sqrt(x.data))
    return _track(out, (x,), lambda g: (g * 0.5 / out.data,))


def clamp(x, lo, hi):
    """Clip values to [lo, hi]; gradient passes only where unclipped."""
    x = _as_tensor(x)
    out = Tensor(np.clip(x.data, lo, hi))
    inside = (x.data > lo) & (x.data < hi)
    return _track(out, (x,), lambda g: (g * inside,))


# -- reductions and shape ---------------------------------------------------

def sum_along(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape),)

    return _track(out, (x,), backward)


def mean_along(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    if axis is not None and x.data.shape[axis] == 0:
        raise ShapeError(f"mean over empty axis {axis} of shape {x.data.shape}")
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(sum_along(x, axis, keepdims), 1.0 / n)


def mean_pool_axis(x, axis):
    """Arithmetic mean along one axis; each slice receives gradient 1/extent."""
    return mean_along(x, axis, keepdims=False)


def softmax_along(x, axis):
    """Numerically stabilized softmax along `axis` (max subtraction)."""
    x = _as_tensor(x)
    if x.data.shape[axis] == 0:
        raise ShapeError(f"softmax over empty axis {axis} of shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _track(out, (x,), backward)


def reshape(x, shape):
    x = _as_tensor(x)
    out = Tensor(x.data.reshape(shape))
    return _track(out, (x,), lambda g: (g.reshape(x.data.shape),))


def transpose(x, axes=None):
    x = _as_tensor(x)
    out = Tensor(x.data.transpose(axes))
    inv = None if axes is None else np.argsort(axes)
    return _track(out, (x,), lambda g: (g.transpose(inv),))


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _track(out, tuple(tensors), backward)


def take(x, idx):
    """Indexing/slicing; backward scatter-adds into the source positions."""
    x = _as_tensor(x)
    out = Tensor(x.data[idx])

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _track(out, (x,), backward)


def stack(tensors, axis=0):
    expanded = []
    for t in tensors:
        t = _as_tensor(t)
        shape = list(t.data.shape)
        shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


# -- composite layers -------------------------------------------------------

def feature_norm(x, guard=1e-5):
    """Per-row feature normalization: (x - mean) / (std + guard).

    Mean and std run over the last axis of each row; the guard keeps the
    all-equal-features row finite. Fused forward/backward.
    """
    x = _as_tensor(x)
    n = x.data.shape[-1]
    if n == 0:
        raise ShapeError("feature_norm on empty feature axis")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    std = np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + 1e-12)
    denom = std + guard
    out = Tensor(centered / denom)

    def backward(g):
        gc = g / denom - centered * ((g * centered).sum(axis=-1, keepdims=True)
                                     / (n * std * denom * denom))
        return (gc - gc.mean(axis=-1, keepdims=True),)

    return _track(out, (x,), backward)


def affine_norm_layer(x, W, b, scale, shift):
    """Affine map followed by per-row feature normalization.

    y = scale * (a - mean(a)) / (std(a) + 1e-5) + shift with a = xW + b,
    mean/std taken over the feature (last) axis of each row.
    """
    a = add(matmul(x, W), b)
    return add(mul(scale, feature_norm(a)), shift)


def l2_normalize(x, axis=-1, guard=1e-12):
    """Scale rows of x to unit L2 norm along `axis`. Fused forward/backward.

    The guard inside the square root keeps all-zero rows (and their
    gradients) finite; such rows map to zero instead of NaN.
    """
    x = _as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True) + guard)
    out = Tensor(x.data / norm)

    def backward(g):
        return ((g - out.data * (g * out.data).sum(axis=axis, keepdims=True)) / norm,)

    return _track(out, (x,), backward)


# -- gradient checking ------------------------------------------------------

def gradient_check(f, params, h=1e-4):
    """Compare analytic gradients of scalar f() against central differences.

    Returns the max over all parameter entries of the symmetric relative
    error |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    for p in params:
        p.zero_grad()
    y = f()
    if not np.isfinite(y.data).all():
        raise ValueError("gradient_check: non-finite objective value")
    y.backward()
    analytic = [p.grad.copy() for p in params]

    max_err = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f().item()
            flat[i] = orig - h
            f_minus = f().item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError("gradient_check: non-finite objective under perturbation")
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(an_flat[i] - numeric) / max(1e-8, abs(an_flat[i]) + abs(numeric))
            if err > max_err:
                max_err = err
    return max_err
