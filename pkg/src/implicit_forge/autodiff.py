"""Reverse-mode automatic differentiation on dense float64 arrays.

The engine is deliberately small: a Tensor wraps a numpy array plus graph
bookkeeping, and every differentiable operation is a module-level function
that records a vector-Jacobian closure. Graphs are built eagerly and torn
down by garbage collection; backward() walks the graph once in reverse
topological order and accumulates gradients on every tensor that requires
them. Calling backward() again without clearing grads adds on top.

Conventions fixed here and relied on by the rest of the package:

* all data is float64; scalars have shape ()
* binary elementwise ops accept equal shapes or a scalar paired with a
  tensor -- no general broadcasting
* log clamps its operand to >= 1e-7, div clamps |denominator| to >= 1e-12;
  inside the clamped region the gradient is zero (the clamped function is
  locally constant there)
* relu'(0) = 0
"""

import numpy as np

LOG_CLAMP = 1e-7
DIV_CLAMP = 1e-12


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class Tensor:
    """A float64 array with an optional place in a computation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractViolation("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False)

    def is_leaf(self):
        return not self._parents

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are lifted to constant tensors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _node(data, parents, vjp, op):
    """Wrap an op result, attaching graph edges only when a parent needs grads."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        out._op = op
    return out


def _is_scalar(t):
    return t.data.size == 1 and t.data.ndim <= 1


def _binary_shapes(a, b, op):
    if a.shape == b.shape:
        return
    if _is_scalar(a) or _is_scalar(b):
        return
    raise ContractViolation(f"{op}: shapes {a.shape} and {b.shape} are not equal or scalar-broadcastable")


def _reduce_to(grad, shape):
    """Sum a broadcast gradient back down to the scalar operand's shape."""
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "add")

    def vjp(g):
        return (_reduce_to(g, a.shape), _reduce_to(g, b.shape))

    return _node(a.data + b.data, (a, b), vjp, "add")


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "sub")

    def vjp(g):
        return (_reduce_to(g, a.shape), _reduce_to(-g, b.shape))

    return _node(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "mul")

    def vjp(g):
        return (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), vjp, "mul")


def div(a, b):
    """a / b with |b| clamped to >= DIV_CLAMP (sign preserved, +1 at zero)."""
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "div")
    sign = np.where(b.data < 0.0, -1.0, 1.0)
    denom = sign * np.maximum(np.abs(b.data), DIV_CLAMP)
    inside = np.abs(b.data) >= DIV_CLAMP

    def vjp(g):
        ga = _reduce_to(g / denom, a.shape)
        gb = _reduce_to(np.where(inside, -g * a.data / (denom * denom), 0.0), b.shape)
        return (ga, gb)

    return _node(a.data / denom, (a, b), vjp, "div")


def neg(a):
    a = _lift(a)

    def vjp(g):
        return (-g,)

    return _node(-a.data, (a,), vjp, "neg")


def exp(a):
    a = _lift(a)
    out_data = np.exp(a.data)

    def vjp(g):
        return (g * out_data,)

    return _node(out_data, (a,), vjp, "exp")


def log(a):
    """Natural log of max(a, LOG_CLAMP); zero gradient below the clamp."""
    a = _lift(a)
    clamped = np.maximum(a.data, LOG_CLAMP)
    inside = a.data >= LOG_CLAMP

    def vjp(g):
        return (np.where(inside, g / clamped, 0.0),)

    return _node(np.log(clamped), (a,), vjp, "log")


def sigmoid(a):
    a = _lift(a)
    e = np.exp(-np.abs(a.data))
    out_data = np.where(a.data >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))

    def vjp(g):
        return (g * out_data * (1.0 - out_data),)

    return _node(out_data, (a,), vjp, "sigmoid")


def relu(a):
    a = _lift(a)
    mask = a.data > 0.0

    def vjp(g):
        return (g * mask,)

    return _node(np.where(mask, a.data, 0.0), (a,), vjp, "relu")


def square(a):
    a = _lift(a)

    def vjp(g):
        return (2.0 * g * a.data,)

    return _node(a.data * a.data, (a,), vjp, "square")


# ---------------------------------------------------------------------------
# linear algebra and structure ops


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ContractViolation("matmul expects rank-2 tensors")
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul: inner extents differ ({a.shape} @ {b.shape})")

    def vjp(g):
        return (g @ b.data.T, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), vjp, "matmul")


def reduce_mean(a):
    a = _lift(a)
    if a.data.size == 0:
        raise ContractViolation("reduce_mean of an empty tensor")
    n = a.data.size

    def vjp(g):
        return (np.full(a.shape, float(g) / n),)

    return _node(np.asarray(a.data.mean()), (a,), vjp, "reduce_mean")


def reduce_sum(a):
    a = _lift(a)
    if a.data.size == 0:
        raise ContractViolation("reduce_sum of an empty tensor")

    def vjp(g):
        return (np.full(a.shape, float(g)),)

    return _node(np.asarray(a.data.sum()), (a,), vjp, "reduce_sum")


def reshape(a, shape):
    a = _lift(a)
    old = a.shape

    def vjp(g):
        return (g.reshape(old),)

    return _node(a.data.reshape(shape), (a,), vjp, "reshape")


def add_bias(x, b):
    """Add a length-M bias vector to every row of an (N, M) tensor."""
    x, b = _lift(x), _lift(b)
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ContractViolation(f"add_bias: incompatible shapes {x.shape} and {b.shape}")

    def vjp(g):
        return (g, g.sum(axis=0))

    return _node(x.data + b.data[None, :], (x, b), vjp, "add_bias")


def concat_cols(a, b):
    """Concatenate two rank-2 tensors along columns."""
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ContractViolation(f"concat_cols: incompatible shapes {a.shape} and {b.shape}")
    na = a.shape[1]

    def vjp(g):
        return (g[:, :na], g[:, na:])

    return _node(np.concatenate([a.data, b.data], axis=1), (a, b), vjp, "concat_cols")


def gather_rows(a, indices):
    """Select rows of a rank-1/2 tensor; backward scatters (duplicates add)."""
    a = _lift(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ContractViolation("gather_rows: indices must be a flat index list")

    def vjp(g):
        out = np.zeros(a.shape)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), vjp, "gather_rows")


def slice_last(a, lo, hi):
    """Slice [lo, hi) along the last axis; backward zero-pads."""
    a = _lift(a)
    last = a.shape[-1]
    if not (0 <= lo < hi <= last):
        raise ContractViolation(f"slice_last: [{lo}, {hi}) out of range for extent {last}")

    def vjp(g):
        out = np.zeros(a.shape)
        out[..., lo:hi] = g
        return (out,)

    return _node(a.data[..., lo:hi].copy(), (a,), vjp, "slice_last")


# ---------------------------------------------------------------------------
# image-shaped ops


def _conv_indices(h, w, c_in, stride):
    """Patch-gather index map for a 3x3 kernel with zero padding of 1."""
    h_out = (h - 1) // stride + 1
    w_out = (w - 1) // stride + 1
    ys = np.arange(h_out) * stride
    xs = np.arange(w_out) * stride
    ky, kx = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
    # padded coordinates of each tap for each output position
    py = ys[:, None, None, None] + ky[None, None]          # (h_out,1,3,3)
    px = xs[None, :, None, None] + kx[None, None]          # (1,w_out,3,3)
    py = np.broadcast_to(py, (h_out, w_out, 3, 3))
    px = np.broadcast_to(px, (h_out, w_out, 3, 3))
    flat = (py * (w + 2) + px).reshape(h_out * w_out, 9)
    return h_out, w_out, flat


_CONV_INDEX_CACHE = {}


def conv2d(x, w, b, stride=1):
    """3x3 convolution, zero padding 1, channels-last image (H, W, C_in).

    Weight is (C_out, C_in, 3, 3); output is (H', W', C_out) where the
    spatial extents shrink by the stride only.
    """
    x, w, b = _lift(x), _lift(w), _lift(b)
    if x.data.ndim != 3 or w.data.ndim != 4 or w.shape[2:] != (3, 3):
        raise ContractViolation("conv2d expects image (H,W,C) and weight (C_out,C_in,3,3)")
    h, wd, c_in = x.shape
    c_out = w.shape[0]
    if w.shape[1] != c_in or b.shape != (c_out,):
        raise ContractViolation("conv2d: channel extents do not line up")

    key = (h, wd, stride)
    if key not in _CONV_INDEX_CACHE:
        _CONV_INDEX_CACHE[key] = _conv_indices(h, wd, c_in, stride)
    h_out, w_out, flat_idx = _CONV_INDEX_CACHE[key]

    padded = np.zeros((h + 2, wd + 2, c_in))
    padded[1:-1, 1:-1] = x.data
    cols = padded.reshape(-1, c_in)[flat_idx]              # (P, 9, C_in)
    cols = cols.reshape(h_out * w_out, 9 * c_in)
    kernel = w.data.transpose(2, 3, 1, 0).reshape(9 * c_in, c_out)
    out = cols @ kernel + b.data[None, :]

    def vjp(g):
        g2 = g.reshape(h_out * w_out, c_out)
        g_cols = g2 @ kernel.T                             # (P, 9*C_in)
        g_padded = np.zeros(((h + 2) * (wd + 2), c_in))
        np.add.at(g_padded, flat_idx.ravel(), g_cols.reshape(-1, c_in))
        g_x = g_padded.reshape(h + 2, wd + 2, c_in)[1:-1, 1:-1]
        g_kernel = cols.T @ g2                             # (9*C_in, C_out)
        g_w = g_kernel.reshape(3, 3, c_in, c_out).transpose(3, 2, 0, 1)
        g_b = g2.sum(axis=0)
        return (g_x, g_w, g_b)

    return _node(out.reshape(h_out, w_out, c_out), (x, w, b), vjp, "conv2d")


def grid_sample(grid, gx, gy):
    """Bilinearly sample a (H, W, C) grid at continuous grid coordinates.

    Query locations are fixed data, not graph values; gradients flow into
    the grid only. Samples outside [0, W-1] x [0, H-1] read as zero.
    """
    grid = _lift(grid)
    if grid.data.ndim != 3:
        raise ContractViolation("grid_sample expects a (H, W, C) grid")
    gh, gw, _ = grid.shape
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.shape != gy.shape or gx.ndim != 1:
        raise ContractViolation("grid_sample: gx and gy must be equal-length flat arrays")

    x0 = np.floor(gx).astype(np.intp)
    y0 = np.floor(gy).astype(np.intp)
    fx = gx - x0
    fy = gy - y0
    corners = []
    for dy, dx, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        cy = y0 + dy
        cx = x0 + dx
        valid = (cy >= 0) & (cy < gh) & (cx >= 0) & (cx < gw)
        corners.append((np.where(valid, cy, 0), np.where(valid, cx, 0), wgt * valid))

    out = np.zeros((gx.size, grid.shape[2]))
    for cy, cx, wgt in corners:
        out += grid.data[cy, cx] * wgt[:, None]

    def vjp(g):
        g_grid = np.zeros(grid.shape)
        for cy, cx, wgt in corners:
            np.add.at(g_grid, (cy, cx), g * wgt[:, None])
        return (g_grid,)

    return _node(out, (grid,), vjp, "grid_sample")


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root):
    """Iterative post-order over the graph reachable from root."""
    order = []
    seen = set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate dloss/dt onto .grad of every requires_grad tensor in the graph."""
    if not isinstance(loss, Tensor) or loss.data.shape != ():
        raise ContractViolation("backward requires a scalar Tensor loss")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    local = {id(loss): np.ones(())}
    for node in reversed(order):
        g = local.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros(node.shape)
            node.grad = node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in local:
                local[key] = local[key] + pg
            else:
                local[key] = pg


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# finite-difference oracle


def grad_check(f, inputs, h=1e-4):
    """Max relative error between analytic and central-difference gradients.

    f maps the input tensors to a scalar Tensor. Every element of every
    input is perturbed by +/- h. The error for one element is
    |analytic - numeric| / max(1, |analytic|); non-finite values anywhere
    make the result +inf.
    """
    if h <= 0:
        raise ContractViolation("grad_check requires h > 0")
    inputs = [_lift(t) for t in inputs]
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    loss = f(*inputs)
    if not np.isfinite(loss.data):
        return np.inf
    backward(loss)

    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f(*inputs).item()
            flat[i] = orig - h
            down = f(*inputs).item()
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                return np.inf
            numeric = (up - down) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(a))
            if err > worst:
                worst = err
    return worst
