"""Reverse-mode automatic differentiation over numpy arrays.

The operation set is sized for the blueprint field model: dense and 3x3
convolutional layers, bounded nonlinearities, stride-2 downsampling,
nearest-neighbor upsampling with crop, bilinear feature gathering, and the
reductions the loss needs. Gradients are exact reverse-mode; grad_check in
field.train compares them against central finite differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.requires_grad else 'no'})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting in forward."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def backward(root: Tensor):
    """Propagate d(root)/d(leaf) into .grad of every reachable parameter.

    root must be scalar (shape () or (1,...)-squeezable to one element).
    """
    if root.data.size != 1:
        raise DimensionError("backward expects a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            for parent, pg in node._backward(g):
                if not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] += pg
                else:
                    grads[id(parent)] = np.array(pg, copy=True)
        else:
            _accumulate(node, g)
    # leaves reached with no _backward had their grads accumulated above;
    # interior nodes with parameters mixed in were handled through the dict
    return None


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def bwd(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return _node(data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data - b.data

    def bwd(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(-g, b.data.shape)))

    return _node(data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def bwd(g):
        return (
            (a, _unbroadcast(g * b.data, a.data.shape)),
            (b, _unbroadcast(g * a.data, b.data.shape)),
        )

    return _node(data, (a, b), bwd)


def pow_const(a: Tensor, exponent: float) -> Tensor:
    a = _wrap(a)
    data = a.data**exponent

    def bwd(g):
        return ((a, g * exponent * a.data ** (exponent - 1.0)),)

    return _node(data, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data @ b.data

    def bwd(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _node(data, (a, b), bwd)


def tanh(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.tanh(a.data)

    def bwd(g):
        return ((a, g * (1.0 - data * data)),)

    return _node(data, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        return ((a, g * data * (1.0 - data)),)

    return _node(data, (a,), bwd)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g, a.data.shape).copy()),)

    return _node(data, (a,), bwd)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)
    data = a.data.reshape(shape)

    def bwd(g):
        return ((a, g.reshape(a.data.shape)),)

    return _node(data, (a,), bwd)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple((p, piece) for p, piece in zip(parts, pieces))

    return _node(data, tuple(parts), bwd)


# ---------------------------------------------------------------- conv / resize


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """3x3 (or kxk) convolution on a (C, H, W) image, padding k//2.

    Output spatial size is ceil(H/stride) x ceil(W/stride).
    """
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    c_out, c_in, k, _ = w.data.shape
    _, h, wd = x.data.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (C, oh, ow, k, k)
    cols = win.transpose(1, 2, 0, 3, 4).reshape(oh * ow, c_in * k * k)
    wm = w.data.reshape(c_out, c_in * k * k)
    out = (cols @ wm.T).T.reshape(c_out, oh, ow) + b.data[:, None, None]

    def bwd(g):
        gm = g.reshape(c_out, oh * ow)
        dw = (gm @ cols).reshape(w.data.shape)
        db = gm.sum(axis=1)
        dcols = gm.T @ wm  # (oh*ow, C*k*k)
        dwin = dcols.reshape(oh, ow, c_in, k, k)
        dxp = np.zeros_like(xp)
        for di in range(k):
            for dj in range(k):
                dxp[:, di : di + stride * (oh - 1) + 1 : stride, dj : dj + stride * (ow - 1) + 1 : stride] += (
                    dwin[:, :, :, di, dj].transpose(2, 0, 1)
                )
        dx = dxp[:, pad : pad + h, pad : pad + wd]
        return ((x, dx), (w, dw), (b, db))

    return _node(out, (x, w, b), bwd)


def upsample_to(x: Tensor, target_hw: tuple[int, int]) -> Tensor:
    """Nearest-neighbor x2 upsampling cropped to target (for odd skip sizes)."""
    x = _wrap(x)
    c, h, w = x.data.shape
    th, tw = target_hw
    if th > 2 * h or tw > 2 * w:
        raise DimensionError(f"cannot upsample ({h},{w}) to ({th},{tw}): more than x2")
    data = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)[:, :th, :tw]

    def bwd(g):
        gp = np.zeros((c, 2 * h, 2 * w), dtype=g.dtype)
        gp[:, :th, :tw] = g
        dx = gp.reshape(c, h, 2, w, 2).sum(axis=(2, 4))
        return ((x, dx),)

    return _node(data, (x,), bwd)


def bilinear_gather(fmap: Tensor, u: np.ndarray, v: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Sample a (C, H, W) feature map at continuous pixel coords (u right,
    v down), bilinear weights, coordinates clamped to the frame.

    Returns the (n, C) samples and a boolean out-of-frame mask for callers
    that track which queries fell outside the view.
    """
    fmap = _wrap(fmap)
    c, h, w = fmap.data.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    oof = (u < 0) | (u > w - 1) | (v < 0) | (v > h - 1)
    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)
    x0 = np.floor(uc).astype(np.int64)
    y0 = np.floor(vc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (uc - x0).astype(fmap.data.dtype)
    fy = (vc - y0).astype(fmap.data.dtype)
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    fm = fmap.data.transpose(1, 2, 0)  # (H, W, C)
    out = (
        fm[y0, x0] * w00[:, None]
        + fm[y0, x1] * w01[:, None]
        + fm[y1, x0] * w10[:, None]
        + fm[y1, x1] * w11[:, None]
    )

    def bwd(g):
        df = np.zeros((h, w, c), dtype=g.dtype)
        np.add.at(df, (y0, x0), g * w00[:, None])
        np.add.at(df, (y0, x1), g * w01[:, None])
        np.add.at(df, (y1, x0), g * w10[:, None])
        np.add.at(df, (y1, x1), g * w11[:, None])
        return ((fmap, df.transpose(2, 0, 1)),)

    return _node(out, (fmap,), bwd), oof


# ---------------------------------------------------------------- parameters


class ParamSet:
    """Ordered named parameters; the order defines the checkpoint layout."""

    def __init__(self):
        self._items: list[tuple[str, Tensor]] = []
        self._index: dict[str, int] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._index:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(data), requires_grad=True)
        self._index[name] = len(self._items)
        self._items.append((name, t))
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._items[self._index[name]][1]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._items)

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._items)

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self._items]

    def names(self) -> list[str]:
        return [n for n, _ in self._items]

    def n_values(self) -> int:
        return int(sum(t.data.size for t in self.tensors()))

    def zero_grads(self):
        for t in self.tensors():
            t.grad = None

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet()
        for name, t in self._items:
            out.add(name, t.data.astype(dtype))
        return out


def linear_init(rng: np.random.Generator, n_in: int, n_out: int, dtype=np.float32):
    """Glorot-uniform dense weights."""
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, (n_in, n_out)).astype(dtype)


def conv_init(rng: np.random.Generator, c_out: int, c_in: int, k: int, dtype=np.float32):
    fan_in = c_in * k * k
    fan_out = c_out * k * k
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (c_out, c_in, k, k)).astype(dtype)
