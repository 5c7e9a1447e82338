"""Differentiable kernels: forward passes with hand-derived backward closures.

Every kernel here is verified against central finite differences by the
gradient-check harness; see tests/test_gradients.py.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import ShapeMismatchError, Tensor, as_tensor

_BCE_EPS = 1e-7
_LN_EPS = 1e-5
_interp_cache: dict[tuple[int, int], np.ndarray] = {}


def _require_2d(name: str, t: Tensor) -> None:
    if t.data.ndim != 2:
        raise ShapeMismatchError(f"{name} expects a 2-D tensor, got shape {t.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d("matmul", a)
    _require_2d("matmul", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._node(out, "matmul", (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"add: {a.shape} vs {b.shape}")
    return Tensor._node(a.data + b.data, "add", (a, b), lambda g: (g, g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    _require_2d("add_bias", x)
    if b.data.ndim != 1 or b.shape[0] != x.shape[1]:
        raise ShapeMismatchError(f"add_bias: {x.shape} + {b.shape}")
    return Tensor._node(
        x.data + b.data, "add_bias", (x, b), lambda g: (g, g.sum(axis=0))
    )


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._node(x.data * c, "scale", (x,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bwd(g):
        return (g * mask,)

    return Tensor._node(x.data * mask, "relu", (x,), bwd)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    # tanh form: 0.5 x (1 + tanh(c (x + a x^3)))
    v = x.data
    inner = _GELU_C * (v + _GELU_A * v**3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def bwd(g):
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * v**2)
        dv = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t**2) * d_inner
        return (g * dv,)

    return Tensor._node(out, "gelu", (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    # branch on sign so exp never overflows
    v = x.data
    s = np.empty_like(v)
    pos = v >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    s[~pos] = ev / (1.0 + ev)

    def bwd(g):
        return (g * s * (1.0 - s),)

    return Tensor._node(s, "sigmoid", (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - dot),)

    return Tensor._node(p, "softmax", (x,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = _LN_EPS) -> Tensor:
    """Normalize over the last axis, then apply the affine (gamma, beta)."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatchError(
            f"layer_norm affine must be ({d},), got {gamma.shape}/{beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bwd(g):
        dgamma = (g * xhat).reshape(-1, d).sum(axis=0)
        dbeta = g.reshape(-1, d).sum(axis=0)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgamma, dbeta

    return Tensor._node(out, "layer_norm", (x, gamma, beta), bwd)


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Temporal convolution: x (T, C_in), w (K, C_in, C_out), odd K, same padding."""
    _require_2d("conv1d", x)
    if w.data.ndim != 3:
        raise ShapeMismatchError(f"conv1d kernel must be 3-D, got {w.shape}")
    k, c_in, c_out = w.shape
    if k % 2 != 1:
        raise ShapeMismatchError(f"conv1d kernel size must be odd, got {k}")
    if x.shape[1] != c_in or b.shape != (c_out,):
        raise ShapeMismatchError(f"conv1d: x {x.shape}, w {w.shape}, b {b.shape}")
    t = x.shape[0]
    pad = k // 2
    xp = np.zeros((t + 2 * pad, c_in))
    xp[pad : pad + t] = x.data
    # cols[t, j, c] = xp[t + j, c]
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)  # (T, C_in, K)
    cols = np.ascontiguousarray(cols.transpose(0, 2, 1)).reshape(t, k * c_in)
    w2 = w.data.reshape(k * c_in, c_out)
    out = cols @ w2 + b.data

    def bwd(g):
        db = g.sum(axis=0)
        dw = (cols.T @ g).reshape(k, c_in, c_out)
        dcols = (g @ w2.T).reshape(t, k, c_in)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[j : j + t] += dcols[:, j, :]
        return dxp[pad : pad + t], dw, db

    return Tensor._node(out, "conv1d", (x, w, b), bwd)


def max_pool(x: Tensor, axis: int, k: int = 2) -> Tensor:
    """Non-overlapping max pooling with window k along one axis."""
    n = x.shape[axis]
    if n % k != 0:
        raise ShapeMismatchError(f"max_pool: axis size {n} not divisible by {k}")
    moved = np.moveaxis(x.data, axis, -1)
    grouped = moved.reshape(*moved.shape[:-1], n // k, k)
    idx = grouped.argmax(axis=-1)
    out = np.take_along_axis(grouped, idx[..., None], axis=-1)[..., 0]
    out = np.moveaxis(out, -1, axis)

    def bwd(g):
        gm = np.moveaxis(g, axis, -1)
        dgrouped = np.zeros_like(grouped)
        np.put_along_axis(dgrouped, idx[..., None], gm[..., None], axis=-1)
        dx = dgrouped.reshape(moved.shape)
        return (np.moveaxis(dx, -1, axis),)

    return Tensor._node(out, "max_pool", (x,), bwd)


def interp_matrix(t_in: int, t_out: int) -> np.ndarray:
    """Linear-interpolation resampling matrix A so that y = A @ x.

    Endpoints are pinned: the first and last input frames map onto the first
    and last output frames.
    """
    key = (t_in, t_out)
    cached = _interp_cache.get(key)
    if cached is not None:
        return cached
    a = np.zeros((t_out, t_in))
    if t_in == 1:
        a[:, 0] = 1.0
    elif t_out == 1:
        a[0, 0] = 1.0
    else:
        pos = np.arange(t_out) * (t_in - 1) / (t_out - 1)
        lo = np.floor(pos).astype(int)
        lo = np.minimum(lo, t_in - 2)
        frac = pos - lo
        a[np.arange(t_out), lo] = 1.0 - frac
        a[np.arange(t_out), lo + 1] = frac
    _interp_cache[key] = a
    return a


def resample_linear(x: Tensor, t_out: int) -> Tensor:
    """Resample along axis 0 to t_out frames by linear interpolation."""
    _require_2d("resample_linear", x)
    a = interp_matrix(x.shape[0], t_out)
    out = a @ x.data

    def bwd(g):
        return (a.T @ g,)

    return Tensor._node(out, "resample_linear", (x,), bwd)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        n = x.data.size
        out = np.asarray(x.data.mean())

        def bwd(g):
            return (np.full_like(x.data, float(g) / n),)

    else:
        n = x.shape[axis]
        out = x.data.mean(axis=axis)

        def bwd(g):
            return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

    return Tensor._node(out, "mean", (x,), bwd)


def sdpa(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention for a single head.

    q (Tq, D) attends over k/v (Tk, D); scores are scaled by 1/sqrt(D) and
    softmax-normalized per query row.
    """
    for name, t in (("q", q), ("k", k), ("v", v)):
        _require_2d(f"sdpa {name}", t)
    d = q.shape[1]
    if k.shape[1] != d or v.shape[0] != k.shape[0]:
        raise ShapeMismatchError(f"sdpa: q {q.shape}, k {k.shape}, v {v.shape}")
    inv = 1.0 / math.sqrt(d)
    s = (q.data @ k.data.T) * inv
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=1, keepdims=True)
    out = p @ v.data

    def bwd(g):
        dv = p.T @ g
        dp = g @ v.data.T
        ds = p * (dp - (dp * p).sum(axis=1, keepdims=True))
        dq = ds @ k.data * inv
        dk = ds.T @ q.data * inv
        return dq, dk, dv

    return Tensor._node(out, "sdpa", (q, k, v), bwd)


def attention_weights(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Softmax attention matrix for inspection (numpy in, numpy out)."""
    s = (q @ k.T) / math.sqrt(q.shape[1])
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """All heads of scaled dot-product attention in one fused kernel.

    Equivalent to slicing q/k/v into `heads` column blocks, running sdpa per
    block, and concatenating the results; batching the heads keeps the graph
    small. The per-head width sets the 1/sqrt(d_head) scale.
    """
    for name, t in (("q", q), ("k", k), ("v", v)):
        _require_2d(f"mha {name}", t)
    d = q.shape[1]
    if d % heads != 0:
        raise ShapeMismatchError(f"mha: width {d} not divisible by {heads} heads")
    if k.shape[1] != d or v.shape[1] != d or v.shape[0] != k.shape[0]:
        raise ShapeMismatchError(f"mha: q {q.shape}, k {k.shape}, v {v.shape}")
    tq = q.shape[0]
    inv = 1.0 / math.sqrt(d // heads)
    qh = _split_heads(q.data, heads)
    kh = _split_heads(k.data, heads)
    vh = _split_heads(v.data, heads)
    s = qh @ kh.transpose(0, 2, 1) * inv
    s -= s.max(axis=2, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=2, keepdims=True)
    out = (p @ vh).transpose(1, 0, 2).reshape(tq, d)

    def bwd(g):
        gh = _split_heads(g, heads)
        dv = p.transpose(0, 2, 1) @ gh
        dp = gh @ vh.transpose(0, 2, 1)
        ds = p * (dp - (dp * p).sum(axis=2, keepdims=True))
        dq = ds @ kh * inv
        dk = ds.transpose(0, 2, 1) @ qh * inv
        merge = lambda a: a.transpose(1, 0, 2).reshape(-1, d)
        return merge(dq), merge(dk), merge(dv)

    return Tensor._node(out, "multi_head_attention", (q, k, v), bwd)


def binary_cross_entropy(p: Tensor, target) -> Tensor:
    """Sum-reduced BCE; predictions are clamped to [eps, 1-eps] first."""
    target = as_tensor(target)
    if p.shape != target.shape:
        raise ShapeMismatchError(f"bce: {p.shape} vs {target.shape}")
    ph = np.clip(p.data, _BCE_EPS, 1.0 - _BCE_EPS)
    t = target.data
    out = np.asarray(-(t * np.log(ph) + (1.0 - t) * np.log(1.0 - ph)).sum())
    inside = (p.data > _BCE_EPS) & (p.data < 1.0 - _BCE_EPS)

    def bwd(g):
        dp = float(g) * (ph - t) / (ph * (1.0 - ph)) * inside
        dt = float(g) * np.log((1.0 - ph) / ph)
        return dp, dt

    return Tensor._node(out, "bce", (p, target), bwd)


def squared_error(a: Tensor, b) -> Tensor:
    """Sum-reduced squared error between same-shape tensors."""
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"squared_error: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out = np.asarray((diff**2).sum())

    def bwd(g):
        d = 2.0 * float(g) * diff
        return d, -d

    return Tensor._node(out, "squared_error", (a, b), bwd)


def transpose(x: Tensor) -> Tensor:
    _require_2d("transpose", x)
    return Tensor._node(x.data.T.copy(), "transpose", (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)
    orig = x.data.shape

    def bwd(g):
        return (g.reshape(orig),)

    return Tensor._node(out, "reshape", (x,), bwd)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    _require_2d("slice_cols", x)
    out = x.data[:, start:stop].copy()

    def bwd(g):
        dx = np.zeros_like(x.data)
        dx[:, start:stop] = g
        return (dx,)

    return Tensor._node(out, "slice_cols", (x,), bwd)


def concat_cols(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ShapeMismatchError("concat_cols: empty input")
    rows = parts[0].shape[0]
    for p in parts:
        _require_2d("concat_cols", p)
        if p.shape[0] != rows:
            raise ShapeMismatchError("concat_cols: row counts differ")
    widths = [p.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + widths)

    def bwd(g):
        return tuple(g[:, offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return Tensor._node(out, "concat_cols", tuple(parts), bwd)
