"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import zlib
from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import Tensor, backward, topo_order, zero_grads


def name_seed(name: str) -> int:
    """Stable 32-bit seed for a kernel name (process-independent, unlike
    hash())."""
    return zlib.crc32(name.encode("utf-8"))


def gradient_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    fn must be a pure function of the given tensors; its output may have any
    shape (a fixed random projection reduces it to a scalar). The step is
    1e-5 * (1 + |x|) per coordinate unless h is given. Reports the worst
    coordinate over all inputs with requires_grad; never raises on mismatch.
    """
    rng = rng or np.random.default_rng(0)
    out = fn(*inputs)
    w = rng.standard_normal(out.data.shape)

    zero_grads(inputs)
    backward(out, w)
    analytic = [t.grad_value().copy() for t in inputs]

    def scalar() -> float:
        return float((fn(*inputs).data * w).sum())

    worst = 0.0
    for t, a in zip(inputs, analytic):
        if not t.requires_grad:
            continue
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            x0 = flat[i]
            step = h if h is not None else 1e-5 * (1.0 + abs(x0))
            flat[i] = x0 + step
            f_plus = scalar()
            flat[i] = x0 - step
            f_minus = scalar()
            flat[i] = x0
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst


def kink_margin(output: Tensor) -> float:
    """Distance of the recorded forward pass from its nearest nonsmooth point.

    Walks the tape below output and measures, for every relu, how close a
    pre-activation sits to zero, and for every max pool, how close the top
    two values of a group are to swapping. A stable all-zero pool group
    (dead units) is smooth and does not count. Finite-difference checks are
    only meaningful at points whose margin comfortably exceeds the step, so
    callers can redraw random points whose margin is tiny.
    """
    margin = np.inf
    for node in topo_order(output):
        if node.op == "relu":
            z = node.parents[0].data
            if z.size:
                margin = min(margin, float(np.min(np.abs(z))))
        elif node.op == "max_pool":
            parent = node.parents[0].data
            axis = next(
                i for i, (a, b) in enumerate(zip(parent.shape, node.data.shape))
                if a != b
            )
            k = parent.shape[axis] // node.data.shape[axis]
            z = np.sort(np.moveaxis(parent, axis, -1).reshape(-1, k), axis=1)
            top, second = z[:, -1], z[:, -2]
            live = ~((top == 0.0) & (second == 0.0))
            if live.any():
                margin = min(margin, float(np.min(top[live] - second[live])))
        elif node.op == "bce":
            p = node.parents[0].data
            edge = min(float(np.min(p)), float(np.min(1.0 - p)))
            margin = min(margin, edge)
    return margin


def _t(rng, *shape, lo=None, hi=None) -> Tensor:
    if lo is not None:
        return Tensor(rng.uniform(lo, hi, shape), requires_grad=True)
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# kernel name -> factory(rng) -> (fn, inputs); shapes stay small so the
# coordinate sweeps stay cheap
KERNEL_CASES: dict[str, Callable] = {
    "matmul": lambda rng: (ops.matmul, [_t(rng, 3, 4), _t(rng, 4, 2)]),
    "add": lambda rng: (ops.add, [_t(rng, 3, 4), _t(rng, 3, 4)]),
    "add_bias": lambda rng: (ops.add_bias, [_t(rng, 3, 4), _t(rng, 4)]),
    "scale": lambda rng: (lambda x: ops.scale(x, 1.7), [_t(rng, 3, 4)]),
    "relu": lambda rng: (ops.relu, [_t(rng, 3, 4)]),
    "gelu": lambda rng: (ops.gelu, [_t(rng, 3, 4)]),
    "sigmoid": lambda rng: (ops.sigmoid, [_t(rng, 3, 4)]),
    "softmax": lambda rng: (lambda x: ops.softmax(x, axis=-1), [_t(rng, 3, 5)]),
    "layer_norm": lambda rng: (
        ops.layer_norm,
        [_t(rng, 3, 6), _t(rng, 6), _t(rng, 6)],
    ),
    "conv1d": lambda rng: (ops.conv1d, [_t(rng, 6, 3), _t(rng, 3, 3, 2), _t(rng, 2)]),
    "max_pool": lambda rng: (lambda x: ops.max_pool(x, axis=1, k=2), [_t(rng, 3, 6)]),
    "resample_linear": lambda rng: (
        lambda x: ops.resample_linear(x, 7),
        [_t(rng, 4, 3)],
    ),
    "mean_all": lambda rng: (ops.mean, [_t(rng, 3, 4)]),
    "mean_axis0": lambda rng: (lambda x: ops.mean(x, axis=0), [_t(rng, 4, 3)]),
    "sdpa": lambda rng: (ops.sdpa, [_t(rng, 3, 4), _t(rng, 5, 4), _t(rng, 5, 4)]),
    "multi_head_attention": lambda rng: (
        lambda q, k, v: ops.multi_head_attention(q, k, v, heads=2),
        [_t(rng, 3, 6), _t(rng, 5, 6), _t(rng, 5, 6)],
    ),
    "binary_cross_entropy": lambda rng: (
        ops.binary_cross_entropy,
        [_t(rng, 2, 6, lo=0.05, hi=0.95), _t(rng, 2, 6, lo=0.0, hi=1.0)],
    ),
    "squared_error": lambda rng: (ops.squared_error, [_t(rng, 3, 4), _t(rng, 3, 4)]),
    "transpose": lambda rng: (ops.transpose, [_t(rng, 3, 4)]),
    "reshape": lambda rng: (lambda x: ops.reshape(x, (2, 6)), [_t(rng, 3, 4)]),
    "slice_cols": lambda rng: (lambda x: ops.slice_cols(x, 1, 4), [_t(rng, 3, 5)]),
    "concat_cols": lambda rng: (
        lambda a, b: ops.concat_cols([a, b]),
        [_t(rng, 3, 2), _t(rng, 3, 4)],
    ),
}


def check_kernel(name: str, n_points: int = 20, rng_salt: int = 0) -> float:
    """Worst relative error for one kernel over n_points random points.

    Points whose forward pass sits within 1e-3 of a relu/max-pool kink are
    redrawn; central differences are only meaningful where the function is
    smooth."""
    factory = KERNEL_CASES[name]
    worst = 0.0
    for point in range(n_points):
        for attempt in range(100):
            seq = np.random.SeedSequence([name_seed(name), point, rng_salt, attempt])
            rng = np.random.default_rng(seq)
            fn, inputs = factory(rng)
            if kink_margin(fn(*inputs)) > 1e-3:
                break
        worst = max(worst, gradient_check(fn, inputs, rng=rng))
    return worst


def run_kernel_suite(n_points: int = 20) -> dict[str, float]:
    """Worst relative error per kernel; the full sweep the CLI and the
    acceptance gate run."""
    return {name: check_kernel(name, n_points) for name in KERNEL_CASES}
