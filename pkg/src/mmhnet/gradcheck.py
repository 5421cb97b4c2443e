"""Independent finite-difference oracle for the reverse-mode tape.

The check stays deliberately dumb: central differences on the raw numpy
parameter arrays, never touching the tape that it audits.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class NondeterministicFunctionError(RuntimeError):
    """Two evaluations at identical inputs disagreed."""


def finite_diff_check(f, params: list[np.ndarray], eps: float = 1e-6,
                      max_coords_per_param: int | None = None,
                      rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` maps a list of leaf Tensors to a scalar Tensor.  Returns the worst
    relative discrepancy over all checked coordinates, with an absolute floor
    of 1e-8 in the denominator.  The FD step is scaled per coordinate as
    ``eps * max(1, |p|)`` to balance truncation against round-off.

    ``max_coords_per_param`` subsamples coordinates (seeded via ``rng``) so
    large models stay checkable in bounded time.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = [np.asarray(p, dtype=np.float64) for p in params]

    def eval_scalar(arrays):
        leaves = [Tensor(a) for a in arrays]
        out = f(leaves)
        if out.size != 1:
            raise ValueError("f must return a scalar")
        return float(out.data)

    base = eval_scalar(params)
    if eval_scalar(params) != base:
        raise NondeterministicFunctionError("f returned different values on identical inputs")

    leaves = [Tensor(p, requires_grad=True) for p in params]
    loss = f(leaves)
    loss.backward()
    analytic = [np.zeros_like(p) if leaf.grad is None else leaf.grad
                for p, leaf in zip(params, leaves)]

    worst = 0.0
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        n = flat.size
        coords = np.arange(n)
        if max_coords_per_param is not None and n > max_coords_per_param:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(n, size=max_coords_per_param, replace=False)
        g_flat = analytic[pi].reshape(-1)
        for c in coords:
            h = eps * max(1.0, abs(flat[c]))
            bumped = [q.copy() for q in params]
            bumped[pi].reshape(-1)[c] = flat[c] + h
            fp = eval_scalar(bumped)
            bumped[pi].reshape(-1)[c] = flat[c] - h
            fm = eval_scalar(bumped)
            fd = (fp - fm) / (2.0 * h)
            denom = max(abs(fd), abs(g_flat[c]), 1e-8)
            worst = max(worst, abs(fd - g_flat[c]) / denom)
    return worst
