"""Central finite-difference checks for the reverse-mode passes."""
import numpy as np

from .model import backward, forward, forward_with_cache


def directional_errors(loss_fn, params, grads, n_dirs=3, h=1e-6, seed=0):
    """Relative error of analytic vs central-difference directional derivatives.

    ``loss_fn(params) -> float`` is evaluated at ``params +- h*d`` for random
    unit-variance directions ``d``, one tensor at a time. Returns one error
    per (tensor, direction).
    """
    rng = np.random.default_rng(seed)
    errors = []
    for t, g in zip(params.tensors, grads):
        for _ in range(n_dirs):
            d = rng.standard_normal(t.shape)
            old = t.copy()
            t[...] = old + h * d
            fp = loss_fn(params)
            t[...] = old - h * d
            fm = loss_fn(params)
            t[...] = old
            fd = (fp - fm) / (2 * h)
            an = float(np.sum(g * d))
            errors.append(abs(fd - an) / max(abs(fd), abs(an), 1e-10))
    return np.array(errors)


def check_network(spec, params, x, context, seed=0, n_dirs=3, h=1e-6):
    """Worst relative error for ``sum(upstream * forward(x))`` with random upstream."""
    out, cache = forward_with_cache(spec, params, x, context)
    up = np.random.default_rng(seed).standard_normal(out.shape)
    grads = backward(spec, params, cache, up)
    errs = directional_errors(lambda p: float(np.sum(up * forward(spec, p, x, context))),
                              params, grads, n_dirs, h, seed)
    return float(errs.max())
