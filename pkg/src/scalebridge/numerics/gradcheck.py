"""Central finite-difference gradient oracle.

Independent of the autodiff path: it only evaluates the loss.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteLossError
from .tensor import no_grad


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    n_checked: int

    def __float__(self):
        return self.max_rel_error


def _evaluate(loss_fn):
    with no_grad():
        value = float(np.asarray(loss_fn().data))
    if not np.isfinite(value):
        raise NonFiniteLossError(f"loss evaluated to {value}")
    return value


def grad_check_detail(loss_fn, params, eps=1e-5, floor=1e-8):
    """Compare analytic gradients of ``loss_fn`` with central differences.

    ``params`` is a list of ``Parameter`` or ``(name, Parameter)`` pairs;
    non-trainable entries are skipped. Relative error per entry is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        warnings.warn(f"eps={eps} is outside [1e-7, 1e-3]; expect degraded accuracy", stacklevel=2)
    named = [p if isinstance(p, tuple) else (getattr(p, "name", "") or f"param{i}", p)
             for i, p in enumerate(params)]
    named = [(n, p) for n, p in named if p.trainable]

    for _, p in named:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NonFiniteLossError(f"loss evaluated to {loss.data}")
    loss.backward()
    analytic = [p.grad.copy() for _, p in named]

    worst = (0.0, "", ())
    count = 0
    for (name, p), a in zip(named, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = _evaluate(loss_fn)
            flat[i] = orig - eps
            f_minus = _evaluate(loss_fn)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            ai = a.reshape(-1)[i]
            err = abs(ai - numeric) / max(abs(ai), abs(numeric), floor)
            count += 1
            if err > worst[0]:
                worst = (err, name, np.unravel_index(i, p.shape))
    return GradCheckResult(worst[0], worst[1], tuple(int(j) for j in worst[2]), count)


def grad_check(loss_fn, params, eps=1e-5):
    """Worst relative error between analytic and central-difference gradients."""
    return grad_check_detail(loss_fn, params, eps=eps).max_rel_error
