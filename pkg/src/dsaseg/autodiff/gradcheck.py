"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable, Iterable, Optional

import numpy as np

from .tensor import Tape, Tensor, backward, no_grad


def _rel_err(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def grad_check(fn: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max over elements of ``|analytic - central difference| / max(1, |analytic|)``.

    ``fn`` must map a tensor to a scalar tensor. ``x`` should be float64.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    t = Tensor(base.copy(), requires_grad=True)
    with Tape() as tape:
        out = fn(t)
        backward(out, tape)
    analytic = t.grad if t.grad is not None else np.zeros_like(base)
    tape.clear()

    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn(Tensor(base.copy())).item()
        flat[i] = orig - eps
        fm = fn(Tensor(base.copy())).item()
        flat[i] = orig
        numeric.reshape(-1)[i] = (fp - fm) / (2 * eps)
    return _rel_err(analytic, numeric)


def param_grad_check(loss_fn: Callable[[], Tensor], params: Iterable, eps: float = 1e-5,
                     samples: Optional[int] = None, seed: int = 0) -> dict:
    """Check parameter gradients of a zero-argument scalar ``loss_fn``.

    Returns ``{param_name: max relative error}``. With ``samples`` set, only
    that many randomly chosen entries per parameter are differenced.
    """
    params = list(params)
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
        backward(loss, tape)
    tape.clear()
    rng = np.random.default_rng(seed)
    errors = {}
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        if samples is None or samples >= flat.size:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=samples, replace=False)
        num = np.empty(len(idx))
        with no_grad():
            for j, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + eps
                fp = loss_fn().item()
                flat[i] = orig - eps
                fm = loss_fn().item()
                flat[i] = orig
                num[j] = (fp - fm) / (2 * eps)
        errors[p.name] = _rel_err(analytic.reshape(-1)[idx], num)
    return errors
