"""Adam with bias correction over a :class:`~cfmsr.nets.ParamStore`."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import NumericError


@dataclass
class AdamState:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        st = cls(**hyper)
        for k, p in params.items():
            st.m[k] = np.zeros_like(p)
            st.v[k] = np.zeros_like(p)
        return st


def adam_step(state: AdamState, params, grads) -> None:
    """In-place Adam update of ``params`` and ``state``.

    Raises :class:`NumericError` naming the first parameter whose gradient is
    not finite; nothing is modified in that case.
    """
    for k, g in grads.items():
        if k not in params:
            raise KeyError(f"gradient for unknown parameter {k}")
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[k].shape} for {k}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {k!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, g in grads.items():
        p = params[k]
        dt = p.dtype.type
        m = state.m.setdefault(k, np.zeros_like(p))
        v = state.v.setdefault(k, np.zeros_like(p))
        m *= dt(b1)
        m += dt(1.0 - b1) * g
        v *= dt(b2)
        v += dt(1.0 - b2) * (g * g)
        mhat = m / dt(c1)
        vhat = v / dt(c2)
        p -= dt(state.lr) * mhat / (np.sqrt(vhat) + dt(state.eps))
