"""Adam optimizer over named parameter tensors."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for one parameter group."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    names: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for p in params:
            state.m.append(np.zeros_like(p.data))
            state.v.append(np.zeros_like(p.data))
            state.names.append(p.name or f"param{len(state.names)}")
        return state


def adam_step(params, grads, state: AdamState):
    """One Adam update, in place on `params[i].data`.

    `grads` aligns with `params` (typically `[p.grad for p in params]`).
    A non-finite gradient aborts the step before touching any parameter.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise NumericError(
            f"adam_step: got {len(params)} params, {len(grads)} grads, "
            f"state tracks {len(state.m)}"
        )
    for name, g in zip(state.names, grads):
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise NumericError(f"adam_step: non-finite gradient for parameter '{name}'")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data -= (state.lr * update).astype(p.data.dtype, copy=False)


def zero_grads(params):
    for p in params:
        p.zero_grad()
