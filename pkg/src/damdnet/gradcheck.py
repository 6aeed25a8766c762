"""Central finite-difference verification of analytic gradients.

Checks should run on float64 graphs; float32 rounding noise swamps the
1e-4 tolerances used throughout the test suite.
"""

import math

import numpy as np

from .errors import DimensionError
from .tensor import Tensor, no_grad


def finite_diff_check(f, x, h=1e-4, max_coords=None, seed=0):
    """Max relative error between analytic gradient of `f` at `x` and
    central differences.

    `f` must map a Tensor to a scalar Tensor and rebuild its graph on every
    call.  Error per coordinate is |analytic - fd| / max(1, |analytic|); the
    maximum over checked coordinates is returned.  When `max_coords` is set,
    a deterministic random subset of coordinates is checked instead of all
    of them (keeps whole-network checks tractable).  Non-finite values along
    the way yield `inf` rather than raising.
    """
    if not isinstance(x, Tensor):
        raise DimensionError("finite_diff_check: x must be a Tensor")
    x.requires_grad = True
    x.zero_grad()
    try:
        out = f(x)
    except FloatingPointError:
        return math.inf
    if out.data.size != 1:
        raise DimensionError("finite_diff_check: f must be scalar-valued")
    if not np.isfinite(out.data).all():
        return math.inf
    out.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    n = flat.size
    if max_coords is not None and max_coords < n:
        idx = np.random.default_rng(seed).choice(n, size=max_coords, replace=False)
    else:
        idx = np.arange(n)

    worst = 0.0
    ga = analytic.reshape(-1)
    with no_grad():
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = f(x).item()
            flat[i] = orig - h
            down = f(x).item()
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                return math.inf
            fd = (up - down) / (2.0 * h)
            err = abs(ga[i] - fd) / max(1.0, abs(ga[i]))
            if err > worst:
                worst = err
    return worst
