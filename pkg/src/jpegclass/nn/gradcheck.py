"""Central-difference verification of analytic gradients.

A fragment is anything with forward/backward/zero_grad/named_params/
named_grads/cast (single layers, residual blocks, whole models).  The
scalar probe loss is sum(forward(x) * R) for a fixed random R, so the
analytic gradient is just backward(R).  Finite differences are always
evaluated in f64 (on parameters rounded to the checked dtype) so the
numeric side does not drown in roundoff.
"""

from __future__ import annotations

import copy

import numpy as np


class GradCheckReport:
    def __init__(self, errors: dict, tolerance: float):
        self.errors = errors                # tensor name -> relative error
        self.tolerance = tolerance

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def failures(self):
        return {k: v for k, v in self.errors.items() if v > self.tolerance}

    def __bool__(self):
        return not self.failures

    def __repr__(self):
        return (f"GradCheckReport(max_error={self.max_error:.3g}, "
                f"tolerance={self.tolerance:g}, failures={sorted(self.failures)})")


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _forward(fragment, xs, single):
    return fragment.forward(xs[0] if single else xs)


def _tensor_err(analytic, numeric):
    scale = max(np.abs(analytic).max(initial=0), np.abs(numeric).max(initial=0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0) / scale)


def grad_check(fragment, x, dtype=np.float32, seed=0):
    """Compare analytic gradients against central differences.

    Returns a GradCheckReport covering every parameter tensor and every
    input; tolerance/step are 1e-3 at f32 and 1e-5 at f64.
    """
    single = not isinstance(x, (list, tuple))
    step = 1e-5 if dtype == np.float64 else 1e-3
    tolerance = step

    frag = copy.deepcopy(fragment).cast(dtype)
    xs = [np.asarray(a, dtype=dtype) for a in _as_list(x)]

    rng = np.random.default_rng(seed)
    y = _forward(frag, xs, single)
    r = rng.standard_normal(np.shape(y)).astype(dtype)

    frag.zero_grad()
    _forward(frag, xs, single)
    dx = frag.backward(r)
    dxs = _as_list(dx)
    analytic_params = dict(frag.named_grads())

    # numeric side: same parameter values, f64 arithmetic
    frag64 = copy.deepcopy(frag).cast(np.float64)
    xs64 = [a.astype(np.float64) for a in xs]
    r64 = r.astype(np.float64)

    def probe():
        return float(np.sum(_forward(frag64, xs64, single) * r64))

    def fd(tensor):
        out = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + step
            up = probe()
            tensor[idx] = orig - step
            down = probe()
            tensor[idx] = orig
            out[idx] = (up - down) / (2 * step)
        return out

    errors = {}
    for name, p64 in frag64.named_params():
        errors[name] = _tensor_err(analytic_params[name].astype(np.float64), fd(p64))
    for i, x64 in enumerate(xs64):
        key = "input" if single else f"input[{i}]"
        errors[key] = _tensor_err(dxs[i].astype(np.float64), fd(x64))
    return GradCheckReport(errors, tolerance)
