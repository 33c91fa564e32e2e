"""Finite-difference verification of analytic gradients.

The model is re-run in float64 and every parameter element is perturbed by
+/- ``step``; the central difference is compared with the analytic gradient.
Relative error per element is ``|a - n| / max(|a|, |n|, 1e-8)``.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from . import conv as _conv

REL_FLOOR = 1e-8
MAX_PARAMETERS = 10_000


@dataclass
class ParamCheck:
    name: str
    layer: str
    size: int
    max_rel_error: float
    max_abs_error: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    params: list[ParamCheck]

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.params)

    def layers(self) -> dict[str, tuple[float, bool]]:
        """Per layer: (max relative error over its tensors, passed)."""
        out: dict[str, tuple[float, bool]] = {}
        for p in self.params:
            err, ok = out.get(p.layer, (0.0, True))
            out[p.layer] = (max(err, p.max_rel_error), ok and p.passed)
        return out

    def format(self) -> str:
        lines = [f"gradient check (tolerance {self.tolerance:g})"]
        for layer, (err, ok) in self.layers().items():
            lines.append(f"  {layer:<8} max_rel_error={err:.3e}  {'PASS' if ok else 'FAIL'}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(loss_fn, param: np.ndarray, step: float) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. every element of ``param`` (in place)."""
    grad = np.zeros_like(param)
    flat = param.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        up = loss_fn()
        flat[idx] = orig - step
        down = loss_fn()
        flat[idx] = orig
        gflat[idx] = (up - down) / (2 * step)
    return grad


def gradient_check(model, sample, tolerance: float = 1e-3, step: float = 1e-5) -> GradCheckReport:
    """Compare analytic and finite-difference gradients of ``model``'s loss.

    ``model`` must provide ``astype``, ``parameters``, ``layer_of``,
    ``loss`` and ``loss_and_grads``; ``sample`` is ``(inputs, target, mask)``
    as accepted by those methods. Failures are reported, never raised.
    """
    m64 = model.astype(np.float64)
    inputs, target, mask = sample
    inputs = np.asarray(inputs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if m64.parameter_count > MAX_PARAMETERS:
        raise ValueError(f"model has {m64.parameter_count} parameters; finite differencing supports <= {MAX_PARAMETERS}")
    _, analytic = m64.loss_and_grads(inputs, target, mask)
    params = m64.parameters()
    checks = []
    for name, p in params.items():
        numeric = numeric_gradient(lambda: m64.loss(inputs, target, mask), p, step)
        a = analytic[name]
        rel = relative_error(a, numeric)
        max_rel = float(rel.max()) if rel.size else 0.0
        checks.append(ParamCheck(name, m64.layer_of(name), p.size, max_rel,
                                 float(np.abs(a - numeric).max()), max_rel < tolerance))
    return GradCheckReport(tolerance, checks)


def _corrupted_conv2d_backward(layer, x, grad_out, _original=_conv.conv2d_backward):
    # input gradient read one pixel off the padded grid
    grad_x, grad_w, grad_b = _original(layer, x, grad_out)
    if layer.kernel_size > 1:
        grad_x = np.roll(grad_x, 1, axis=-1)
        grad_x[..., 0] = 0
    return grad_x, grad_w, grad_b


@contextlib.contextmanager
def corrupted_backward():
    """Temporarily install a conv backward pass with an off-by-one padding bug.

    Used as a negative control: a gradient check run inside this context
    must fail.
    """
    original = _conv.conv2d_backward
    _conv.conv2d_backward = _corrupted_conv2d_backward
    try:
        yield
    finally:
        _conv.conv2d_backward = original
