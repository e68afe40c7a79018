"""Finite-difference gradient verification.

`gradcheck` compares analytic gradients (one backward pass) against central
differences for every checked parameter entry and reports the worst relative
error.  Relative error uses an absolute fallback near zero so that two tiny
gradients do not blow up the ratio.  It never raises on a failed comparison;
callers inspect the report and decide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .tensor import Parameter, get_precision
from . import ops


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    tol: float
    worst_param: str = ""
    worst_index: tuple = ()
    analytic: float = 0.0
    numeric: float = 0.0
    per_param: dict = field(default_factory=dict)


def gradcheck(
    fn,
    params: list[Parameter],
    tol: float = 1e-5,
    h: float = 1e-6,
    abs_floor: float = 1e-5,
) -> GradCheckReport:
    """Check d fn() / d param for every entry of every parameter.

    `fn` must be a zero-argument callable rebuilding the scalar loss from
    the live parameter values each call (tapes are single-use).

    Entries where both gradients fall below `abs_floor` are compared
    absolutely: central differences carry noise of roughly |f|*1e-16/h, so
    ratios of near-zero gradients measure rounding, not correctness.
    """
    if get_precision() != "f64":
        raise ContractError("gradcheck requires f64 precision")

    for p in params:
        p.zero_grad()
    loss = fn()
    ops.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}
    for p in params:
        p.zero_grad()

    report = GradCheckReport(max_rel_err=0.0, passed=True, tol=tol)
    for p in params:
        worst_here = 0.0
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn().data)
            flat[i] = orig - h
            f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[p.name].reshape(-1)[i])
            denom = max(abs(a), abs(numeric))
            err = abs(a - numeric) if denom < abs_floor else abs(a - numeric) / denom
            worst_here = max(worst_here, err)
            if err > report.max_rel_err:
                report.max_rel_err = err
                report.worst_param = p.name
                report.worst_index = np.unravel_index(i, p.data.shape)
                report.analytic = a
                report.numeric = numeric
        report.per_param[p.name] = worst_here
    report.passed = report.max_rel_err <= tol
    return report
