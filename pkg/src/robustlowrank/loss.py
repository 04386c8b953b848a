"""Loss families for robust row fitting.

Three families are provided: plain least squares ``L(s) = s**2``, the
Huber loss (quadratic core, linear tails) and the logistic loss
``L(s) = C*log(cosh(s/C))``.  All are even, convex, and have nondecreasing
first derivatives; the tuning constant ``C`` controls where the robust
families leave the quadratic regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScaleError, InputError

__all__ = [
    "LEAST_SQUARES",
    "HUBER",
    "LOGISTIC",
    "LossSpec",
    "least_squares",
    "huber",
    "logistic",
    "loss_value",
    "loss_deriv",
    "loss_second_deriv",
    "scale_adaptive_c",
]

LEAST_SQUARES = "leastsquares"
HUBER = "huber"
LOGISTIC = "logistic"

_FAMILIES = (LEAST_SQUARES, HUBER, LOGISTIC)

# Integer codes consumed by the compiled kernels.
FAMILY_CODES = {LEAST_SQUARES: 0, HUBER: 1, LOGISTIC: 2}

# Normal-consistency factor for the median absolute deviation.
MAD_NORMAL = 0.6745


@dataclass(frozen=True)
class LossSpec:
    """A loss family plus tuning constant.

    ``c`` is ignored for least squares but must still be positive so the
    spec can be passed around uniformly.
    """

    family: str
    c: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InputError(f"unknown loss family {self.family!r}; expected one of {_FAMILIES}")
        if not (np.isfinite(self.c) and self.c > 0):
            raise InputError(f"tuning constant must be positive, got {self.c}")

    @property
    def code(self) -> int:
        return FAMILY_CODES[self.family]


def least_squares() -> LossSpec:
    return LossSpec(LEAST_SQUARES)


def huber(c: float) -> LossSpec:
    return LossSpec(HUBER, c)


def logistic(c: float) -> LossSpec:
    return LossSpec(LOGISTIC, c)


def loss_value(spec: LossSpec, s):
    """L(s).  Vectorised over ``s``."""
    s = np.asarray(s, dtype=np.float64)
    if spec.family == LEAST_SQUARES:
        out = s * s
    elif spec.family == HUBER:
        a = np.abs(s)
        c = spec.c
        out = np.where(a <= c, 0.5 * s * s, c * a - 0.5 * c * c)
    else:
        # C*log(cosh(s/C)) written overflow-safely:
        # log(cosh(x)) = |x| + log1p(exp(-2|x|)) - log(2)
        x = np.abs(s) / spec.c
        out = spec.c * (x + np.log1p(np.exp(-2.0 * x)) - np.log(2.0))
    return out if out.ndim else float(out)


def loss_deriv(spec: LossSpec, s):
    """L'(s): odd and nondecreasing.  Vectorised over ``s``."""
    s = np.asarray(s, dtype=np.float64)
    if spec.family == LEAST_SQUARES:
        out = 2.0 * s
    elif spec.family == HUBER:
        out = np.clip(s, -spec.c, spec.c)
    else:
        out = np.tanh(s / spec.c)
    return out if out.ndim else float(out)


def loss_second_deriv(spec: LossSpec, s):
    """L''(s) ≥ 0, nonincreasing on the positive axis.

    The Huber second derivative at the kink |s| = C is defined as 0
    (continuation of the linear branch).
    """
    s = np.asarray(s, dtype=np.float64)
    if spec.family == LEAST_SQUARES:
        out = np.full_like(s, 2.0)
    elif spec.family == HUBER:
        out = np.where(np.abs(s) < spec.c, 1.0, 0.0)
    else:
        t = np.tanh(s / spec.c)
        out = (1.0 - t * t) / spec.c
    return out if out.ndim else float(out)


def derivative_bound(spec: LossSpec) -> float:
    """C0 with |L'(x)| <= C0*|x| and L''(x) <= C0 for all x."""
    if spec.family == LEAST_SQUARES:
        return 2.0
    return max(2.0, 1.0 / spec.c)


def scale_adaptive_c(residuals, multiplier: float = 1.205) -> float:
    """``multiplier`` times a robust scale of the residuals.

    Scale is the median absolute deviation divided by 0.6745, so it is
    consistent for the standard deviation at the normal.  The default
    multiplier 1.205 retains 95% asymptotic efficiency of the logistic
    loss at the normal distribution.
    """
    r = np.asarray(residuals, dtype=np.float64).ravel()
    if r.size == 0:
        raise InputError("empty residual sequence")
    if not np.all(np.isfinite(r)):
        raise InputError("residuals contain non-finite values")
    mad = float(np.median(np.abs(r - np.median(r))))
    scale = mad / MAD_NORMAL
    if scale <= 0.0:
        raise DegenerateScaleError("residual scale is zero; cannot set an adaptive tuning constant")
    return multiplier * scale
