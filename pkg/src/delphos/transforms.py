"""Attribute transformations available to utility specifications.

Three functional forms: identity, log(1+x), and the Box-Cox power
transform (x^lam - 1)/lam whose shape parameter is estimated jointly
with the taste coefficients.
"""

from __future__ import annotations

import numpy as np

LINEAR = "linear"
LOG1P = "log1p"
BOXCOX = "boxcox"

#: Canonical ordering used for action enumeration and state encoding.
TRANSFORMS = (LINEAR, LOG1P, BOXCOX)

# Below this magnitude the Box-Cox transform is evaluated at its
# lam -> 0 limit, ln(x).
_LAM_EPS = 1e-8


def apply_transform(kind: str, x, lam: float = 1.0):
    """Evaluate a transformation elementwise.

    ``x`` may be a scalar or ndarray. Box-Cox requires strictly positive
    input; callers shift non-positive attributes beforehand.
    """
    x = np.asarray(x, dtype=float)
    if kind == LINEAR:
        return x
    if kind == LOG1P:
        if np.any(x < 0):
            raise ValueError("log1p transform requires x >= 0")
        return np.log1p(x)
    if kind == BOXCOX:
        if np.any(x <= 0):
            raise ValueError("boxcox transform requires strictly positive x")
        if abs(lam) < _LAM_EPS:
            return np.log(x)
        # expm1 keeps (x^lam - 1) accurate when lam*ln(x) is tiny.
        return np.expm1(lam * np.log(x)) / lam
    raise ValueError(f"unknown transformation {kind!r}")


def transform_dlambda(x, lam: float):
    """d/dlam of the Box-Cox transform, (lam*x^lam*ln x - x^lam + 1)/lam^2.

    Evaluated as (ln x)^2 * g(u) with u = lam*ln(x) and
    g(u) = (u*e^u - expm1(u))/u^2, whose series around u=0 avoids the
    catastrophic cancellation of the raw formula; g(0) = 1/2 gives the
    analytic limit (ln x)^2 / 2.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("boxcox derivative requires strictly positive x")
    logx = np.log(x)
    u = lam * logx
    small = np.abs(u) < 1e-4
    g = np.empty_like(u)
    us = u[small]
    g[small] = 0.5 + us / 3.0 + us**2 / 8.0 + us**3 / 30.0
    ub = u[~small]
    g[~small] = (ub * np.exp(ub) - np.expm1(ub)) / ub**2
    out = logx**2 * g
    return out if out.ndim else float(out)
