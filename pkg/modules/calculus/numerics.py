"""
Shared numerical kernels: vectorised generalised inversion of monotone
functions by bisection on the log axis, and adaptive quadrature on the
log-transformed axis with explicit divergence reporting.
"""

import logging

import numpy as np
from scipy.integrate import quad

from config import (
    BISECTION_REL_TOL, BISECTION_MAX_ITER, BRACKET_GROWTH,
    BRACKET_MAX_EXPANSIONS, QUAD_ABS_TOL, QUAD_REL_TOL, QUAD_LIMIT, FAR_LOG_Z,
)
from modules.errors import NumericError

logger = logging.getLogger(__name__)

# Accepted quadrature error when QUADPACK flags the result
_QUAD_ACCEPT_ABS = 1e-7
_QUAD_ACCEPT_REL = 1e-7


def generalized_inverse(fn, u, scale=1.0, what: str = "inverse CDF") -> np.ndarray:
    """
    Smallest y > 0 with ``fn(y) >= u``, elementwise, for a nondecreasing
    vectorised ``fn`` on (0, inf). The bracket starts at
    ``scale * GROWTH^(+-1)`` and grows geometrically; the bisection then runs
    on log y until the relative bracket width is below BISECTION_REL_TOL.
    """
    u = np.asarray(u, dtype=float)
    log_scale = np.log(np.broadcast_to(np.asarray(scale, dtype=float), u.shape))
    step = np.log(BRACKET_GROWTH)
    log_lo = log_scale - step
    log_hi = log_scale + step

    for _ in range(BRACKET_MAX_EXPANSIONS):
        low_bad = fn(np.exp(log_lo)) >= u
        high_bad = fn(np.exp(log_hi)) < u
        if not (low_bad.any() or high_bad.any()):
            break
        log_lo = np.where(low_bad, log_lo - step, log_lo)
        log_hi = np.where(high_bad, log_hi + step, log_hi)
    else:
        low_bad = fn(np.exp(log_lo)) >= u
        high_bad = fn(np.exp(log_hi)) < u
        n_bad = int(low_bad.sum() + high_bad.sum())
        if n_bad:
            raise NumericError(
                f"{n_bad} value(s) not bracketed after {BRACKET_MAX_EXPANSIONS} "
                f"expansions by factor {BRACKET_GROWTH}",
                f"bisection bracket for {what}",
            )

    tol = np.log1p(BISECTION_REL_TOL)
    for _ in range(BISECTION_MAX_ITER):
        if np.all(log_hi - log_lo <= tol):
            break
        mid = 0.5 * (log_lo + log_hi)
        ok = fn(np.exp(mid)) >= u
        log_hi = np.where(ok, mid, log_hi)
        log_lo = np.where(ok, log_lo, mid)
    else:
        raise NumericError(
            f"bisection did not reach relative width {BISECTION_REL_TOL} "
            f"in {BISECTION_MAX_ITER} iterations",
            f"bisection convergence for {what}",
        )
    return np.exp(log_hi)


def integrate_log_axis(f, lower: float = 0.0, upper: float = np.inf,
                       what: str = "integral") -> float:
    """
    Integral of scalar ``f`` over (lower, upper) after substituting z = e^t,
    so heavy-tailed and near-zero mass is resolved on equal footing.

    A non-finite integrand with |log z| <= FAR_LOG_Z raises NumericError.
    Beyond that only float over/underflow of the integrand's own factors
    (0 * inf) is expected, and those points count as 0; how many were
    dropped is logged. QUADPACK flags with a large error estimate raise too.
    """
    if upper <= lower:
        return 0.0
    t_lo = -np.inf if lower <= 0.0 else float(np.log(lower))
    t_hi = np.inf if not np.isfinite(upper) else float(np.log(upper))
    dropped = 0

    def _integrand(t: float) -> float:
        nonlocal dropped
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            z = np.exp(t)
            val = f(z) * z
        if np.isfinite(val):
            return float(val)
        if abs(t) <= FAR_LOG_Z:
            raise NumericError(f"{what} has a non-finite integrand at z = {z:.6g}",
                               "quadrature divergence")
        dropped += 1
        return 0.0

    result = quad(_integrand, t_lo, t_hi, epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL,
                  limit=QUAD_LIMIT, full_output=1)
    value, err = result[0], result[1]
    if dropped:
        logger.debug(f"[Quad] {what}: {dropped} far-end point(s) over/underflowed")
    if not np.isfinite(value):
        raise NumericError(f"{what} is not finite", "quadrature divergence")
    if len(result) == 4:
        if err > max(_QUAD_ACCEPT_ABS, _QUAD_ACCEPT_REL * abs(value)):
            raise NumericError(
                f"{what} flagged by quadrature (value {value:.6g}, error {err:.3g}): "
                f"{result[3].splitlines()[0]}",
                "quadrature divergence",
            )
        logger.debug(f"[Quad] {what}: accepted flagged result, error {err:.3g}")
    return float(value)
