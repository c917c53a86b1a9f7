"""Special functions and quadrature behind the sample-variance densities.

Everything here is evaluated in log space where overflow is possible. The
modified Bessel function of the first kind is summed from its power series
with a term recursion, and replaced by an asymptotic expansion once the
argument is large (Hankel for moderate orders, Debye for large orders).

All functions accept scalars or numpy arrays for the continuous argument and
return a Python float for scalar input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammainc, logsumexp

from .errors import DomainError, QuadratureError

LOG_HALF = math.log(0.5)
LOG_2PI = math.log(2.0 * math.pi)
_LOG_SERIES_EPS = math.log(1e-17)
_HANKEL_MAX_ORDER = 10.0
_MAX_SERIES_TERMS = 2_000_000


def _scalar_or_array(x, like):
    if np.ndim(like) == 0:
        return float(np.asarray(x).reshape(()))
    return x


def log_gamma(x):
    """Natural log of the gamma function for positive, finite arguments."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"log_gamma requires finite x > 0, got {x!r}")
    if arr.ndim == 0:
        return math.lgamma(float(arr))
    return np.vectorize(math.lgamma, otypes=[float])(arr)


# ---------------------------------------------------------------------------
# Modified Bessel function of the first kind
# ---------------------------------------------------------------------------

def asymptotic_threshold(order: float) -> float:
    """Argument above which the asymptotic branch replaces the power series."""
    return max(30.0, 10.0 * abs(order))


def _log_iv_scaled_series(nu: float, y: np.ndarray) -> np.ndarray:
    # ln(e^-y I_nu(y)) from the power series, y > 0.
    half_log = np.log(0.5 * y)
    log_ratio_base = 2.0 * half_log
    log_t = nu * half_log - math.lgamma(nu + 1.0)
    log_s = log_t.copy()
    y2_4 = 0.25 * y * y
    active = np.ones(y.shape, dtype=bool)
    j = 0
    while active.any():
        j += 1
        if j > _MAX_SERIES_TERMS:
            raise ArithmeticError("Bessel series failed to converge")
        idx = np.nonzero(active)[0]
        log_t[idx] += log_ratio_base[idx] - math.log(j) - math.log(nu + j)
        log_s[idx] = np.logaddexp(log_s[idx], log_t[idx])
        # Tail after a term is bounded by term * r / (1 - r) once the ratio r
        # of consecutive terms drops below 1/2.
        decreasing = y2_4[idx] < 0.5 * (j + 1) * (nu + j + 1)
        small = (log_t[idx] - log_s[idx]) < _LOG_SERIES_EPS
        active[idx[decreasing & small]] = False
    return log_s - y


def _log_iv_scaled_hankel(nu: float, y: np.ndarray) -> np.ndarray:
    # Large-argument expansion; valid for y > max(30, 10 nu) with nu < 10.
    mu = 4.0 * nu * nu
    term = np.ones_like(y)
    total = np.ones_like(y)
    active = np.ones(y.shape, dtype=bool)
    k = 0
    while active.any() and k < 200:
        k += 1
        factor = -(mu - (2 * k - 1) ** 2) / (8.0 * k * y)
        new_term = term * factor
        growing = np.abs(new_term) > np.abs(term)
        stop = active & (growing | (new_term == 0.0))
        active &= ~stop
        total = np.where(active, total + new_term, total)
        term = np.where(active, new_term, term)
        active &= np.abs(term) > 1e-17 * np.abs(total)
    return np.log(total) - 0.5 * (LOG_2PI + np.log(y))


def _debye_u(p: np.ndarray) -> list[np.ndarray]:
    p2 = p * p
    return [
        np.ones_like(p),
        p * (3.0 - 5.0 * p2) / 24.0,
        p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0,
        p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2**2 - 425425.0 * p2**3)
        / 414720.0,
        p2 * p2 * (4465125.0 - 94121676.0 * p2 + 349922430.0 * p2**2
                   - 446185740.0 * p2**3 + 185910725.0 * p2**4) / 39813120.0,
    ]


def _log_iv_scaled_debye(nu: float, y: np.ndarray) -> np.ndarray:
    # Uniform expansion in the order; used for nu >= 10 where it is accurate
    # to ~1e-11 relative whenever y > 10 nu.
    r = np.hypot(nu, y)
    p = nu / r
    u = _debye_u(p)
    series = u[0] + u[1] / nu + u[2] / nu**2 + u[3] / nu**3 + u[4] / nu**4
    exponent = nu * nu / (r + y) + nu * np.log(y / (nu + r))
    return exponent - 0.5 * (LOG_2PI + np.log(r)) + np.log(series)


def log_bessel_i_scaled(order: float, y):
    """Return ``ln(exp(-y) * I_order(y))``.

    ``order`` must be at least -1/2. At ``y == 0`` the result is 0 for order 0,
    ``-inf`` for positive orders and ``+inf`` for order -1/2.
    """
    nu = float(order)
    if not math.isfinite(nu) or nu < -0.5:
        raise DomainError(f"Bessel order must be >= -1/2, got {order!r}")
    yy = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(yy)) or np.any(yy < 0):
        raise DomainError("Bessel argument must be finite and non-negative")
    flat = np.atleast_1d(yy).ravel()
    out = np.empty_like(flat)

    zero = flat == 0.0
    if nu == 0.0:
        out[zero] = 0.0
    elif nu > 0.0:
        out[zero] = -np.inf
    else:
        out[zero] = np.inf

    threshold = asymptotic_threshold(nu)
    series = ~zero & (flat <= threshold)
    asym = flat > threshold
    if series.any():
        out[series] = _log_iv_scaled_series(nu, flat[series])
    if asym.any():
        if nu < _HANKEL_MAX_ORDER:
            out[asym] = _log_iv_scaled_hankel(nu, flat[asym])
        else:
            out[asym] = _log_iv_scaled_debye(nu, flat[asym])
    return _scalar_or_array(out.reshape(yy.shape), yy)


def bessel_i_scaled(order: float, y):
    """Exponentially scaled modified Bessel function ``exp(-y) * I_order(y)``.

    Examples
    --------
    >>> round(bessel_i_scaled(0, 1.0), 7)
    0.4657596
    """
    return _scalar_or_array(np.exp(log_bessel_i_scaled(order, y)), y)


# ---------------------------------------------------------------------------
# Chi-squared laws
# ---------------------------------------------------------------------------

def _check_chi2_args(z, dof, lam):
    if int(dof) != dof or dof < 1:
        raise DomainError(f"degrees of freedom must be an integer >= 1, got {dof!r}")
    if not math.isfinite(lam) or lam < 0:
        raise DomainError(f"noncentrality must be finite and >= 0, got {lam!r}")
    zz = np.asarray(z, dtype=float)
    if np.any(np.isnan(zz)) or np.any(zz < 0):
        raise DomainError("chi-squared argument must be >= 0")
    return zz


def central_chi2_logpdf(z, dof: int):
    """Log-density of the central chi-squared law, with the z = 0 limits."""
    zz = _check_chi2_args(z, dof, 0.0)
    half = 0.5 * dof
    norm = half * math.log(2.0) + math.lgamma(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (half - 1.0) * np.log(zz) - 0.5 * zz - norm
    at_zero = zz == 0.0
    if np.any(at_zero):
        if dof == 1:
            fill = np.inf
        elif dof == 2:
            fill = LOG_HALF
        else:
            fill = -np.inf
        out = np.where(at_zero, fill, out)
    return _scalar_or_array(out, zz)


def noncentral_chi2_logpdf(z, dof: int, lam: float):
    """Log-density of the noncentral chi-squared law with ``dof`` degrees of freedom.

    For ``lam > 0``::

        ln f = ln(1/2) - (z + lam)/2 + (dof - 2)/4 * ln(z/lam) + ln I_{dof/2-1}(sqrt(lam z))

    The exponent ``-(z + lam)/2 + sqrt(lam z)`` is folded into
    ``-(sqrt z - sqrt lam)^2 / 2`` so nothing overflows for large arguments.
    At ``lam == 0`` the central density is returned. At ``z == 0`` the value is
    the density limit: ``+inf`` for one degree of freedom, ``ln(exp(-lam/2)/2)``
    for two, ``-inf`` otherwise.
    """
    lam = float(lam)
    zz = _check_chi2_args(z, dof, lam)
    if lam == 0.0:
        return central_chi2_logpdf(zz if zz.ndim else float(zz), dof)
    flat = np.atleast_1d(zz).ravel()
    out = np.empty_like(flat)
    pos = flat > 0.0
    if pos.any():
        zp = flat[pos]
        sz = np.sqrt(zp)
        sl = math.sqrt(lam)
        y = sz * sl
        out[pos] = (
            LOG_HALF
            - 0.5 * (sz - sl) ** 2
            + 0.25 * (dof - 2) * (np.log(zp) - math.log(lam))
            + log_bessel_i_scaled(0.5 * dof - 1.0, y)
        )
    if (~pos).any():
        out[~pos] = -0.5 * lam + central_chi2_logpdf(0.0, dof)
    return _scalar_or_array(out.reshape(zz.shape), zz)


def noncentral_chi2_pdf(z, dof: int, lam: float):
    return _scalar_or_array(np.exp(noncentral_chi2_logpdf(z, dof, lam)), z)


def _poisson_terms(mean: float, tail: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    # Indices and weights of a Poisson(mean) law, dropping < tail of the mass.
    if mean == 0.0:
        return np.array([0]), np.array([1.0])
    log_mean = math.log(mean)
    centre = int(math.floor(mean))
    log_w = lambda j: -mean + j * log_mean - math.lgamma(j + 1.0)
    hi = centre
    while True:
        r = mean / (hi + 1.0)
        if r < 1.0 and math.exp(log_w(hi)) * r / (1.0 - r) < 0.5 * tail:
            break
        hi += 1
    lo = centre
    while lo > 0:
        # Below the mode the mass under j <= lo is at most w(lo) * s / (1 - s)
        # with s = lo / mean < 1.
        s = lo / mean
        if s < 1.0 and math.exp(log_w(lo)) / (1.0 - s) < 0.5 * tail:
            break
        lo -= 1
    j = np.arange(lo, hi + 1)
    w = np.exp(np.array([log_w(float(k)) for k in j]))
    return j, w


def noncentral_chi2_cdf(z, dof: int, lam: float):
    """CDF as a Poisson(lam/2) mixture of central chi-squared CDFs.

    Terms are kept until the omitted Poisson mass is below 1e-14.
    """
    lam = float(lam)
    zz = _check_chi2_args(z, dof, lam)
    j, w = _poisson_terms(0.5 * lam)
    flat = np.atleast_1d(zz).ravel()
    shapes = 0.5 * dof + j
    vals = gammainc(shapes[None, :], 0.5 * flat[:, None]) @ w
    vals = np.clip(vals, 0.0, 1.0)
    return _scalar_or_array(vals.reshape(zz.shape), zz)


def mixture_logpdf(z, dof: int, log_weights, lams):
    """Log-density of a finite mixture of noncentral chi-squared laws."""
    zz = np.asarray(z, dtype=float)
    comps = np.stack([np.atleast_1d(noncentral_chi2_logpdf(zz, dof, lam)).ravel()
                      for lam in lams])
    lw = np.asarray(log_weights, dtype=float)[:, None]
    with np.errstate(invalid="ignore"):
        out = logsumexp(comps + lw, axis=0)
    return _scalar_or_array(out.reshape(zz.shape), zz)


# ---------------------------------------------------------------------------
# Adaptive quadrature
# ---------------------------------------------------------------------------

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
# Symmetric 15-point layout: -x0..-x6, 0, x6..x0
_NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[-2::-1]])
_W15 = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[-2::-1]])
_W7 = np.zeros(15)
_W7[[1, 3, 5]] = _WG[:3]
_W7[7] = _WG[3]
_W7[[13, 11, 9]] = _WG[:3]

MAX_DEPTH = 60
MAX_EVALUATIONS = 2_000_000
# Panels whose error estimate is within this factor of the rounding noise of
# their own K15 sum cannot be improved by bisection.
_ROUNDOFF_FACTOR = 50.0 * np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int


def _eval(f, x: np.ndarray) -> np.ndarray:
    try:
        y = np.asarray(f(x), dtype=float)
        if y.shape != x.shape:
            raise TypeError
    except (TypeError, ValueError):
        y = np.array([float(f(float(t))) for t in x.ravel()]).reshape(x.shape)
    if not np.all(np.isfinite(y)):
        raise QuadratureError("integrand returned a non-finite value")
    return y


def integrate(f: Callable, a: float, b: float, rel_tol: float = 1e-10,
              abs_tol: float = 1e-15) -> QuadratureResult:
    """Globally adaptive Gauss-Kronrod (7/15) quadrature of ``f`` over ``[a, b]``.

    ``f`` is called with arrays of nodes whenever it accepts them. Panels are
    bisected until the summed |K15 - G7| estimate is at most
    ``rel_tol * |value| + abs_tol``. Bisecting past depth 60, exceeding
    ``MAX_EVALUATIONS`` integrand calls, or stalling at rounding level raises
    :class:`QuadratureError` carrying the partial result.
    """
    if not (a < b):
        raise DomainError(f"integrate needs a < b, got [{a}, {b}]")
    if not (0 < rel_tol <= 1e-2):
        raise DomainError(f"rel_tol must lie in (0, 1e-2], got {rel_tol}")

    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    depth = np.zeros(1, dtype=int)
    vals = np.empty(0)
    errs = np.empty(0)
    floors = np.empty(0)
    evaluations = 0
    width = b - a

    new_lo, new_hi, new_depth = lo, hi, depth
    lo = np.empty(0)
    hi = np.empty(0)
    depth = np.empty(0, dtype=int)
    while True:
        centre = 0.5 * (new_lo + new_hi)
        half = 0.5 * (new_hi - new_lo)
        x = centre[:, None] + half[:, None] * _NODES[None, :]
        fx = _eval(f, x)
        evaluations += fx.size
        k15 = half * (fx @ _W15)
        g7 = half * (fx @ _W7)
        lo = np.concatenate([lo, new_lo])
        hi = np.concatenate([hi, new_hi])
        depth = np.concatenate([depth, new_depth])
        vals = np.concatenate([vals, k15])
        errs = np.concatenate([errs, np.abs(k15 - g7)])
        floors = np.concatenate([floors, _ROUNDOFF_FACTOR * half * (np.abs(fx) @ _W15)])

        total = float(np.sum(vals))
        total_err = float(np.sum(errs))
        tol = rel_tol * abs(total) + abs_tol
        if total_err <= tol:
            return QuadratureResult(total, total_err, evaluations)

        share = tol * (hi - lo) / width
        split = (errs > share) & (errs > floors)
        partial = QuadratureResult(total, total_err, evaluations)
        why = None
        if not np.any(split):
            why = "rounding noise dominates"
        elif np.any(depth[split] >= MAX_DEPTH):
            why = f"depth cap {MAX_DEPTH} reached"
        elif evaluations + 30 * int(np.count_nonzero(split)) > MAX_EVALUATIONS:
            why = f"evaluation cap {MAX_EVALUATIONS} reached"
        if why is not None:
            raise QuadratureError(
                f"{why} on [{a}, {b}] "
                f"(error estimate {total_err:.3e} > tolerance {tol:.3e})", partial)
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        new_depth = np.concatenate([depth[split], depth[split]]) + 1
        keep = ~split
        lo, hi, depth = lo[keep], hi[keep], depth[keep]
        vals, errs, floors = vals[keep], errs[keep], floors[keep]
