"""Theoretical error probabilities of the sample-variance receiver.

Decision regions are found by evaluating every conditional log-density on a
refinement grid over ``[0, z_max]`` and bisecting each change of winner. Each
conditional density is then integrated over each region, giving the full
confusion matrix. Integrals run in ``u = sqrt(z)`` so the ``z^(-1/2)`` endpoint
behaviour at one degree of freedom becomes a smooth integrand.

Fewer than two survivors leave the statistic undefined; those outcomes are
scored as a uniform random guess, the same rule the simulated receiver uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import detection
from .errors import DegenerateSchemeError, DomainError
from .modulation import (ModulationScheme, binary_noncentrality, binary_scheme,
                         noncentrality_from_counts)
from .specfun import (integrate, mixture_logpdf, noncentral_chi2_cdf,
                      noncentral_chi2_logpdf)

GRID_PANELS = 2048
NEAR_ZERO_POINTS = 96
BOUNDARY_RTOL = 1e-10
QUAD_RTOL = 1e-10


@dataclass(frozen=True)
class DecisionRegions:
    """Partition of ``[0, z_max]``: interval ``i`` is ``[grid[i], grid[i+1])``."""

    grid: np.ndarray
    winner: tuple
    z_max: float

    def winner_at(self, z: float) -> int:
        i = int(np.searchsorted(self.grid, z, side="right")) - 1
        return self.winner[min(max(i, 0), len(self.winner) - 1)]


@dataclass(frozen=True)
class ErrorReport:
    p_error: float
    per_symbol_confusion: np.ndarray
    quadrature_error: float


@dataclass(frozen=True)
class _Law:
    """Conditional law of z given one symbol: a finite noncentral chi-squared mixture."""

    dof: int
    log_weights: np.ndarray
    lams: np.ndarray

    def logpdf(self, z):
        if self.lams.size == 1:
            return noncentral_chi2_logpdf(z, self.dof, float(self.lams[0]))
        return mixture_logpdf(z, self.dof, self.log_weights, self.lams)

    def same_as(self, other: "_Law", rtol: float = 1e-12) -> bool:
        """True when both laws have the same components (up to rounding)."""
        if self.dof != other.dof or self.lams.size != other.lams.size:
            return False
        a = np.lexsort((np.round(self.log_weights, 9), self.lams))
        b = np.lexsort((np.round(other.log_weights, 9), other.lams))
        return (np.allclose(self.lams[a], other.lams[b], rtol=rtol, atol=0.0)
                and np.allclose(self.log_weights[a], other.log_weights[b], rtol=0.0, atol=rtol))

    def tail(self, z: float) -> float:
        w = np.exp(self.log_weights)
        sf = [1.0 - noncentral_chi2_cdf(z, self.dof, float(l)) for l in self.lams]
        return float(np.dot(w, sf))


def z_max_for(dof: int, lam_max: float) -> float:
    """Mean plus 20 standard deviations of the widest component."""
    return dof + lam_max + 20.0 * math.sqrt(2.0 * (dof + 2.0 * lam_max))


def _scheme_laws(s: ModulationScheme, M: int, sigma2: float, noisy: bool) -> list[_Law]:
    if M < 2:
        raise DomainError(f"decision regions need M >= 2, got {M}")
    if not noisy and M != s.N:
        raise DomainError(f"noiseless regions need M = N = {s.N}, got {M}")
    if M > s.N:
        raise DomainError(f"M={M} exceeds N={s.N}")
    laws = []
    for row in s.counts:
        if M == s.N:
            nc = noncentrality_from_counts(row, s.N, s.T_e, sigma2, s.q)
            laws.append(_Law(nc.dof, np.zeros(1), np.array([nc.lam])))
        else:
            log_w, lams = detection.mixture_components(row, M, s.T_e, sigma2)
            laws.append(_Law(M - 1, log_w, lams))
    return laws


def _binary_laws(N: int, N0: int, N1: int, M: int, T_e: float, sigma2: float) -> list[_Law]:
    laws = []
    for n_zero in (N0, N1):
        if M == N:
            nc = binary_noncentrality(n_zero, N, T_e, sigma2)
            laws.append(_Law(nc.dof, np.zeros(1), np.array([nc.lam])))
            continue
        ks = range(max(0, M + n_zero - N), min(n_zero, M) + 1)
        log_w = np.array([math.log(detection.hypergeom_pmf(k, N, n_zero, M)) for k in ks])
        lams = np.array([binary_noncentrality(k, M, T_e, sigma2).lam for k in ks])
        laws.append(_Law(M - 1, log_w, lams))
    return laws


def _evaluate(laws: Sequence[_Law], z: np.ndarray, muted: set) -> np.ndarray:
    L = np.stack([np.atleast_1d(law.logpdf(z)) for law in laws])
    for b in muted:
        L[b] = -np.inf
    return L


def _regions(laws: Sequence[_Law], strict: bool) -> DecisionRegions:
    dof = laws[0].dof
    lam_max = max(float(law.lams.max()) for law in laws)
    z_max = z_max_for(dof, lam_max)
    uniform = np.linspace(0.0, z_max, GRID_PANELS + 1)[1:]
    near_zero = np.geomspace(z_max * 1e-14, uniform[0], NEAR_ZERO_POINTS, endpoint=False)
    pts = np.concatenate([near_zero, uniform])

    L = _evaluate(laws, pts, set())
    q = len(laws)
    muted = set()
    for b in range(q):
        for c in range(b):
            if c not in muted and laws[b].same_as(laws[c]):
                if strict:
                    raise DegenerateSchemeError(
                        f"symbols {c} and {b} have identical conditional densities")
                muted.add(b)  # ties go to the smaller index
    for b in muted:
        L[b] = -np.inf
    win = np.argmax(L, axis=0)

    def winner(z: float) -> int:
        return int(np.argmax(_evaluate(laws, np.array([z]), muted)[:, 0]))

    def boundaries(a, wa, b, wb, out):
        while b - a > BOUNDARY_RTOL * b:
            m = 0.5 * (a + b)
            wm = winner(m)
            if wm == wa:
                a = m
            elif wm == wb:
                b = m
            else:
                boundaries(a, wa, m, wm, out)
                boundaries(m, wm, b, wb, out)
                return
        out.append((0.5 * (a + b), wb))

    breaks = [0.0]
    winners = [int(win[0])]
    for i in range(1, pts.size):
        if win[i] != win[i - 1]:
            found = []
            boundaries(pts[i - 1], int(win[i - 1]), pts[i], int(win[i]), found)
            for z, w in found:
                breaks.append(z)
                winners.append(w)
    breaks.append(z_max)
    return DecisionRegions(grid=np.array(breaks), winner=tuple(winners), z_max=z_max)


def decision_regions(s: ModulationScheme, M: int, sigma2: float, noisy: bool = False,
                     strict: bool = True) -> DecisionRegions:
    """ML decision regions of ``z`` for ``M`` received molecules.

    Boundaries are located to relative precision 1e-10; exact ties go to the
    smaller symbol. With ``strict`` (the default) two symbols with identical
    conditional densities raise :class:`DegenerateSchemeError`; otherwise the
    larger index simply never wins.
    """
    return _regions(_scheme_laws(s, M, sigma2, noisy), strict)


def _integrate_sqrt(law: _Law, lo: float, hi: float):
    f = lambda u: 2.0 * u * np.exp(law.logpdf(u * u))
    return integrate(f, math.sqrt(lo), math.sqrt(hi), rel_tol=QUAD_RTOL, abs_tol=1e-300)


def _confusion(laws: Sequence[_Law], strict: bool):
    regions = _regions(laws, strict)
    q = len(laws)
    conf = np.zeros((q, q))
    qerr = 0.0
    for b, law in enumerate(laws):
        for i, w in enumerate(regions.winner):
            res = _integrate_sqrt(law, regions.grid[i], regions.grid[i + 1])
            conf[b, w] += res.value
            qerr += res.abs_error_estimate
        tail = law.tail(regions.z_max)
        # Mass beyond z_max belongs to the last region's winner.
        conf[b, regions.winner[-1]] += tail
        qerr += tail
    return conf, qerr


def _check_priors(priors, q: int) -> np.ndarray:
    if priors is None:
        return np.full(q, 1.0 / q)
    p = np.asarray(priors, dtype=float)
    if p.shape != (q,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError(f"priors must be {q} non-negative numbers summing to 1")
    return p


def _p_error(conf: np.ndarray, priors: np.ndarray) -> float:
    off = conf * (1.0 - np.eye(conf.shape[0]))
    return float(np.clip(priors @ off.sum(axis=1), 0.0, 1.0))


def error_noiseless(s: ModulationScheme, sigma2: float, priors=None) -> ErrorReport:
    """Error probability when all ``N`` molecules arrive."""
    p = _check_priors(priors, s.q)
    conf, qerr = _confusion(_scheme_laws(s, s.N, sigma2, noisy=False), strict=True)
    return ErrorReport(_p_error(conf, p), conf, qerr)


def binomial_pmf(m: int, N: int, p_d: float) -> float:
    """P(``m`` of ``N`` molecules survive) when each is lost with probability ``p_d``."""
    if not (0 <= m <= N) or not (0.0 <= p_d <= 1.0):
        raise DomainError(f"invalid binomial arguments m={m}, N={N}, p_d={p_d}")
    if p_d == 0.0:
        return 1.0 if m == N else 0.0
    if p_d == 1.0:
        return 1.0 if m == 0 else 0.0
    log_c = math.lgamma(N + 1) - math.lgamma(m + 1) - math.lgamma(N - m + 1)
    return math.exp(log_c + (N - m) * math.log(p_d) + m * math.log1p(-p_d))


def _noisy_report(N: int, q: int, p_d: float, priors: np.ndarray,
                  laws_for: Callable[[int], Sequence[_Law]],
                  noiseless: Optional[Callable[[], tuple]] = None) -> ErrorReport:
    if not 0.0 <= p_d <= 1.0:
        raise DomainError(f"p_d must lie in [0, 1], got {p_d}")
    conf = np.zeros((q, q))
    qerr = 0.0
    for M in range(N + 1):
        w = binomial_pmf(M, N, p_d)
        if w == 0.0:
            continue
        if M < 2:
            conf += w * np.full((q, q), 1.0 / q)
            continue
        if M == N and noiseless is not None:
            c, e = noiseless()
        else:
            c, e = _confusion(laws_for(M), strict=False)
        conf += w * c
        qerr += w * e
    return ErrorReport(_p_error(conf, priors), conf, qerr)


def error_noisy(s: ModulationScheme, sigma2: float, p_d: float, priors=None) -> ErrorReport:
    """Error probability averaged over the binomial number of survivors."""
    p = _check_priors(priors, s.q)
    full = lambda: _confusion(_scheme_laws(s, s.N, sigma2, noisy=False), strict=True)
    return _noisy_report(s.N, s.q, p_d, p,
                         lambda M: _scheme_laws(s, M, sigma2, noisy=True), full)


def binary_error(N: int, N0: int, N1: int, T_e: float, sigma2: float, p_d: float = 0.0,
                 priors=None) -> ErrorReport:
    """Binary error probability from the two-slot formulas alone.

    Shares only the region/quadrature engine with :func:`error_noisy`; the
    densities come from the univariate hypergeometric law.
    """
    binary_scheme(N, N0, N1, T_e)  # validates the pair
    p = _check_priors(priors, 2)
    full = lambda: _confusion(_binary_laws(N, N0, N1, N, T_e, sigma2), strict=True)
    return _noisy_report(N, 2, p_d, p,
                         lambda M: _binary_laws(N, N0, N1, M, T_e, sigma2), full)


def optimize_binary_split(N: int, T_e: float, sigma2: float, p_d: float = 0.0,
                          priors=None, rel_tie: float = 1e-8):
    """Exhaustive search for the binary split with the smallest error probability.

    ``N0`` is returned in canonical form ``N0 >= N - N0`` (its time reversal is
    equivalent). Error probabilities within ``rel_tie`` are ties, resolved by the
    larger noncentrality gap, then the larger ``N0``, then the smaller ``N1``.

    Returns ``(N0, N1, p_error)``.
    """
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    p = _check_priors(priors, 2)
    cache: dict = {}
    candidates = []
    for n0 in range((N + 1) // 2, N + 1):
        for n1 in range(N + 1):
            if n1 == n0 or n1 == N - n0:
                continue
            # P_e depends on the pair only through the two noncentralities.
            key = (min(n0, N - n0), min(n1, N - n1))
            if key not in cache:
                if p_d == 0.0:
                    rep = error_noiseless(binary_scheme(N, n0, n1, T_e), sigma2, p)
                else:
                    rep = error_noisy(binary_scheme(N, n0, n1, T_e), sigma2, p_d, p)
                cache[key] = rep.p_error
            gap = abs(n0 * (N - n0) - n1 * (N - n1))
            candidates.append((cache[key], gap, n0, n1))
    best_pe = min(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] <= best_pe * (1.0 + rel_tie) + 1e-300]
    pe, _, n0, n1 = min(tied, key=lambda c: (-c[1], -c[2], c[3]))
    return n0, n1, pe
