"""Sample-variance maximum-likelihood detection and baseline receivers.

The receiver sees only arrival times. Their scaled sample variance
``z = (M - 1) S^2 / sigma2`` is independent of the clock offset and, for a
given release pattern, follows a noncentral chi-squared law with ``M - 1``
degrees of freedom. When molecules are lost the surviving pattern is random,
so the likelihood becomes a hypergeometric mixture of such laws.

The receiver is assumed to know ``sigma2``, ``T_e``, ``q``, ``N`` and the count
matrix. It does not need the loss probability: conditioning on the observed
``M`` makes the mixture weights independent of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .channel import ArrivalSet, DerivedChannel, as_generator
from .errors import DomainError, InsufficientSampleError, ModeMismatchError
from .modulation import (ModulationScheme, binary_noncentrality,
                         noncentrality_from_counts, spread_index)
from .specfun import mixture_logpdf, noncentral_chi2_logpdf

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SufficientStatistic:
    z: float
    M: int
    s2: float


@dataclass(frozen=True)
class Decision:
    symbol: int
    log_likelihoods: tuple
    degenerate: bool = False


def _arrivals(a) -> np.ndarray:
    if isinstance(a, ArrivalSet):
        return a.arrivals
    return np.asarray(a, dtype=float).ravel()


def sample_variance(arrivals) -> float:
    """Unbiased sample variance (divisor ``M - 1``), computed in two passes."""
    y = _arrivals(arrivals)
    if y.size < 2:
        raise InsufficientSampleError(f"sample variance needs >= 2 arrivals, got {y.size}")
    dev = y - y.mean()
    return float(dev @ dev) / (y.size - 1)


def statistic(arrivals, sigma2: float) -> SufficientStatistic:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    y = _arrivals(arrivals)
    s2 = sample_variance(y)
    M = y.size
    return SufficientStatistic(z=(M - 1) * s2 / sigma2, M=M, s2=s2)


# ---------------------------------------------------------------------------
# Survivor composition laws
# ---------------------------------------------------------------------------

def hypergeom_pmf(k: int, N: int, group: int, M: int) -> float:
    """P(k of the M survivors come from a group of ``group`` out of ``N``)."""
    if not (0 <= group <= N and 0 <= M <= N):
        raise DomainError(f"invalid hypergeometric parameters N={N}, group={group}, M={M}")
    if not max(0, M + group - N) <= k <= min(group, M):
        return 0.0
    return math.comb(group, k) * math.comb(N - group, M - k) / math.comb(N, M)


def multivariate_hypergeom_pmf(k: Sequence[int], counts_row: Sequence[int], M: int) -> float:
    """P(survivor composition ``k``) when ``M`` of ``sum(counts_row)`` survive."""
    k = [int(x) for x in k]
    row = [int(x) for x in counts_row]
    if len(k) != len(row) or any(c < 0 for c in row):
        raise DomainError("composition and counts row must be equal-length, non-negative")
    N = sum(row)
    if not 0 <= M <= N:
        raise DomainError(f"M={M} outside [0, {N}]")
    if sum(k) != M or any(kj < 0 or kj > cj for kj, cj in zip(k, row)):
        return 0.0
    num = 1
    for kj, cj in zip(k, row):
        num *= math.comb(cj, kj)
    return num / math.comb(N, M)


def compositions(counts_row: Sequence[int], M: int):
    """All survivor compositions ``k`` with ``0 <= k_j <= row_j`` and ``sum k = M``."""
    row = tuple(int(c) for c in counts_row)

    def rec(j, left):
        if j == len(row) - 1:
            if left <= row[j]:
                yield (left,)
            return
        rest = sum(row[j + 1:])
        for kj in range(max(0, left - rest), min(row[j], left) + 1):
            for tail in rec(j + 1, left - kj):
                yield (kj,) + tail

    if not 0 <= M <= sum(row):
        return []
    return list(rec(0, M))


@lru_cache(maxsize=4096)
def _row_mixture(row: tuple, M: int, T_e: float, sigma2: float):
    # Components with equal spread index share a noncentrality; merge them.
    q = len(row)
    weights: dict[int, int] = {}
    for k in compositions(row, M):
        s = spread_index(k)
        num = 1
        for kj, cj in zip(k, row):
            num *= math.comb(cj, kj)
        weights[s] = weights.get(s, 0) + num
    total = math.comb(sum(row), M)
    keys = sorted(weights)
    log_w = np.array([math.log(weights[s] / total) for s in keys])
    lams = np.array([T_e * T_e / (M * sigma2 * (q - 1) ** 2) * s for s in keys])
    return log_w, lams


def mixture_components(counts_row: Sequence[int], M: int, T_e: float, sigma2: float):
    """``(log_weights, lambdas)`` of the survivor mixture for one release row."""
    return _row_mixture(tuple(int(c) for c in counts_row), int(M), float(T_e), float(sigma2))


# ---------------------------------------------------------------------------
# Conditional densities of z
# ---------------------------------------------------------------------------

def row_logpdf_noiseless(z, counts_row: Sequence[int], T_e: float, sigma2: float):
    N = sum(counts_row)
    nc = noncentrality_from_counts(counts_row, N, T_e, sigma2)
    return noncentral_chi2_logpdf(z, nc.dof, nc.lam)


def row_logpdf_noisy(z, M: int, counts_row: Sequence[int], T_e: float, sigma2: float):
    N = sum(counts_row)
    if M < 2:
        raise InsufficientSampleError(f"need M >= 2 survivors, got {M}")
    if M > N:
        raise DomainError(f"M={M} exceeds N={N}")
    if M == N:
        return row_logpdf_noiseless(z, counts_row, T_e, sigma2)
    log_w, lams = mixture_components(counts_row, M, T_e, sigma2)
    return mixture_logpdf(z, M - 1, log_w, lams)


def conditional_logpdf_noiseless(z, s: ModulationScheme, symbol: int, sigma2: float):
    """ln f(z | symbol) when all ``N`` molecules arrive."""
    nc = s.noncentrality(symbol, sigma2)
    return noncentral_chi2_logpdf(z, nc.dof, nc.lam)


def conditional_logpdf_noisy(z, M: int, s: ModulationScheme, symbol: int, sigma2: float):
    """ln f(z | symbol, M survivors): hypergeometric mixture over survivor patterns."""
    if M < 2:
        raise InsufficientSampleError(f"need M >= 2 survivors, got {M}")
    if M > s.N:
        raise DomainError(f"M={M} exceeds N={s.N}")
    if M == s.N:
        return conditional_logpdf_noiseless(z, s, symbol, sigma2)
    row = s.counts[s._check_symbol(symbol)]
    log_w, lams = mixture_components(row, M, s.T_e, sigma2)
    return mixture_logpdf(z, M - 1, log_w, lams)


def binary_conditional_logpdf_noisy(z, M: int, N: int, n_at_zero: int, T_e: float,
                                    sigma2: float):
    """Two-slot mixture built directly from the univariate hypergeometric law.

    Independent of the q-ary path; used to cross-check it.
    """
    if M < 2:
        raise InsufficientSampleError(f"need M >= 2 survivors, got {M}")
    if M == N:
        nc = binary_noncentrality(n_at_zero, N, T_e, sigma2)
        return noncentral_chi2_logpdf(z, nc.dof, nc.lam)
    support = range(max(0, M + n_at_zero - N), min(n_at_zero, M) + 1)
    zz = np.asarray(z, dtype=float)
    terms = []
    for k in support:
        w = hypergeom_pmf(k, N, n_at_zero, M)
        lam = binary_noncentrality(k, M, T_e, sigma2).lam
        terms.append(math.log(w) + np.atleast_1d(noncentral_chi2_logpdf(zz, M - 1, lam)))
    out = logsumexp(np.stack(terms), axis=0)
    return float(out[0]) if zz.ndim == 0 else out.reshape(zz.shape)


def log_likelihoods(z, M: int, s: ModulationScheme, sigma2: float, noisy: bool = True):
    """Array of shape ``(len(z), q)`` holding ln f(z | b) for every symbol."""
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    if not noisy and M != s.N:
        raise ModeMismatchError(f"noiseless detection needs M = N = {s.N}, got M={M}")
    cols = [np.atleast_1d(conditional_logpdf_noisy(zz, M, s, b, sigma2))
            for b in range(s.q)]
    return np.stack(cols, axis=-1)


def ml_decide(stat: SufficientStatistic, s: ModulationScheme, sigma2: float,
              noisy: bool = False) -> Decision:
    """Most likely symbol given ``z``; exact ties go to the smaller index."""
    ll = log_likelihoods(stat.z, stat.M, s, sigma2, noisy)[0]
    return Decision(symbol=int(np.argmax(ll)), log_likelihoods=tuple(float(v) for v in ll))


def decide_with_fallback(arrivals, s: ModulationScheme, sigma2: float, rng) -> Decision:
    """ML decision, or a uniform random guess when fewer than two molecules arrive."""
    y = _arrivals(arrivals)
    if y.size < 2:
        guess = int(as_generator(rng).integers(s.q))
        return Decision(symbol=guess, log_likelihoods=(0.0,) * s.q, degenerate=True)
    return ml_decide(statistic(y, sigma2), s, sigma2, noisy=y.size < s.N)


def decide_batch(z: np.ndarray, M: np.ndarray, s: ModulationScheme, sigma2: float,
                 guesses: np.ndarray) -> np.ndarray:
    """Vectorised :func:`decide_with_fallback` over trials.

    ``guesses`` supplies the fallback symbol for trials with ``M < 2``.
    """
    z = np.asarray(z, dtype=float)
    M = np.asarray(M, dtype=int)
    out = np.asarray(guesses, dtype=int).copy()
    for m in np.unique(M):
        if m < 2:
            continue
        idx = np.nonzero(M == m)[0]
        ll = log_likelihoods(z[idx], int(m), s, sigma2, noisy=True)
        out[idx] = np.argmax(ll, axis=1)
    return out


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def _normal_logpdf(x, mean, sd):
    return -0.5 * ((x - mean) / sd) ** 2 - math.log(sd) - LOG_SQRT_2PI


def baseline_sync_ml_decide(arrivals, N: int, T_e: float, ch: DerivedChannel) -> Decision:
    """Synchronous ML for conventional PPM under the normal propagation model.

    Assumes zero clock offset; all ``N`` molecules leave at 0 (bit 0) or at
    ``T_e`` (bit 1). With known variance the likelihood depends on the data only
    through the mean, so the rule is ``mean > mu + T_e / 2``.
    """
    y = _arrivals(arrivals)
    if y.size != N:
        raise DomainError(f"synchronous detector expects {N} arrivals, got {y.size}")
    ybar = float(y.mean())
    sd = math.sqrt(ch.sigma2 / N)
    ll = (_normal_logpdf(ybar, ch.mu, sd), _normal_logpdf(ybar, ch.mu + T_e, sd))
    return Decision(symbol=int(ybar > ch.mu + 0.5 * T_e), log_likelihoods=ll)


def sync_decide_batch(y: np.ndarray, mu: float, T_e: float) -> np.ndarray:
    return (y.mean(axis=1) > mu + 0.5 * T_e).astype(int)


class TIVariant(str, Enum):
    DISTINGUISHABLE = "Distinguishable"
    INDISTINGUISHABLE = "Indistinguishable"


def _folded_normal_loglik(x, m, sd):
    return np.logaddexp(_normal_logpdf(x, m, sd), _normal_logpdf(x, -m, sd))


def baseline_ti_decide(arrivals, variant, labels: Optional[Sequence] = None,
                       T_e: float = 0.0, sigma2: float = 1.0, rng=None) -> Decision:
    """Two-molecule time-interval receiver.

    Bit 0 releases both molecules together, bit 1 separates them by ``T_e``.
    ``Distinguishable`` reads the signed difference between the molecule
    tagged ``"b"`` and the one tagged ``"a"``; ``Indistinguishable`` only sees the
    gap between the two arrivals. Fewer than two arrivals gives a random guess.
    """
    variant = TIVariant(variant)
    y = _arrivals(arrivals)
    if variant is TIVariant.DISTINGUISHABLE and labels is None:
        raise DomainError("distinguishable interval detection needs molecule labels")
    if y.size < 2:
        guess = int(as_generator(rng).integers(2))
        return Decision(symbol=guess, log_likelihoods=(0.0, 0.0), degenerate=True)
    if y.size > 2:
        raise DomainError(f"interval detection expects at most 2 arrivals, got {y.size}")
    sd = math.sqrt(2.0 * sigma2)
    if variant is TIVariant.DISTINGUISHABLE:
        tags = [str(t).lower() for t in labels]
        if len(tags) != 2 or sorted(tags) != ["a", "b"]:
            raise DomainError(f"expected one 'a' and one 'b' label, got {labels!r}")
        delta = y[tags.index("b")] - y[tags.index("a")]
        ll = (_normal_logpdf(delta, 0.0, sd), _normal_logpdf(delta, T_e, sd))
    else:
        gap = abs(y[1] - y[0])
        ll = (float(_folded_normal_loglik(gap, 0.0, sd)),
              float(_folded_normal_loglik(gap, T_e, sd)))
    return Decision(symbol=int(ll[1] > ll[0]), log_likelihoods=tuple(float(v) for v in ll))


def ti_decide_batch(y: np.ndarray, keep: np.ndarray, variant, T_e: float, sigma2: float,
                    guesses: np.ndarray) -> np.ndarray:
    """Vectorised interval receiver; column 0 is molecule ``a``, column 1 molecule ``b``."""
    variant = TIVariant(variant)
    sd = math.sqrt(2.0 * sigma2)
    both = keep[:, 0] & keep[:, 1]
    delta = y[:, 1] - y[:, 0]
    if variant is TIVariant.DISTINGUISHABLE:
        bit = _normal_logpdf(delta, T_e, sd) > _normal_logpdf(delta, 0.0, sd)
    else:
        gap = np.abs(delta)
        bit = _folded_normal_loglik(gap, T_e, sd) > _folded_normal_loglik(gap, 0.0, sd)
    return np.where(both, bit.astype(int), np.asarray(guesses, dtype=int))
