"""Time-based modulation: release-count schemes and their noncentralities.

Symbol ``b`` of a q-ary scheme releases ``counts[b][j]`` molecules at slot time
``j * T_e / (q - 1)``. The binary scheme is the ``q = 2`` case with rows
``(N0, N - N0)`` and ``(N1, N - N1)``.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateSchemeError, DomainError, InsufficientSampleError


@dataclass(frozen=True)
class Noncentrality:
    lam: float
    dof: int

    def __post_init__(self):
        if not (self.lam >= 0):
            raise DomainError(f"noncentrality must be >= 0, got {self.lam}")
        if self.dof < 1:
            raise DomainError(f"degrees of freedom must be >= 1, got {self.dof}")


def spread_index(k: Sequence[int]) -> int:
    """Integer ``sum_{j>i} k_j k_i (j - i)^2``; zero iff all mass sits in one slot."""
    total = 0
    for j in range(1, len(k)):
        kj = k[j]
        if kj == 0:
            continue
        for i in range(j):
            total += kj * k[i] * (j - i) ** 2
    return total


def noncentrality_from_counts(k: Sequence[int], M: int, T_e: float, sigma2: float,
                              q: int | None = None) -> Noncentrality:
    """Noncentrality of ``(M-1) S^2 / sigma2`` for ``k[j]`` arrivals from slot ``j``.

    ``lam = T_e^2 / (M sigma2 (q-1)^2) * sum_{j>i} k_j k_i (j-i)^2`` with
    ``M - 1`` degrees of freedom. ``q`` defaults to ``len(k)``.
    """
    k = [int(x) for x in k]
    q = len(k) if q is None else int(q)
    if q < 2 or len(k) != q:
        raise DomainError(f"count vector of length {len(k)} does not match q={q}")
    if any(x < 0 for x in k):
        raise DomainError("counts must be non-negative")
    if sum(k) != M:
        raise DomainError(f"counts sum to {sum(k)}, expected M={M}")
    if M < 2:
        raise InsufficientSampleError(f"need at least 2 arrivals, got M={M}")
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    lam = T_e * T_e / (M * sigma2 * (q - 1) ** 2) * spread_index(k)
    return Noncentrality(lam=lam, dof=M - 1)


def binary_noncentrality(n0: int, N: int, T_e: float, sigma2: float) -> Noncentrality:
    """Two-slot noncentrality ``n0 (N - n0) T_e^2 / (N sigma2)``."""
    if not 0 <= n0 <= N:
        raise DomainError(f"n0={n0} outside [0, {N}]")
    if N < 2:
        raise InsufficientSampleError(f"need at least 2 arrivals, got N={N}")
    return Noncentrality(lam=n0 * (N - n0) * T_e ** 2 / (N * sigma2), dof=N - 1)


@dataclass(frozen=True)
class ModulationScheme:
    """Release-count matrix of a q-ary time-based scheme.

    Rows must sum to ``N``. Rows that coincide or are time reversals of each
    other produce the same sample-variance law and are rejected unless
    ``allow_degenerate`` is set (used for conventional PPM baselines).
    """

    q: int
    N: int
    T_e: float
    counts: tuple
    allow_degenerate: bool = False

    def __post_init__(self):
        counts = tuple(tuple(int(c) for c in row) for row in self.counts)
        object.__setattr__(self, "counts", counts)
        if self.q < 2:
            raise DomainError(f"q must be >= 2, got {self.q}")
        if self.N < 2:
            raise DomainError(f"N must be >= 2, got {self.N}")
        if not (self.T_e > 0 and math.isfinite(self.T_e)):
            raise DomainError(f"T_e must be positive, got {self.T_e}")
        if len(counts) != self.q or any(len(row) != self.q for row in counts):
            raise DomainError(f"counts must be a {self.q}x{self.q} matrix")
        for b, row in enumerate(counts):
            if any(c < 0 for c in row):
                raise DomainError(f"row {b} has negative counts")
            if sum(row) != self.N:
                raise DomainError(f"row {b} sums to {sum(row)}, expected N={self.N}")
        if not self.allow_degenerate:
            for b in range(self.q):
                for c in range(b):
                    if counts[b] == counts[c] or counts[b] == counts[c][::-1]:
                        raise DegenerateSchemeError(
                            f"rows {c} and {b} are identical or time-reversed: "
                            f"{counts[c]} vs {counts[b]}")

    def slot_time(self, j: int) -> float:
        return j * self.T_e / (self.q - 1)

    def _check_symbol(self, symbol) -> int:
        try:
            s = operator.index(symbol)
        except TypeError:
            raise DomainError(f"symbol must be an integer, got {symbol!r}") from None
        if not 0 <= s < self.q:
            raise DomainError(f"symbol {symbol!r} outside [0, {self.q})")
        return s

    def release_slots(self, symbol: int) -> list[int]:
        s = self._check_symbol(symbol)
        return [j for j, c in enumerate(self.counts[s]) for _ in range(c)]

    def release_times(self, symbol: int) -> list[float]:
        return [self.slot_time(j) for j in self.release_slots(symbol)]

    def noncentrality(self, symbol: int, sigma2: float) -> Noncentrality:
        s = self._check_symbol(symbol)
        return noncentrality_from_counts(self.counts[s], self.N, self.T_e,
                                         sigma2, self.q)

    def with_T_e(self, T_e: float) -> "ModulationScheme":
        return ModulationScheme(self.q, self.N, T_e, self.counts, self.allow_degenerate)

    def to_config(self) -> dict:
        return {
            "q": str(self.q),
            "N": str(self.N),
            "Te": repr(float(self.T_e)),
            "counts": ";".join(",".join(str(c) for c in row) for row in self.counts),
        }

    @classmethod
    def from_config(cls, cfg: dict, allow_degenerate: bool = False) -> "ModulationScheme":
        rows = tuple(tuple(int(c) for c in row.split(",")) for row in cfg["counts"].split(";"))
        q = int(cfg.get("q", len(rows)))
        N = int(cfg.get("N", sum(rows[0])))
        return cls(q=q, N=N, T_e=float(cfg["Te"]), counts=rows,
                   allow_degenerate=allow_degenerate)


def binary_scheme(N: int, N0: int, N1: int, T_e: float) -> ModulationScheme:
    """Binary scheme: bit ``b`` releases ``N_b`` molecules at 0 and the rest at ``T_e``."""
    if not (0 <= N0 <= N and 0 <= N1 <= N):
        raise DomainError(f"N0={N0}, N1={N1} must lie in [0, N={N}]")
    if N1 == N0 or N1 == N - N0:
        raise DegenerateSchemeError(
            f"N0={N0}, N1={N1} give the same noncentrality for both bits")
    return ModulationScheme(q=2, N=N, T_e=T_e, counts=((N0, N - N0), (N1, N - N1)))


def half_split_scheme(N: int, T_e: float) -> ModulationScheme:
    """Binary scheme with ``N0 = N`` and ``N1 = N // 2``."""
    return binary_scheme(N, N, N // 2, T_e)


def ppm_scheme(N: int, T_e: float) -> ModulationScheme:
    """Conventional binary PPM: all molecules at 0 for bit 0, at ``T_e`` for bit 1."""
    return ModulationScheme(q=2, N=N, T_e=T_e, counts=((N, 0), (0, N)),
                            allow_degenerate=True)


def interval_scheme(T_e: float) -> ModulationScheme:
    """Two-molecule interval encoding: separation 0 for bit 0, ``T_e`` for bit 1."""
    return binary_scheme(2, 2, 1, T_e)
