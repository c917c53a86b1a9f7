"""Reproducible Monte Carlo error-rate estimation.

Trials are cut into fixed-size blocks. Block ``i`` draws from
``RngStream(seed, stream_base * 2**32 + i)`` in this order:

1. transmitted symbols, from the priors;
2. propagation times, one per released molecule (row-major, trial by trial);
3. one uniform per molecule for degradation (kept when ``u >= p_d``);
4. one fallback symbol per trial, used only when detection is impossible.

Block results are summed, so an estimate depends only on the configuration,
never on how many workers ran the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from . import analysis, detection
from .channel import (ChannelParams, PropagationModel, RngStream, as_derived,
                      preset, sample_propagation_time)
from .errors import ConfigError
from .modulation import ModulationScheme, half_split_scheme, ppm_scheme

DEFAULT_BLOCK = 8192


class Detector(str, Enum):
    ADSV = "ADSV"
    SD_ML = "SD-ML"
    TI_D = "TI-D"
    TI_ID = "TI-ID"


@dataclass(frozen=True)
class TrialConfig:
    scheme: ModulationScheme
    channel: Union[ChannelParams, str]
    propagation_model: PropagationModel = PropagationModel.NORMAL_APPROX
    detector: Detector = Detector.ADSV
    p_d: float = 0.0
    theta: float = 0.0
    n_trials: int = 10_000
    seed: int = 0
    priors: Optional[tuple] = None
    block_size: int = DEFAULT_BLOCK
    stream_base: int = 0

    def __post_init__(self):
        object.__setattr__(self, "detector", Detector(self.detector))
        object.__setattr__(self, "propagation_model",
                           PropagationModel.parse(self.propagation_model))
        if isinstance(self.channel, str):
            preset(self.channel)
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")
        if not 0.0 <= self.p_d <= 1.0:
            raise ConfigError(f"p_d must lie in [0, 1], got {self.p_d}")
        if self.block_size < 1:
            raise ConfigError("block_size must be >= 1")
        if self.priors is not None:
            p = tuple(float(x) for x in self.priors)
            if len(p) != self.scheme.q or min(p) < 0 or abs(sum(p) - 1.0) > 1e-9:
                raise ConfigError(f"priors must be {self.scheme.q} probabilities summing to 1")
            object.__setattr__(self, "priors", p)
        _check_compatible(self)

    @property
    def derived(self):
        return as_derived(preset(self.channel) if isinstance(self.channel, str) else self.channel)


def _check_compatible(cfg: TrialConfig):
    s = cfg.scheme
    if cfg.detector is Detector.SD_ML:
        if s.q != 2 or s.counts != ((s.N, 0), (0, s.N)):
            raise ConfigError("SD-ML needs the conventional PPM layout (N at 0 / N at T_e)")
        if cfg.p_d != 0.0:
            raise ConfigError("SD-ML is only defined without molecule loss (p_d = 0)")
    elif cfg.detector in (Detector.TI_D, Detector.TI_ID):
        if s.q != 2 or s.counts != ((2, 0), (1, 1)):
            raise ConfigError("interval detectors need the two-molecule scheme (2,0)/(1,1)")
    elif s.allow_degenerate:
        raise ConfigError("ADSV cannot separate a degenerate scheme")


@dataclass(frozen=True)
class ErrorEstimate:
    errors: int
    trials: int
    rate: float
    stderr: float
    degenerate_trials: int

    @classmethod
    def from_counts(cls, errors: int, trials: int, degenerate: int) -> "ErrorEstimate":
        r = errors / trials
        return cls(errors, trials, r, math.sqrt(r * (1.0 - r) / trials), degenerate)


def _release_matrix(s: ModulationScheme) -> np.ndarray:
    return np.array([s.release_times(b) for b in range(s.q)])


def run_block(cfg: TrialConfig, block: int, n: int) -> tuple[int, int]:
    """Simulate ``n`` trials of block ``block``; return ``(errors, degenerate)``."""
    s = cfg.scheme
    ch = cfg.derived
    gen = RngStream(cfg.seed, cfg.stream_base * 2 ** 32 + block).generator
    priors = np.full(s.q, 1.0 / s.q) if cfg.priors is None else np.asarray(cfg.priors)

    symbols = gen.choice(s.q, size=n, p=priors)
    t = sample_propagation_time(ch, cfg.propagation_model, gen, size=(n, s.N))
    y = _release_matrix(s)[symbols] + t + cfg.theta
    keep = gen.random((n, s.N)) >= cfg.p_d
    guesses = gen.integers(s.q, size=n)

    if cfg.detector is Detector.ADSV:
        M = keep.sum(axis=1)
        safe_m = np.maximum(M, 1)
        mean = np.where(keep, y, 0.0).sum(axis=1) / safe_m
        dev = np.where(keep, y - mean[:, None], 0.0)
        z = np.einsum("ij,ij->i", dev, dev) / ch.sigma2
        decided = detection.decide_batch(z, M, s, ch.sigma2, guesses)
        degenerate = int(np.count_nonzero(M < 2))
    elif cfg.detector is Detector.SD_ML:
        decided = detection.sync_decide_batch(y, ch.mu, s.T_e)
        degenerate = 0
    else:
        variant = (detection.TIVariant.DISTINGUISHABLE if cfg.detector is Detector.TI_D
                   else detection.TIVariant.INDISTINGUISHABLE)
        decided = detection.ti_decide_batch(y, keep, variant, s.T_e, ch.sigma2, guesses)
        degenerate = int(np.count_nonzero(~(keep[:, 0] & keep[:, 1])))
    return int(np.count_nonzero(decided != symbols)), degenerate


def _blocks(cfg: TrialConfig):
    full, rest = divmod(cfg.n_trials, cfg.block_size)
    sizes = [cfg.block_size] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _run_block_args(args):
    return run_block(*args)


def run_trials(cfg: TrialConfig, workers: int = 1) -> ErrorEstimate:
    """Estimate the error rate of ``cfg.detector`` over ``cfg.n_trials`` trials."""
    jobs = [(cfg, i, n) for i, n in _blocks(cfg)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block_args, jobs))
    else:
        results = [run_block(*job) for job in jobs]
    errors = sum(r[0] for r in results)
    degenerate = sum(r[1] for r in results)
    return ErrorEstimate.from_counts(errors, cfg.n_trials, degenerate)


def theory_error(cfg: TrialConfig) -> Optional[float]:
    """Analytical error probability for ADSV configurations, else ``None``."""
    if cfg.detector is not Detector.ADSV:
        return None
    return analysis.error_noisy(cfg.scheme, cfg.derived.sigma2, cfg.p_d, cfg.priors).p_error


AXES = ("Te", "pd", "theta", "N")


def with_axis_value(cfg: TrialConfig, axis: str, value) -> TrialConfig:
    """Copy of ``cfg`` with one swept parameter replaced.

    Sweeping ``N`` rebuilds the scheme: half-split binary for ADSV, PPM for SD-ML.
    """
    if axis == "Te":
        return replace(cfg, scheme=cfg.scheme.with_T_e(float(value)))
    if axis == "pd":
        return replace(cfg, p_d=float(value))
    if axis == "theta":
        return replace(cfg, theta=float(value))
    if axis == "N":
        N = int(value)
        if cfg.detector is Detector.ADSV:
            return replace(cfg, scheme=half_split_scheme(N, cfg.scheme.T_e))
        if cfg.detector is Detector.SD_ML:
            return replace(cfg, scheme=ppm_scheme(N, cfg.scheme.T_e))
        raise ConfigError("interval detectors use exactly two molecules; cannot sweep N")
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {AXES}")


@dataclass(frozen=True)
class SweepRow:
    value: float
    estimate: ErrorEstimate
    theory: Optional[float] = None


def sweep(base: TrialConfig, axis: str, values: Sequence, theory: bool = False,
          workers: int = 1) -> list[SweepRow]:
    """One :func:`run_trials` per value, each on its own family of streams."""
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {AXES}")
    rows = []
    for i, v in enumerate(values):
        cfg = replace(with_axis_value(base, axis, v), stream_base=base.stream_base + i + 1)
        est = run_trials(cfg, workers)
        rows.append(SweepRow(value=v, estimate=est,
                             theory=theory_error(cfg) if theory else None))
    return rows
