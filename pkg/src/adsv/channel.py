"""Diffusion-with-drift timing channel.

A molecule released at ``x`` is observed at ``y = x + t + theta`` where ``t`` is
the first hitting time of a drifting Brownian particle (inverse Gaussian) and
``theta`` is the unknown receiver clock offset. When ``v * d >> D`` the
propagation time is close to normal with mean ``d / v`` and variance
``2 D d / v^3``.

Units follow the blood-vessel presets: micrometres and seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from .errors import DomainError


class PropagationModel(str, Enum):
    INVERSE_GAUSSIAN = "InverseGaussian"
    NORMAL_APPROX = "NormalApprox"

    @classmethod
    def parse(cls, value) -> "PropagationModel":
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        aliases = {
            "inversegaussian": cls.INVERSE_GAUSSIAN, "ig": cls.INVERSE_GAUSSIAN,
            "normalapprox": cls.NORMAL_APPROX, "normal": cls.NORMAL_APPROX,
        }
        if key not in aliases:
            raise DomainError(f"unknown propagation model {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class ChannelParams:
    """Physical channel: distance (um), drift velocity (um/s), diffusivity (um^2/s)."""

    distance_d: float
    drift_v: float
    diffusion_D: float

    def __post_init__(self):
        for name in ("distance_d", "drift_v", "diffusion_D"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")


# Hexoses in blood at body temperature.
PRESETS = {
    "capillary": ChannelParams(distance_d=7.9e2, drift_v=7.9e2, diffusion_D=242.78),
    "svc": ChannelParams(distance_d=1.2e5, drift_v=1.2e5, diffusion_D=242.78),
}


def preset(name: str) -> ChannelParams:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise DomainError(
            f"unknown channel preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


@dataclass(frozen=True)
class DerivedChannel:
    mu: float
    sigma2: float
    skewness_gamma: float
    normal_ok: bool = True

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def ig_shape(self) -> float:
        """Inverse Gaussian shape ``d^2 / (2D)``, equal to ``mu^3 / sigma2``."""
        return self.mu ** 3 / self.sigma2


def derive_channel(p: Union[ChannelParams, str], normal_threshold: float = 0.3) -> DerivedChannel:
    """Propagation-time law of a channel.

    ``normal_ok`` flags whether the skewness is small enough (below
    ``normal_threshold``) for the normal approximation to be trusted.
    """
    if isinstance(p, str):
        p = preset(p)
    d, v, D = p.distance_d, p.drift_v, p.diffusion_D
    mu = d / v
    sigma2 = 2.0 * D * d / v ** 3
    gamma = 3.0 * math.sqrt(2.0 * D / (v * d))
    return DerivedChannel(mu=mu, sigma2=sigma2, skewness_gamma=gamma,
                          normal_ok=gamma < normal_threshold)


def as_derived(ch) -> DerivedChannel:
    if isinstance(ch, DerivedChannel):
        return ch
    return derive_channel(ch)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Distinct stream ids under one seed are statistically independent
    (numpy ``SeedSequence`` spawn keys). A stream is stateful: do not share
    one instance between concurrent callers.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mask = (1 << 64) - 1
        if not (0 <= self.seed <= mask and 0 <= self.stream_id <= mask):
            raise DomainError("seed and stream_id must be 64-bit unsigned integers")
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _truncated_normal(gen: np.random.Generator, mu: float, sigma: float, size):
    t = gen.normal(mu, sigma, size)
    bad = t < 0
    # Redraw the (astronomically rare) negative propagation times.
    while np.any(bad):
        t[bad] = gen.normal(mu, sigma, int(np.count_nonzero(bad)))
        bad = t < 0
    return t


def _inverse_gaussian(gen: np.random.Generator, mu: float, shape: float, size):
    # Transformation method: one chi-square(1) variate from a normal, one
    # uniform to pick between the two roots.
    nu = gen.standard_normal(size)
    y = nu * nu
    mu_y = mu * y
    x = mu + mu * mu_y / (2.0 * shape) - (mu / (2.0 * shape)) * np.sqrt(
        4.0 * mu_y * shape + mu_y * mu_y)
    u = gen.random(size)
    return np.where(u <= mu / (mu + x), x, mu * mu / x)


def sample_propagation_time(ch, model=PropagationModel.NORMAL_APPROX, rng=None, size=None):
    """Draw propagation times.

    ``NormalApprox`` draws ``N(mu, sigma2)`` truncated at zero; ``InverseGaussian``
    draws ``IG(mu, d^2/2D)``. Returns a float when ``size`` is None.
    """
    ch = as_derived(ch)
    gen = as_generator(rng)
    model = PropagationModel.parse(model)
    n = 1 if size is None else size
    if model is PropagationModel.NORMAL_APPROX:
        out = _truncated_normal(gen, ch.mu, ch.sigma, n)
    else:
        out = _inverse_gaussian(gen, ch.mu, ch.ig_shape, n)
    if size is None:
        return float(np.asarray(out).ravel()[0])
    return out


@dataclass(frozen=True)
class ArrivalSet:
    """Observed arrival timestamps.

    ``released_origin`` is the release-slot index of each arrival; it exists for
    oracle checks only and is stripped by :meth:`hidden` before detection.
    """

    arrivals: np.ndarray
    released_origin: Optional[np.ndarray] = None

    def __post_init__(self):
        arr = np.asarray(self.arrivals, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise DomainError("arrival times must be finite")
        object.__setattr__(self, "arrivals", arr)
        if self.released_origin is not None:
            origin = np.asarray(self.released_origin, dtype=int).ravel()
            if origin.shape != arr.shape:
                raise DomainError("released_origin must match arrivals in length")
            object.__setattr__(self, "released_origin", origin)

    def __len__(self):
        return self.arrivals.size

    def hidden(self) -> "ArrivalSet":
        return ArrivalSet(self.arrivals.copy())

    def shifted(self, c: float) -> "ArrivalSet":
        return ArrivalSet(self.arrivals + c, self.released_origin)


Sampler = Callable[[DerivedChannel, int, np.random.Generator], np.ndarray]


def simulate_arrivals(scheme, symbol: int, ch, theta: float = 0.0,
                      model=PropagationModel.NORMAL_APPROX, rng=None,
                      sampler: Optional[Sampler] = None) -> ArrivalSet:
    """Arrival times of the ``N`` molecules released for ``symbol``.

    ``sampler(ch, n, generator)`` replaces the propagation draw when given.
    """
    ch = as_derived(ch)
    releases = np.asarray(scheme.release_times(symbol))
    origin = np.asarray(scheme.release_slots(symbol))
    gen = as_generator(rng)
    if sampler is None:
        t = sample_propagation_time(ch, model, gen, size=releases.size)
    else:
        t = np.asarray(sampler(ch, releases.size, gen), dtype=float)
    return ArrivalSet(releases + t + theta, origin)


def apply_degradation(a: ArrivalSet, p_d: float, rng) -> ArrivalSet:
    """Drop each arrival independently with probability ``p_d``."""
    if not (0.0 <= p_d <= 1.0):
        raise DomainError(f"degradation probability must lie in [0, 1], got {p_d!r}")
    gen = as_generator(rng)
    keep = gen.random(len(a)) >= p_d
    origin = None if a.released_origin is None else a.released_origin[keep]
    return ArrivalSet(a.arrivals[keep], origin)
