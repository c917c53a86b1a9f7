"""Asynchronous detection for timing-based molecular communication.

The receiver does not know the transmitter's clock. It decides from the
sample variance of arrival times, which does not depend on the clock offset.
"""

from .analysis import (DecisionRegions, ErrorReport, binary_error, decision_regions,
                       error_noiseless, error_noisy, optimize_binary_split)
from .channel import (ArrivalSet, ChannelParams, DerivedChannel, PropagationModel,
                      RngStream, apply_degradation, derive_channel, preset,
                      simulate_arrivals)
from .detection import (Decision, SufficientStatistic, baseline_sync_ml_decide,
                        baseline_ti_decide, decide_with_fallback, ml_decide, statistic)
from .errors import (ConfigError, DegenerateSchemeError, DomainError,
                     InsufficientSampleError, ModeMismatchError, QuadratureError)
from .modulation import (ModulationScheme, binary_scheme, half_split_scheme,
                         interval_scheme, ppm_scheme)
from .montecarlo import Detector, ErrorEstimate, TrialConfig, run_trials, sweep

__version__ = "0.1.0"
