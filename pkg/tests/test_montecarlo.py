import math
from dataclasses import replace

import numpy as np
import pytest

from adsv.analysis import binomial_pmf, error_noiseless, error_noisy
from adsv.channel import derive_channel
from adsv.errors import ConfigError
from adsv.modulation import (ModulationScheme, half_split_scheme, interval_scheme,
                             ppm_scheme)
from adsv.montecarlo import (Detector, ErrorEstimate, TrialConfig, run_trials, sweep,
                             theory_error, with_axis_value)

S2 = derive_channel("capillary").sigma2


def base(**kw):
    args = dict(scheme=half_split_scheme(4, 0.1), channel="capillary", n_trials=20000, seed=5)
    args.update(kw)
    return TrialConfig(**args)


def test_total_loss_is_a_coin_flip():
    est = run_trials(base(p_d=1.0, n_trials=100000))
    assert abs(est.rate - 0.5) <= 3 * est.stderr
    assert est.degenerate_trials == est.trials


def test_estimate_fields():
    est = run_trials(base())
    assert 0 <= est.errors <= est.trials == 20000
    assert est.rate == est.errors / est.trials
    assert est.stderr == pytest.approx(math.sqrt(est.rate * (1 - est.rate) / est.trials))
    assert ErrorEstimate.from_counts(0, 10, 0).stderr == 0.0


def test_clock_offset_does_not_matter():
    rates = [run_trials(base(theta=t, n_trials=100000)) for t in (-0.3, 0.0, 0.3)]
    for a in rates:
        for b in rates:
            assert abs(a.rate - b.rate) <= 3 * a.stderr


def test_deterministic_and_worker_independent():
    cfg = base(n_trials=30000, block_size=4096, p_d=0.1)
    a = run_trials(cfg)
    assert run_trials(cfg) == a
    assert run_trials(cfg, workers=2) == a


def test_partial_last_block():
    est = run_trials(base(n_trials=10001, block_size=1000))
    assert est.trials == 10001


def test_seeds_matter():
    assert run_trials(base(seed=1)).errors != run_trials(base(seed=2)).errors


def test_stderr_is_honest():
    cfg = base(n_trials=20000)
    rates = np.array([run_trials(replace(cfg, seed=s)).rate for s in range(40)])
    reported = run_trials(cfg).stderr
    assert 0.5 * reported <= rates.std(ddof=1) <= 2 * reported
    theory = error_noiseless(cfg.scheme, S2).p_error
    assert abs(rates.mean() - theory) <= 3 * reported / math.sqrt(40)


def test_degenerate_fraction_matches_binomial_tail():
    cfg = base(p_d=0.6, n_trials=100000)
    est = run_trials(cfg)
    p = binomial_pmf(0, 4, 0.6) + binomial_pmf(1, 4, 0.6)
    sd = math.sqrt(p * (1 - p) / est.trials)
    assert abs(est.degenerate_trials / est.trials - p) <= 3 * sd


def test_priors_respected():
    cfg = base(priors=(0.2, 0.8), n_trials=200000, p_d=0.1)
    est = run_trials(cfg)
    theory = error_noisy(cfg.scheme, S2, 0.1, priors=(0.2, 0.8)).p_error
    assert abs(est.rate - theory) <= 3 * est.stderr


def test_inverse_gaussian_close_to_normal_for_capillary():
    a = run_trials(base(n_trials=100000))
    b = run_trials(base(n_trials=100000, propagation_model="InverseGaussian"))
    assert abs(a.rate - b.rate) <= 0.1 * a.rate + 3 * math.hypot(a.stderr, b.stderr)


@pytest.mark.parametrize("kw", [
    dict(detector="TI-D"),
    dict(detector="TI-ID"),
    dict(detector="SD-ML"),
    dict(detector="SD-ML", scheme=ppm_scheme(4, 0.1), p_d=0.1),
    dict(scheme=ppm_scheme(4, 0.1)),
    dict(n_trials=0),
    dict(p_d=-0.1),
    dict(priors=(0.5, 0.6)),
    dict(priors=(1.0,)),
    dict(block_size=0),
    dict(detector="ML"),
])
def test_config_errors(kw):
    with pytest.raises((ConfigError, ValueError)):
        base(**kw)


def test_unknown_channel_preset():
    with pytest.raises(ValueError):
        base(channel="aorta")


def test_baselines_run():
    ti = run_trials(base(scheme=interval_scheme(0.16), detector="TI-D", p_d=0.1))
    assert ti.degenerate_trials > 0
    sd = run_trials(base(scheme=ppm_scheme(4, 0.1), detector=Detector.SD_ML))
    assert sd.degenerate_trials == 0 and sd.rate < 0.01


def test_te_sweep_non_increasing():
    rows = sweep(base(), "Te", [0.03, 0.06, 0.1, 0.15, 0.2], theory=True)
    assert [r.value for r in rows] == [0.03, 0.06, 0.1, 0.15, 0.2]
    for a, b in zip(rows, rows[1:]):
        assert b.estimate.rate <= a.estimate.rate + 3 * math.hypot(a.estimate.stderr,
                                                                  b.estimate.stderr)
    for r in rows:
        assert abs(r.estimate.rate - r.theory) <= max(3 * r.estimate.stderr, 0.05 * r.theory)


def test_n_sweep_decreasing():
    rows = sweep(base(), "N", [2, 4, 8, 16])
    rates = [r.estimate.rate for r in rows]
    assert rates == sorted(rates, reverse=True) and len(set(rates)) == 4
    assert all(r.theory is None for r in rows)


def test_sweep_edge_cases():
    assert sweep(base(), "pd", []) == []
    with pytest.raises(ConfigError):
        sweep(base(), "q", [3])
    with pytest.raises(ConfigError):
        with_axis_value(base(scheme=interval_scheme(0.1), detector="TI-D"), "N", 4)


def test_sweep_streams_differ_per_value():
    rows = sweep(base(), "theta", [0.0, 0.0])
    assert rows[0].estimate != rows[1].estimate


def test_theory_column_only_for_variance_receiver():
    assert theory_error(base(scheme=interval_scheme(0.1), detector="TI-ID")) is None
    assert theory_error(base()) == pytest.approx(error_noiseless(half_split_scheme(4, 0.1),
                                                                 S2).p_error)


def test_q_ary_monte_carlo_runs():
    s = ModulationScheme(3, 4, 0.1, ((4, 0, 0), (2, 2, 0), (2, 0, 2)))
    est = run_trials(base(scheme=s, n_trials=50000))
    assert abs(est.rate - error_noiseless(s, S2).p_error) <= 3 * est.stderr
