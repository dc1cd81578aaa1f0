import numpy as np
import pandas as pd
import pytest

import run_band_sweep


def test_bootstrap_ci_brackets_the_mean():
    values = np.random.default_rng(0).normal(5.0, 1.0, 200)
    mean, lo, hi = run_band_sweep.bootstrap_ci(values)
    assert lo < mean < hi
    assert mean == pytest.approx(values.mean())


def test_summarize_orders_bands_and_checks_monotonicity():
    frame = pd.DataFrame({'band': ['fast'] * 3 + ['slow'] * 3 + ['medium'] * 3,
                          'rmse_combined': [9.0, 9.5, 10.0, 1.0, 1.2, 0.9, 4.0, 4.5, 5.0]})
    summary = run_band_sweep.summarize(frame)
    assert list(summary['bands']) == ['slow', 'medium', 'fast']
    assert set(summary['welch']) == {'medium_vs_slow', 'fast_vs_medium'}
    assert summary['welch']['fast_vs_medium']['t_stat'] > 0
    assert summary['monotone']
    assert not run_band_sweep.is_monotone([1.0, 3.0, 2.0])


def test_mean_reports_average_over_seeds():
    frame = pd.DataFrame({'band': ['slow', 'slow', 'fast'], 'axes': ['both'] * 3,
                          'rmse_axis1': [1.0, 3.0, 5.0], 'rmse_axis2': [2.0, 2.0, 6.0],
                          'rmse_combined': [1.5, 2.5, 5.5], 'n_intervals': [10, 12, 40]})
    reports = run_band_sweep.mean_reports(frame)
    assert [(r.band, r.axes) for r in reports] == [('slow', 'both'), ('fast', 'both')]
    assert reports[0].rmse_axis1 == pytest.approx(2.0)
    assert reports[0].n_intervals == 22


@pytest.mark.slow
def test_error_grows_from_slow_to_fast_on_each_axis():
    frame = run_band_sweep.sweep(range(5), axes='both', duration_s=8.0, stars=2,
                                 baseline_s=0.5, homing_s=0.5, refractory_us=250)
    assert frame.groupby('band').size().to_dict() == {'fast': 5, 'medium': 5, 'slow': 5}
    for metric in ('rmse_axis1', 'rmse_axis2'):
        means = frame.groupby('band')[metric].mean()
        assert means['slow'] <= means['medium'] <= means['fast'], (metric, means.to_dict())
