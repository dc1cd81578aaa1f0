import numpy as np
import pytest

import evaluation
from core_model import (DomainError, GroundTruthSample, InsufficientDataError, JitterEstimate,
                        pixels_to_mm)


def estimates_of(pairs):
    return [JitterEstimate(q, dx, dy, 10) for q, (dx, dy) in enumerate(pairs)]


def truth_from_pixels(t, dx_px, dy_px, geom):
    x = np.concatenate(([0.0], np.cumsum(pixels_to_mm(np.asarray(dx_px, float), geom))))
    y = np.concatenate(([0.0], np.cumsum(pixels_to_mm(np.asarray(dy_px, float), geom))))
    return [GroundTruthSample(int(ti), float(xi), float(yi)) for ti, xi, yi in zip(t, x, y)]


def test_batches_inside_an_interval_are_summed():
    aggregates = evaluation.aggregate_estimates(estimates_of([(1, 0), (2, 0), (-1, 0)]), 0.01,
                                                [0, 30_000, 60_000])
    assert (aggregates[0].dx_sum, aggregates[0].dy_sum) == (2.0, 0.0)
    assert aggregates[0].n_estimates == 3
    assert (aggregates[1].dx_sum, aggregates[1].n_estimates) == (0.0, 0)


def test_interval_without_estimates_sums_to_zero():
    aggregates = evaluation.aggregate_estimates([], 0.01, [0, 30_000, 60_000])
    assert [(a.dx_sum, a.dy_sum, a.n_estimates) for a in aggregates] == [(0.0, 0.0, 0)] * 2


def test_batch_counts_per_telemetry_interval():
    gt = np.rint(np.arange(301) * 1e6 / 30).astype(np.int64)
    n_batches = int(round(10.0 / 0.0025))
    estimates = estimates_of([(1, 0)] * n_batches)
    aggregates = evaluation.aggregate_estimates(estimates, 0.0025, gt)
    counts = [a.n_estimates for a in aggregates]
    assert set(counts) == {13, 14}
    assert sum(counts) == n_batches
    assert sum(a.dx_sum for a in aggregates) == n_batches


def test_batch_ending_on_a_tick_belongs_to_the_earlier_interval():
    aggregates = evaluation.aggregate_estimates(estimates_of([(0, 0), (0, 0), (5, 0)]), 0.01,
                                                [0, 30_000, 40_000])
    assert [a.dx_sum for a in aggregates] == [5.0, 0.0]


def test_aggregation_rejects_unordered_ticks():
    with pytest.raises(DomainError):
        evaluation.aggregate_estimates([], 0.01, [0, 10, 10])


def test_perfect_estimates_score_zero(geom):
    dx = [4, -3, 0, 2, 7]
    truth = truth_from_pixels([0, 10, 20, 30, 40, 50], dx, [0] * 5, geom)
    aggregates = [evaluation.IntervalAggregate(k, 0, 0, float(v), 0.0) for k, v in enumerate(dx)]
    report = evaluation.compute_errors(aggregates, truth, geom)
    assert report.rmse_axis1 == pytest.approx(0.0, abs=1e-9)
    assert report.rmse_combined == pytest.approx(0.0, abs=1e-9)
    assert report.n_intervals == 5


def test_constant_bias_on_one_axis(geom):
    dx = [4, -3, 0, 2, 7]
    truth = truth_from_pixels([0, 10, 20, 30, 40, 50], dx, [1] * 5, geom)
    aggregates = [evaluation.IntervalAggregate(k, 0, 0, v + 1.0, 1.0) for k, v in enumerate(dx)]
    report = evaluation.compute_errors(aggregates, truth, geom, band='fast', axes='axis1')
    assert report.rmse_axis1 == pytest.approx(1.0)
    assert report.rmse_axis2 == pytest.approx(0.0, abs=1e-9)
    assert report.rmse_combined == pytest.approx(1.0)
    assert report.to_dict()['band'] == 'fast'


def test_error_combines_noise_and_bias(geom, rng):
    n = 20_000
    sigma, beta = 2.0, 3.0
    truth = truth_from_pixels(np.arange(n + 1), np.zeros(n), np.zeros(n), geom)
    errors = rng.normal(0.0, sigma, n) + beta
    aggregates = [evaluation.IntervalAggregate(k, 0, 0, float(e), 0.0)
                  for k, e in enumerate(errors)]
    report = evaluation.compute_errors(aggregates, truth, geom)
    assert report.rmse_axis1 == pytest.approx(np.hypot(sigma, beta), rel=0.05)


def test_too_few_intervals(geom):
    truth = truth_from_pixels([0, 10, 20], [1, 1], [0, 0], geom)
    with pytest.raises(InsufficientDataError):
        evaluation.compute_errors([evaluation.IntervalAggregate(0, 0, 10, 1.0, 0.0)], truth, geom)


def test_evaluate_sequence_aligns_clocks(geom):
    offset = 50_000
    t_cam = np.arange(0, 1_000_001, 40_000)
    dx = [4] * (t_cam.size - 1)
    truth = truth_from_pixels(t_cam + offset, dx, [0] * len(dx), geom)
    estimates = estimates_of([(1, 0)] * 100)
    report, aggregates = evaluation.evaluate_sequence(estimates, 0.01, truth, offset, geom,
                                                      band='medium', axes='axis1')
    assert report.n_intervals == 25
    assert report.rmse_combined == pytest.approx(0.0, abs=1e-9)
    assert all(a.n_estimates == 4 for a in aggregates)


def test_evaluate_sequence_stops_at_recording_end(geom):
    t = np.arange(0, 1_000_001, 40_000)
    truth = truth_from_pixels(t, [4] * (t.size - 1), [0] * (t.size - 1), geom)
    estimates = estimates_of([(1, 0)] * 100)
    report, _ = evaluation.evaluate_sequence(estimates, 0.01, truth, 0, geom,
                                             recording_end_us=400_000)
    assert report.n_intervals == 10


def test_evaluate_sequence_scores_from_a_start_time(geom):
    t = np.arange(0, 1_000_001, 40_000)
    truth = truth_from_pixels(t, [4] * (t.size - 1), [0] * (t.size - 1), geom)
    estimates = estimates_of([(1, 0)] * 40 + [(3, 0)] * 60)
    full, _ = evaluation.evaluate_sequence(estimates, 0.01, truth, 0, geom)
    report, aggregates = evaluation.evaluate_sequence(estimates, 0.01, truth, 0, geom,
                                                      score_from_us=400_000)
    assert full.rmse_axis1 > 0
    assert report.n_intervals == 15
    assert min(a.t_start for a in aggregates) == 400_000
    assert report.rmse_axis1 == pytest.approx(8.0)


def test_interval_frame(geom):
    truth = truth_from_pixels([0, 10, 20], [2, 3], [0, 0], geom)
    aggregates = [evaluation.IntervalAggregate(0, 0, 10, 2.0, 0.0, 1),
                  evaluation.IntervalAggregate(1, 10, 20, 1.0, 0.0, 1)]
    frame = evaluation.interval_frame(aggregates, truth, geom)
    assert list(frame['dx_est']) == [2.0, 1.0]
    np.testing.assert_allclose(frame['dx_true'], [2.0, 3.0])


#### heat maps and tables ####

def test_heatmap_of_static_run_is_a_single_bin():
    grid = evaluation.estimate_heatmap(estimates_of([(0, 0)] * 50))
    assert grid.shape == (43, 43)
    assert grid[21, 21] == 50
    assert grid.sum() == 50


def test_heatmap_conserves_mass(rng):
    pairs = [tuple(p) for p in rng.integers(-21, 22, size=(500, 2)).tolist()]
    grid = evaluation.estimate_heatmap(estimates_of(pairs))
    assert grid.sum() == 500
    dx, dy = pairs[0]
    assert grid[dy + 21, dx + 21] >= 1


def test_heatmap_grows_for_outliers():
    grid = evaluation.estimate_heatmap(estimates_of([(30, -2)]))
    assert grid.shape == (61, 61)
    frame = evaluation.heatmap_frame(grid)
    assert frame.loc[-2, 30] == 1
    assert frame.index.name == 'dy' and frame.columns.name == 'dx'


def test_results_table_layout():
    reports = [evaluation.ErrorReport(1.0, 2.0, 3.0, 10, band='fast', axes='both'),
               evaluation.ErrorReport(0.5, 0.5, 0.7, 10, band='slow', axes='axis1'),
               evaluation.ErrorReport(0.0, 0.0, 0.0, 10, band='static', axes='axis1')]
    table = evaluation.results_table(reports)
    assert list(table.index) == evaluation.ERROR_ROWS
    assert list(table.columns) == [('Axis1', 'S'), ('Both', 'F')]
    assert table[('Both', 'F')].tolist() == [1.0, 2.0, 3.0]
    assert evaluation.REFERENCE_RESULTS.shape == (3, 9)
    assert evaluation.REFERENCE_RESULTS.loc['Error combined', ('Both', 'F')] == 12.36


def test_results_table_with_reference():
    reports = [evaluation.ErrorReport(1.0, 2.0, 3.0, 10, band='fast', axes='axis1')]
    table = evaluation.results_table(reports, with_reference=True)
    assert list(table.columns) == [('synthetic', 'Axis1', 'F'), ('reference', 'Axis1', 'F')]
    assert table.loc['Error combined', ('synthetic', 'Axis1', 'F')] == 3.0
    assert table.loc['Error combined', ('reference', 'Axis1', 'F')] == 8.73
