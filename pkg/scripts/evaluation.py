#!/usr/bin/env python3
"""
Score jitter estimates against actuator telemetry.

Per-batch estimates are summed over each ground-truth interval (t_k, t_k+1], a batch belonging
to the interval that contains its end time, and compared with the telemetry displacement over
the same interval converted to pixels.
"""

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from core_model import (DomainError, InsufficientDataError, SensorGeometry, ceil_radius,
                        mm_to_pixels)


logger = logging.getLogger(__name__)

ERROR_ROWS = ['Error Axis1', 'Error Axis2', 'Error combined']
AXES_COLUMNS = {'axis1': 'Axis1', 'axis2': 'Axis2', 'both': 'Both'}
BAND_COLUMNS = {'slow': 'S', 'medium': 'M', 'fast': 'F'}

# Published errors on the recorded dataset, kept for reference next to synthetic results
REFERENCE_RESULTS = pd.DataFrame(
    [[6.14, 7.67, 8.19, 3.57, 2.82, 1.48, 7.82, 8.88, 8.76],
     [4.02, 2.07, 3.30, 6.36, 7.17, 8.08, 8.16, 7.78, 9.40],
     [5.61, 7.01, 8.73, 6.03, 6.39, 7.46, 8.76, 10.01, 12.36]],
    index=ERROR_ROWS,
    columns=pd.MultiIndex.from_product([list(AXES_COLUMNS.values()),
                                        list(BAND_COLUMNS.values())]))


@dataclass(frozen=True)
class IntervalAggregate:
    gt_index: int
    t_start: int
    t_end: int
    dx_sum: float
    dy_sum: float
    n_estimates: int = 0


@dataclass(frozen=True)
class ErrorReport:
    rmse_axis1: float
    rmse_axis2: float
    rmse_combined: float
    n_intervals: int
    band: str = ''
    axes: str = ''

    def to_dict(self):
        return asdict(self)


def batch_end_times(estimates, t_batch_s) -> np.ndarray:
    tb = t_batch_s * 1e6
    q = np.array([e.batch_index for e in estimates], dtype=np.int64)
    return np.rint((q + 1) * tb).astype(np.int64)


def aggregate_estimates(estimates, t_batch, gt_times) -> List[IntervalAggregate]:
    """
    Sum estimates per ground-truth interval. `t_batch` is in seconds, `gt_times` in
    microseconds on the camera clock. Estimates ending outside every interval are dropped.
    """
    gt = np.asarray(gt_times, dtype=np.int64)
    if gt.size > 1 and np.any(np.diff(gt) <= 0):
        raise DomainError('ground-truth times must be strictly increasing')
    if not t_batch > 0:
        raise DomainError('t_batch must be > 0, got %r' % t_batch)
    n = max(gt.size - 1, 0)
    dx = np.zeros(n)
    dy = np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    if estimates and n:
        k = np.searchsorted(gt, batch_end_times(estimates, t_batch), side='left') - 1
        inside = (k >= 0) & (k < n)
        np.add.at(dx, k[inside], np.array([e.dx for e in estimates], dtype=float)[inside])
        np.add.at(dy, k[inside], np.array([e.dy for e in estimates], dtype=float)[inside])
        np.add.at(count, k[inside], 1)
        if not inside.all():
            logger.debug('... %d estimates outside the ground-truth span ...',
                         int((~inside).sum()))
    return [IntervalAggregate(i, int(gt[i]), int(gt[i + 1]), float(dx[i]), float(dy[i]),
                              int(count[i]))
            for i in range(n)]


def true_displacements(truth, geom=SensorGeometry()):
    """Pixel displacement between consecutive telemetry samples, per interval."""
    x = np.array([s.x_mm for s in truth], dtype=float)
    y = np.array([s.y_mm for s in truth], dtype=float)
    return mm_to_pixels(np.diff(x), geom), mm_to_pixels(np.diff(y), geom)


def compute_errors(aggregates, truth, geom=SensorGeometry(), band='', axes='') -> ErrorReport:
    """Per-axis RMSE and the RMS length of the error vector over the covered intervals."""
    true_dx, true_dy = true_displacements(truth, geom)
    used = [a for a in aggregates if 0 <= a.gt_index < true_dx.size]
    if len(used) < 2:
        raise InsufficientDataError('need at least 2 ground-truth intervals, got %d' % len(used))
    k = np.array([a.gt_index for a in used])
    ex = np.array([a.dx_sum for a in used]) - true_dx[k]
    ey = np.array([a.dy_sum for a in used]) - true_dy[k]
    return ErrorReport(rmse_axis1=float(np.sqrt(np.mean(ex ** 2))),
                       rmse_axis2=float(np.sqrt(np.mean(ey ** 2))),
                       rmse_combined=float(np.sqrt(np.mean(ex ** 2 + ey ** 2))),
                       n_intervals=len(used), band=band, axes=axes)


def interval_frame(aggregates, truth, geom=SensorGeometry()) -> pd.DataFrame:
    """Estimated against true displacement per interval, for plotting."""
    true_dx, true_dy = true_displacements(truth, geom)
    used = [a for a in aggregates if 0 <= a.gt_index < true_dx.size]
    k = np.array([a.gt_index for a in used], dtype=np.int64)
    return pd.DataFrame({
        'gt_index': k,
        't_start_us': [a.t_start for a in used],
        't_end_us': [a.t_end for a in used],
        'n_estimates': [a.n_estimates for a in used],
        'dx_est': [a.dx_sum for a in used],
        'dy_est': [a.dy_sum for a in used],
        'dx_true': true_dx[k] if k.size else [],
        'dy_true': true_dy[k] if k.size else [],
    })


def estimate_heatmap(estimates, radius=None) -> np.ndarray:
    """
    Counts of (dx, dy) over the hypothesis grid, indexed [dy + R, dx + R]. R defaults to
    ceil(20.58) and grows to hold every estimate.
    """
    R = ceil_radius(20.58) if radius is None else int(radius)
    if estimates:
        R = max(R, max(max(abs(e.dx), abs(e.dy)) for e in estimates))
    side = 2 * R + 1
    grid = np.zeros((side, side), dtype=np.int64)
    if estimates:
        dx = np.array([e.dx for e in estimates], dtype=np.int64)
        dy = np.array([e.dy for e in estimates], dtype=np.int64)
        np.add.at(grid, (dy + R, dx + R), 1)
    return grid


def heatmap_frame(grid) -> pd.DataFrame:
    R = (grid.shape[0] - 1) // 2
    offsets = np.arange(-R, R + 1)
    return pd.DataFrame(grid, index=pd.Index(offsets, name='dy'),
                        columns=pd.Index(offsets, name='dx'))


def results_table(reports: Sequence[ErrorReport], with_reference=False) -> pd.DataFrame:
    """
    Error Axis1 / Axis2 / combined rows by (axes, band) columns; static runs are left out.
    With `with_reference` the published values for the same columns sit alongside, under a
    leading 'synthetic' / 'reference' column level.
    """
    columns = {}
    for report in reports:
        if report.axes not in AXES_COLUMNS or report.band not in BAND_COLUMNS:
            continue
        columns[(AXES_COLUMNS[report.axes], BAND_COLUMNS[report.band])] = [
            report.rmse_axis1, report.rmse_axis2, report.rmse_combined]
    order = [c for c in REFERENCE_RESULTS.columns if c in columns]
    table = pd.DataFrame({c: columns[c] for c in order}, index=ERROR_ROWS)
    if not with_reference:
        return table
    return pd.concat({'synthetic': table, 'reference': REFERENCE_RESULTS[order]}, axis=1)


def evaluate_sequence(estimates, t_batch_s, telemetry, offset_us=0, geom=SensorGeometry(),
                      band='', axes='', recording_end_us: Optional[int] = None,
                      score_from_us: Optional[int] = None):
    """
    Align telemetry onto the camera clock (t_cam = t_piezo - offset) and score the estimates,
    optionally only over intervals starting at or after `score_from_us` (camera clock).
    Returns the report and the interval aggregates that were scored.
    """
    gt_cam = np.array([s.t for s in telemetry], dtype=np.int64) - int(offset_us)
    if gt_cam.size > 2:
        gaps = np.diff(gt_cam)
        long_gaps = int((gaps > 1.5 * np.median(gaps)).sum())
        if long_gaps:
            logger.warning('... %d telemetry gaps longer than 1.5 sampling intervals ...',
                           long_gaps)
    aggregates = aggregate_estimates(estimates, t_batch_s, gt_cam)
    if estimates:
        span_end = int(batch_end_times(estimates, t_batch_s).max())
        if recording_end_us is not None:
            span_end = min(span_end, int(recording_end_us))
        aggregates = [a for a in aggregates if a.t_start >= 0 and a.t_end <= span_end]
    if score_from_us is not None:
        aggregates = [a for a in aggregates if a.t_start >= score_from_us]
    report = compute_errors(aggregates, telemetry, geom, band, axes)
    logger.info('... %s/%s: rmse axis1 %.3f, axis2 %.3f, combined %.3f over %d intervals ...',
                band or '-', axes or '-', report.rmse_axis1, report.rmse_axis2,
                report.rmse_combined, report.n_intervals)
    return report, aggregates
