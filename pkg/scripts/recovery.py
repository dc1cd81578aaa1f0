#!/usr/bin/env python3
"""
Jitter recovery from an event stream.

Per batch q of length t_batch:
  window   C_q = union of the current batch and the N_c batches before it
  cluster  spatial DBSCAN over C_q; each cluster F_p is one star
  support  W_q,p = the star's pixels within r of its anchor, before and after batch q
  search   integer shift (h_x, h_y) that maps most of W_q-1,p onto W_q,p
  fuse     support-weighted median of the per-star shifts

Two support modes:
  state    (default) a running contrast image integrates every event. A pixel's level above
           the lowest it has been is the star brightness it currently holds, so the supports
           are the star's core in that image at the batch start and at the batch end. The disc
           is centred on the cluster's bounding box so the whole locus of the star fits in it.
  events   the batch's own events. Least-squares lines x(t), y(t) through F_p give the centroid
           S_p at the batch end (and at the batch start for the previous batch); W is the
           cluster's events in the batch strictly within r of S_p.
"""

import collections
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg
from sklearn.cluster import DBSCAN

from core_model import (EVENT_DTYPE, DegenerateFitError, DomainError, JitterEstimate, ParseError,
                        SensorGeometry, batch_duration, ceil_radius, open_stream)


logger = logging.getLogger(__name__)

ESTIMATE_COLUMNS = ['q', 't_us', 'dx_px', 'dy_px', 'support', 'flags']
SUPPORT_MODES = ('state', 'events')
# a star core is every pixel at or above this share of the brightest level in the disc
CORE_FRACTION = 0.5
MIN_STAR_LEVEL = 3


class EstimateFlag(enum.IntFlag):
    NONE = 0
    EMPTY_BATCH = 1
    NO_CLUSTER = 2
    DEGENERATE_FIT = 4
    NO_SUPPORT = 8


def flag_names(flags):
    flags = EstimateFlag(int(flags))
    if not flags:
        return 'ok'
    return '|'.join(f.name.lower() for f in EstimateFlag if f and f in flags)


def parse_flag_names(text):
    if text in ('', 'ok'):
        return 0
    value = 0
    for name in text.split('|'):
        try:
            value |= EstimateFlag[name.upper()]
        except KeyError:
            raise ParseError('unknown estimate flag %r' % name) from None
    return int(value)


@dataclass(frozen=True)
class PipelineConfig:
    t_batch_s: float
    n_c: Optional[int] = None
    eps: float = 3.0
    min_pts: int = 5
    radius: float = 20.58
    min_support: int = 3
    support: str = 'state'

    def __post_init__(self):
        if not self.t_batch_s > 0:
            raise DomainError('t_batch must be > 0, got %r' % self.t_batch_s)
        if self.n_c is None:
            # window spans 100 ms
            object.__setattr__(self, 'n_c', max(1, math.ceil(round(0.1 / self.t_batch_s, 9))))
        if self.n_c < 1:
            raise DomainError('N_c must be >= 1, got %r' % self.n_c)
        if self.eps <= 0 or self.min_pts < 1:
            raise DomainError('need eps > 0 and min_pts >= 1')
        if self.radius <= 0:
            raise DomainError('support radius must be > 0')
        if self.min_support < 1:
            raise DomainError('min_support must be >= 1')
        if self.support not in SUPPORT_MODES:
            raise DomainError('support must be one of %s, got %r'
                              % (', '.join(SUPPORT_MODES), self.support))

    @classmethod
    def for_band(cls, band, **overrides):
        """Nyquist batch length for the band: t_batch = 1 / (2 f_max)."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        overrides.setdefault('t_batch_s', batch_duration(band.f_max))
        return cls(**overrides)

    @property
    def t_batch_us(self):
        return self.t_batch_s * 1e6

    @property
    def grid_radius(self):
        return ceil_radius(self.radius)


#### batching ####

@dataclass(frozen=True)
class EventBatch:
    q: int
    t_start_us: float
    t_end_us: float
    events: np.ndarray = field(repr=False)


def batch_stream(events, t_batch_s, duration_us=None) -> Iterator[EventBatch]:
    """
    Yield consecutive batches [q t_batch, (q+1) t_batch). Empty batches are yielded too, so q
    tracks time; the stream covers `duration_us` when given, else up to the last event.
    """
    if not t_batch_s > 0:
        raise DomainError('t_batch must be > 0, got %r' % t_batch_s)
    tb = t_batch_s * 1e6
    t = events['t']
    q = np.floor(t / tb).astype(np.int64)
    n = int(q[-1]) + 1 if t.size else 0
    if duration_us is not None:
        n = max(n, int(math.ceil(round(duration_us / tb, 9))))
    bounds = np.searchsorted(q, np.arange(n + 1), side='left')
    for i in range(n):
        yield EventBatch(i, i * tb, (i + 1) * tb, events[bounds[i]:bounds[i + 1]])


class BatchWindow:
    """The current batch plus a circular history of the N_c batches before it."""

    def __init__(self, n_c):
        if n_c < 1:
            raise DomainError('N_c must be >= 1')
        self.n_c = n_c
        self.history = collections.deque(maxlen=n_c)
        self.current = None

    def push(self, batch):
        if self.current is not None:
            self.history.append(self.current)
        self.current = batch

    @property
    def previous(self):
        return self.history[-1] if self.history else None


def window_union(window) -> np.ndarray:
    if window.current is None:
        raise DomainError('window holds no batch')
    parts = [b.events for b in window.history] + [window.current.events]
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


#### clustering ####

@dataclass(frozen=True)
class LineFit:
    """v(t) = m t + c, stored about the reference time t_ref where v(t_ref) = v_ref."""

    m: float
    c: float
    t_ref: float = 0.0
    v_ref: float = 0.0

    def __call__(self, t):
        return self.v_ref + self.m * (np.asarray(t, dtype=float) - self.t_ref)


@dataclass(frozen=True)
class Cluster:
    id: int
    events: np.ndarray = field(repr=False)
    fit_x: Optional[LineFit] = None
    fit_y: Optional[LineFit] = None


@dataclass(frozen=True)
class StarCentroid:
    x: float
    y: float


@dataclass(frozen=True)
class SupportSet:
    pixels: np.ndarray
    centroid: StarCentroid
    r: float

    def __len__(self):
        return int(self.pixels.shape[0])


def cluster_labels(events, eps, min_pts) -> np.ndarray:
    """
    DBSCAN labels over (x, y), aligned with `events`; -1 marks noise. Events are visited in
    (t, x, y) order. The clustering runs on unique pixels weighted by their event count.
    """
    if eps <= 0 or min_pts < 1:
        raise DomainError('need eps > 0 and min_pts >= 1')
    n = events.size
    if n == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((events['y'], events['x'], events['t']))
    xy = np.column_stack((events['x'][order], events['y'][order])).astype(np.int64)
    keys = xy[:, 0] * 65536 + xy[:, 1]
    _, first, inverse, counts = np.unique(keys, return_index=True, return_inverse=True,
                                          return_counts=True)
    inverse = inverse.reshape(-1)
    # unique pixels in order of first visit, so cluster ids follow the event visit order
    rank = np.argsort(first, kind='stable')
    where = np.empty_like(rank)
    where[rank] = np.arange(rank.size)
    db = DBSCAN(eps=eps, min_samples=min_pts, algorithm='kd_tree')
    db.fit(xy[first[rank]].astype(float), sample_weight=counts[rank])
    labels = np.empty(n, dtype=np.int64)
    labels[order] = db.labels_[where[inverse]]
    return labels


def cluster_events(events, eps=3.0, min_pts=5) -> Tuple[List[Cluster], np.ndarray]:
    """Split `events` into clusters (ids in visit order) and the noise set."""
    labels = cluster_labels(events, eps, min_pts)
    n_clusters = int(labels.max()) + 1 if labels.size else 0
    clusters = [Cluster(p, events[labels == p]) for p in range(n_clusters)]
    return clusters, events[labels < 0]


def fit_line(t, v) -> LineFit:
    """Least squares v = m t + c through the normal equations, with t centred first."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.size < 2 or np.ptp(t) == 0:
        raise DegenerateFitError('cannot fit a line: all %d timestamps identical' % t.size)
    t_ref = float(t.mean())
    design = np.column_stack((t - t_ref, np.ones_like(t)))
    normal = design.T @ design
    rhs = design.T @ v
    m, v_ref = linalg.solve(normal, rhs, assume_a='pos')
    return LineFit(float(m), float(v_ref - m * t_ref), t_ref, float(v_ref))


def fit_cluster_lines(cluster) -> Tuple[LineFit, LineFit]:
    ev = cluster.events if isinstance(cluster, Cluster) else cluster
    return fit_line(ev['t'], ev['x']), fit_line(ev['t'], ev['y'])


def estimate_centroid(cluster, t_q) -> StarCentroid:
    if cluster.fit_x is None or cluster.fit_y is None:
        fit_x, fit_y = fit_cluster_lines(cluster)
    else:
        fit_x, fit_y = cluster.fit_x, cluster.fit_y
    return StarCentroid(float(fit_x(t_q)), float(fit_y(t_q)))


def extract_support(batch, cluster, centroid, r) -> SupportSet:
    """Events of the cluster inside the batch, strictly within r of the centroid."""
    if r <= 0:
        raise DomainError('support radius must be > 0')
    ev = cluster.events
    if batch is None:
        in_batch = ev[:0]
    else:
        t = ev['t']
        in_batch = ev[(t >= batch.t_start_us) & (t < batch.t_end_us)]
    x = in_batch['x'].astype(float)
    y = in_batch['y'].astype(float)
    near = np.hypot(x - centroid.x, y - centroid.y) < r
    pixels = np.column_stack((in_batch['x'][near], in_batch['y'][near])).astype(np.int64)
    return SupportSet(pixels, centroid, r)


#### contrast image ####

class ContrastImage:
    """
    Net event count of every pixel since the stream started (ON +1, OFF -1) and the lowest
    value each count has reached. A pixel whose star has moved away falls back to its floor,
    so level - floor holds the stars where they are now. A star that has not moved since the
    stream started stays at its floor until it first leaves.
    """

    def __init__(self, geom=SensorGeometry()):
        self.width = geom.width
        self.height = geom.height
        self.level = np.zeros(geom.width * geom.height, dtype=np.int32)
        self.floor = np.zeros_like(self.level)

    def update(self, events):
        if events.size == 0:
            return
        x = events['x'].astype(np.int64)
        y = events['y'].astype(np.int64)
        if x.max() >= self.width or y.max() >= self.height:
            raise DomainError('event outside the %dx%d contrast image' % (self.width, self.height))
        flat = y * self.width + x
        order = np.argsort(flat, kind='stable')
        flat = flat[order]
        steps = events['p'][order].astype(np.int64)
        starts = np.flatnonzero(np.r_[True, flat[1:] != flat[:-1]])
        # running count inside every pixel's run, in time order
        running = np.cumsum(steps)
        offset = np.repeat(running[starts] - steps[starts], np.diff(np.r_[starts, flat.size]))
        running -= offset
        pix = flat[starts]
        lowest = np.minimum.reduceat(running, starts)
        total = running[np.r_[starts[1:], flat.size] - 1]
        base = self.level[pix]
        self.floor[pix] = np.minimum(self.floor[pix], base + np.minimum(lowest, 0))
        self.level[pix] = base + total

    def excess(self, centre, r) -> Tuple[np.ndarray, np.ndarray]:
        """Pixels strictly within r of `centre` and their level above floor."""
        xs = np.arange(max(math.floor(centre.x - r), 0), min(math.ceil(centre.x + r),
                                                             self.width - 1) + 1)
        ys = np.arange(max(math.floor(centre.y - r), 0), min(math.ceil(centre.y + r),
                                                             self.height - 1) + 1)
        gx, gy = np.meshgrid(xs, ys)
        gx, gy = gx.ravel(), gy.ravel()
        near = np.hypot(gx - centre.x, gy - centre.y) < r
        gx, gy = gx[near], gy[near]
        flat = gy * self.width + gx
        values = (self.level[flat] - self.floor[flat]).astype(np.int64)
        return np.column_stack((gx, gy)).astype(np.int64), values


def core_support(pixels, values, centre, r) -> SupportSet:
    """
    The star core among `pixels`: levels of at least CORE_FRACTION of the peak, each pixel
    repeated once per level. Empty when the peak is below MIN_STAR_LEVEL.
    """
    values = np.asarray(values, dtype=np.int64)
    if values.size == 0 or values.max() < MIN_STAR_LEVEL:
        return SupportSet(np.empty((0, 2), dtype=np.int64), centre, r)
    keep = values >= math.ceil(values.max() * CORE_FRACTION)
    return SupportSet(np.repeat(pixels[keep], values[keep], axis=0), centre, r)


def cluster_anchor(cluster) -> StarCentroid:
    """Centre of the cluster's bounding box."""
    ev = cluster.events if isinstance(cluster, Cluster) else cluster
    return StarCentroid(0.5 * (float(ev['x'].min()) + float(ev['x'].max())),
                        0.5 * (float(ev['y'].min()) + float(ev['y'].max())))


#### hypothesis search ####

@dataclass(frozen=True)
class SearchResult:
    hx: int
    hy: int
    support: int


def support_grid(w_prev, w_curr, grid_radius) -> np.ndarray:
    """Match counts for every shift in [-R, R]^2, indexed [hy + R, hx + R]."""
    R = int(grid_radius)
    side = 2 * R + 1
    prev = w_prev.pixels if isinstance(w_prev, SupportSet) else np.asarray(w_prev)
    curr = w_curr.pixels if isinstance(w_curr, SupportSet) else np.asarray(w_curr)
    if prev.size == 0 or curr.size == 0:
        return np.zeros((side, side), dtype=np.int64)
    # membership in W_curr is by pixel only; every W_prev event counts once per hit
    curr = np.unique(curr.reshape(-1, 2), axis=0)
    prev = prev.reshape(-1, 2)
    dx = (curr[None, :, 0] - prev[:, None, 0]).ravel()
    dy = (curr[None, :, 1] - prev[:, None, 1]).ravel()
    keep = (np.abs(dx) <= R) & (np.abs(dy) <= R)
    idx = (dy[keep] + R) * side + (dx[keep] + R)
    return np.bincount(idx, minlength=side * side).reshape(side, side)


def search_jitter(w_prev, w_curr, grid_radius, max_norm=None) -> Optional[SearchResult]:
    """
    Argmax shift between consecutive support sets; ties go to the smallest |h|^2, then the
    lexicographically smallest (h_x, h_y). With `max_norm` only shifts with |h| <= max_norm are
    hypotheses. Returns None when either set is empty.
    """
    if len(w_prev) == 0 or len(w_curr) == 0:
        return None
    R = int(grid_radius)
    grid = support_grid(w_prev, w_curr, R)
    if max_norm is not None:
        h = np.arange(-R, R + 1)
        grid = np.where(h[:, None] ** 2 + h[None, :] ** 2 > max_norm ** 2, -1, grid)
    best = grid.max()
    hy, hx = np.nonzero(grid == best)
    hx = hx - R
    hy = hy - R
    pick = np.lexsort((hy, hx, hx * hx + hy * hy))[0]
    return SearchResult(int(hx[pick]), int(hy[pick]), int(best))


def weighted_median(values, weights):
    """Lower weighted median."""
    values = np.asarray(values)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind='stable')
    cum = np.cumsum(weights[order])
    return values[order][np.searchsorted(cum, cum[-1] / 2.0, side='left')]


def fuse_estimates(results, max_norm=None):
    """
    Per-axis support-weighted median over stars; returns (dx, dy, total support). A median that
    lands outside |h| <= max_norm is replaced by the best supported star's shift.
    """
    support = [r.support for r in results]
    dx = weighted_median([r.hx for r in results], support)
    dy = weighted_median([r.hy for r in results], support)
    if max_norm is not None and dx * dx + dy * dy > max_norm ** 2:
        best = max(results, key=lambda r: r.support)
        dx, dy = best.hx, best.hy
    return int(dx), int(dy), int(sum(support))


#### pipeline ####

def estimate_from_state(batch, clusters, image, config) -> JitterEstimate:
    """Shift of each star's core between the contrast image before and after the batch."""
    anchors = [cluster_anchor(c) for c in clusters]
    before = [image.excess(a, config.radius) for a in anchors]
    image.update(batch.events)
    if not clusters:
        return JitterEstimate(batch.q, 0, 0, 0, int(EstimateFlag.NO_CLUSTER))

    results = []
    for anchor, (pixels, values) in zip(anchors, before):
        w_prev = core_support(pixels, values, anchor, config.radius)
        w_curr = core_support(*image.excess(anchor, config.radius), anchor, config.radius)
        found = search_jitter(w_prev, w_curr, config.grid_radius, max_norm=config.grid_radius)
        if found is not None and found.support >= config.min_support:
            results.append(found)

    if not results:
        return JitterEstimate(batch.q, 0, 0, 0, int(EstimateFlag.NO_SUPPORT))
    dx, dy, support = fuse_estimates(results, max_norm=config.grid_radius)
    return JitterEstimate(batch.q, dx, dy, support)


def estimate_batch(window, config, image=None) -> JitterEstimate:
    """Estimate for the window's current batch; `image` selects the contrast-image support."""
    batch = window.current
    q = batch.q
    if batch.events.size == 0:
        return JitterEstimate(q, 0, 0, 0, int(EstimateFlag.EMPTY_BATCH))

    clusters, _ = cluster_events(window_union(window), config.eps, config.min_pts)
    if image is not None:
        return estimate_from_state(batch, clusters, image, config)
    if not clusters:
        return JitterEstimate(q, 0, 0, 0, int(EstimateFlag.NO_CLUSTER))

    flags = EstimateFlag.NONE
    t_q = batch.t_end_us
    results = []
    for cluster in clusters:
        try:
            fit_x, fit_y = fit_cluster_lines(cluster)
        except DegenerateFitError:
            flags |= EstimateFlag.DEGENERATE_FIT
            continue
        star = replace(cluster, fit_x=fit_x, fit_y=fit_y)
        w_curr = extract_support(batch, star, estimate_centroid(star, t_q), config.radius)
        w_prev = extract_support(window.previous, star,
                                 estimate_centroid(star, batch.t_start_us), config.radius)
        found = search_jitter(w_prev, w_curr, config.grid_radius, max_norm=config.grid_radius)
        if found is not None and found.support >= config.min_support:
            results.append(found)

    if not results:
        return JitterEstimate(q, 0, 0, 0, int(flags | EstimateFlag.NO_SUPPORT))
    dx, dy, support = fuse_estimates(results, max_norm=config.grid_radius)
    return JitterEstimate(q, dx, dy, support, int(flags))


def run_pipeline(events, config, duration_us=None, geom=SensorGeometry()) -> List[JitterEstimate]:
    """One JitterEstimate per batch of the stream."""
    if events.dtype != EVENT_DTYPE:
        raise DomainError('events must use EVENT_DTYPE')
    logger.info('... recovery (%s support): t_batch=%.6f s, N_c=%d, eps=%.1f, min_pts=%d, '
                'r=%.2f ...', config.support, config.t_batch_s, config.n_c, config.eps,
                config.min_pts, config.radius)
    window = BatchWindow(config.n_c)
    image = ContrastImage(geom) if config.support == 'state' else None
    estimates = []
    for batch in batch_stream(events, config.t_batch_s, duration_us):
        window.push(batch)
        estimates.append(estimate_batch(window, config, image))
    flagged = sum(1 for e in estimates if e.flags)
    logger.info('... %d batches estimated, %d flagged ...', len(estimates), flagged)
    return estimates


def flag_summary(estimates):
    counts = collections.Counter(flag_names(e.flags) for e in estimates)
    return dict(sorted(counts.items()))


#### estimate files ####

def estimates_frame(estimates, t_batch_s) -> pd.DataFrame:
    tb = t_batch_s * 1e6
    return pd.DataFrame({
        'q': [e.batch_index for e in estimates],
        't_us': [int(round((e.batch_index + 1) * tb)) for e in estimates],
        'dx_px': [e.dx for e in estimates],
        'dy_px': [e.dy for e in estimates],
        'support': [e.support for e in estimates],
        'flags': [flag_names(e.flags) for e in estimates],
    }, columns=ESTIMATE_COLUMNS)


def write_estimates(estimates, fh, config):
    fh.write('# t_batch_s=%r n_c=%d eps=%r min_pts=%d radius=%r min_support=%d support=%s\n'
             % (config.t_batch_s, config.n_c, config.eps, config.min_pts, config.radius,
                config.min_support, config.support))
    estimates_frame(estimates, config.t_batch_s).to_csv(fh, index=False, lineterminator='\n')


def read_estimates(source) -> Tuple[List[JitterEstimate], dict]:
    """Parse an estimates CSV; returns the estimates and the header parameters."""
    with open_stream(source, 'r') as fh:
        first = fh.readline()
        meta = {}
        if first.startswith('#'):
            for item in first[1:].split():
                key, _, value = item.partition('=')
                if key == 'support':
                    meta[key] = value
                elif key in ('t_batch_s', 'eps', 'radius'):
                    meta[key] = float(value)
                else:
                    meta[key] = int(value)
        else:
            fh.seek(0)
        frame = pd.read_csv(fh, dtype={'flags': str}, keep_default_na=False)
    if list(frame.columns) != ESTIMATE_COLUMNS:
        raise ParseError('expected estimate columns %s' % ','.join(ESTIMATE_COLUMNS), line=1)
    estimates = [JitterEstimate(int(r.q), int(r.dx_px), int(r.dy_px), int(r.support),
                                parse_flag_names(r.flags))
                 for r in frame.itertuples(index=False)]
    return estimates, meta

