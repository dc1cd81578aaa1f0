#!/usr/bin/env python3
"""
Synthetic sequences: a star field watched by an event camera mounted on a vibrating stage.

Timeline of one sequence (defaults, seconds):

  0 - 5     static baseline
  5 - 10    homing to the reference position (0, 0)
  10        ten 0.1 mm moves at maximum velocity, then the 0.4 mm sync spike out and back
  ...       alternating +a / -a moves, cruise velocity redrawn from the band at every move
  190       end of recording

Static sequences never leave (0, 0). Every move follows a trapezoidal velocity profile and is
followed by a settle dwell. Ground truth is the stage position sampled at the telemetry rate,
starting when the injected motion starts.
"""

import logging
import math
from dataclasses import dataclass, fields, replace
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from core_model import (BANDS, EVENT_DTYPE, STATIC, Axes, DomainError, FrequencyBand,
                        GroundTruthSample, SensorGeometry, frequency_of_motion, get_band,
                        make_events, mm_to_pixels)
from event_io import LogEntry
from telemetry_queue import transmit_samples


logger = logging.getLogger(__name__)

PROLOGUE_MOVES = 10
SPIKE_MM = 0.4
DENSE_STEP_US = 100
LOG_LABELS = ('homing_complete', 'jitter_start', 'sync_spike', 'recording_end')
WAVEFORMS = ('trapezoid', 'square')
# square-wave edges: a 0.1 mm jump completes in about 120 us
SQUARE_VELOCITY_MM_S = 1000.0
SQUARE_ACCEL_MM_S2 = 1e8


@dataclass(frozen=True)
class SimConfig:
    band: str = 'slow'
    axes: str = 'axis1'
    stars: int = 8
    noise_rate: float = 1e-3
    refractory_us: int = 0
    seed: int = 0
    duration_s: float = 190.0
    episode20_compat: bool = False
    queue_loss_ratio: Optional[float] = None
    clock_offset_us: int = 0
    drift_px_per_s: float = 0.0
    amplitude_mm: float = 0.1
    settle_ms: float = 25.0
    baseline_s: float = 5.0
    homing_s: float = 5.0
    gt_rate_hz: float = 30.0
    psf_sigma: float = 1.0
    star_intensity: float = 1.0
    contrast_threshold: float = 0.3
    dark_level: float = 0.1
    accel_mm_s2: float = 1.5e5
    prologue_velocity_mm_s: float = 40.0
    waveform: str = 'trapezoid'

    def __post_init__(self):
        get_band(self.band)
        if self.waveform not in WAVEFORMS:
            raise DomainError('waveform must be one of %s, got %r'
                              % (', '.join(WAVEFORMS), self.waveform))
        object.__setattr__(self, 'band', str(self.band).lower())
        object.__setattr__(self, 'axes', Axes.parse(self.axes).value)
        if self.stars < 0:
            raise DomainError('star count must be >= 0')
        if self.noise_rate < 0 or self.refractory_us < 0:
            raise DomainError('noise rate and refractory period must be >= 0')
        if not self.duration_s > 0:
            raise DomainError('duration must be > 0, got %r' % self.duration_s)
        if self.queue_loss_ratio is not None and not self.queue_loss_ratio > 0:
            raise DomainError('queue_loss_ratio must be > 0')
        positive = ('amplitude_mm', 'gt_rate_hz', 'star_intensity', 'contrast_threshold',
                    'dark_level', 'accel_mm_s2', 'prologue_velocity_mm_s')
        for name in positive:
            if not getattr(self, name) > 0:
                raise DomainError('%s must be > 0, got %r' % (name, getattr(self, name)))
        for name in ('settle_ms', 'baseline_s', 'homing_s', 'drift_px_per_s'):
            if getattr(self, name) < 0:
                raise DomainError('%s must be >= 0, got %r' % (name, getattr(self, name)))
        if self.psf_sigma < 0.85:
            raise DomainError('psf_sigma must be >= 0.85 px so a star spans two pixels')

    @classmethod
    def from_mapping(cls, mapping, **overrides):
        """Build from a YAML `simulation:` section; explicit overrides win when not None."""
        known = {f.name for f in fields(cls)}
        values = dict(mapping or {})
        unknown = sorted(set(values) - known)
        if unknown:
            raise DomainError('unknown simulation option(s): %s' % ', '.join(unknown))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def label(self):
        return STATIC if self.band == STATIC else '%s_%s' % (self.band, self.axes)


@dataclass(frozen=True)
class Star:
    x0: float
    y0: float
    intensity: float = 1.0
    psf_sigma: float = 1.0

    def __post_init__(self):
        if self.psf_sigma < 0.85:
            raise DomainError('psf_sigma must be >= 0.85 px, got %r' % self.psf_sigma)
        if not self.intensity > 0:
            raise DomainError('star intensity must be > 0')

    @property
    def reach(self):
        return int(math.ceil(4.0 * self.psf_sigma)) + 1


@dataclass(frozen=True)
class NoiseModel:
    background_rate: float = 0.0
    refractory_us: int = 0

    def __post_init__(self):
        if self.background_rate < 0 or self.refractory_us < 0:
            raise DomainError('noise rate and refractory period must be >= 0')


#### trajectory ####

@dataclass(frozen=True)
class Move:
    """Straight move from `start` by `delta` (mm): accelerate, cruise, decelerate, then settle."""

    t_start_us: float
    start: Tuple[float, float]
    delta: Tuple[float, float]
    velocity: float
    accel: float
    settle_us: float = 0.0

    def __post_init__(self):
        if self.length <= 0:
            raise DomainError('move length must be > 0')
        if not (self.velocity > 0 and self.accel > 0):
            raise DomainError('move velocity and acceleration must be > 0')

    @property
    def length(self):
        return math.hypot(*self.delta)

    @property
    def t_acc_s(self):
        # triangular profile when the cruise velocity cannot be reached
        return min(self.velocity / self.accel, math.sqrt(self.length / self.accel))

    @property
    def peak_velocity(self):
        return self.accel * self.t_acc_s

    @property
    def t_cruise_s(self):
        return (self.length - self.accel * self.t_acc_s ** 2) / self.peak_velocity

    @property
    def duration_us(self):
        return (2.0 * self.t_acc_s + self.t_cruise_s) * 1e6

    @property
    def t_end_us(self):
        return self.t_start_us + self.duration_us

    @property
    def t_settled_us(self):
        return self.t_end_us + self.settle_us

    @property
    def end(self):
        return (self.start[0] + self.delta[0], self.start[1] + self.delta[1])


@dataclass
class JitterTrajectory:
    moves: List[Move]
    duration_s: float
    band: Optional[FrequencyBand] = None
    axes: Axes = Axes.AXIS1
    seed: Optional[object] = None
    t_inject_us: int = 0
    jitter_start_us: Optional[int] = None
    spike_t_us: Optional[int] = None
    dense_step_us: int = DENSE_STEP_US

    def __post_init__(self):
        for prev, move in zip(self.moves, self.moves[1:]):
            if move.t_start_us < prev.t_settled_us - 1e-6:
                raise DomainError('move at %.0f us starts before the previous one settled'
                                  % move.t_start_us)
            if not np.allclose(move.start, prev.end):
                raise DomainError('move at %.0f us does not start where the previous ended'
                                  % move.t_start_us)

    @cached_property
    def _params(self):
        m = self.moves
        length = np.array([mv.length for mv in m])
        return {
            't0': np.array([mv.t_start_us for mv in m]),
            'sx': np.array([mv.start[0] for mv in m]),
            'sy': np.array([mv.start[1] for mv in m]),
            'ux': np.array([mv.delta[0] for mv in m]) / length,
            'uy': np.array([mv.delta[1] for mv in m]) / length,
            'length': length,
            'ta': np.array([mv.t_acc_s for mv in m]),
            'tc': np.array([mv.t_cruise_s for mv in m]),
            'a': np.array([mv.accel for mv in m]),
            'vp': np.array([mv.peak_velocity for mv in m]),
        }

    def position_at(self, t_us):
        """Stage position (x_mm, y_mm) at the given times."""
        t = np.asarray(t_us, dtype=float)
        if not self.moves:
            return np.zeros(t.shape), np.zeros(t.shape)
        p = self._params
        i = np.searchsorted(p['t0'], t, side='right') - 1
        before = i < 0
        j = np.where(before, 0, i)
        ta, tc, a, vp = p['ta'][j], p['tc'][j], p['a'][j], p['vp'][j]
        dur = 2.0 * ta + tc
        tau = np.clip((t - p['t0'][j]) / 1e6, 0.0, dur)
        s = np.where(tau < ta, 0.5 * a * tau ** 2,
                     np.where(tau < ta + tc, 0.5 * a * ta ** 2 + vp * (tau - ta),
                              p['length'][j] - 0.5 * a * (dur - tau) ** 2))
        s = np.where(before, 0.0, s)
        return p['sx'][j] + p['ux'][j] * s, p['sy'][j] + p['uy'][j] * s

    @cached_property
    def samples(self) -> pd.DataFrame:
        t = np.arange(0, int(round(self.duration_s * 1e6)), self.dense_step_us, dtype=np.int64)
        x, y = self.position_at(t)
        return pd.DataFrame({'t_us': t, 'x_mm': x, 'y_mm': y})


def _direction(axes):
    if axes is Axes.AXIS1:
        return (1.0, 0.0)
    if axes is Axes.AXIS2:
        return (0.0, 1.0)
    return (math.sqrt(0.5), math.sqrt(0.5))


def gt_ticks(t_inject_us, rate_hz, k):
    """Telemetry sample instants t_inject + k / rate, rounded to whole microseconds."""
    return t_inject_us + np.rint(np.asarray(k, dtype=float) * 1e6 / rate_hz).astype(np.int64)


def generate_trajectory(band, axes, duration, seed=None, amplitude_mm=0.1, settle_ms=25.0,
                        accel_mm_s2=1.5e5, baseline_s=5.0, homing_s=5.0,
                        prologue_velocity_mm_s=40.0, gt_rate_hz=30.0, sync_spike=True,
                        waveform='trapezoid') -> JitterTrajectory:
    """
    Stage trajectory of one sequence. `band` None gives a static sequence. The sync spike starts
    on a telemetry tick, so the sample at the tick still reads the rest position.

    With waveform='square' every jitter move is a near-instant jump, and the next jump follows
    half a period later, at the frequency a trapezoid of the drawn velocity would reverse at.
    """
    if not duration > 0:
        raise DomainError('duration must be > 0, got %r' % duration)
    if waveform not in WAVEFORMS:
        raise DomainError('unknown waveform %r' % waveform)
    axes = Axes.parse(axes)
    t_inject = int(round((baseline_s + homing_s) * 1e6))
    if band is None:
        return JitterTrajectory([], duration, None, axes, seed, t_inject, jitter_start_us=t_inject)

    rng = np.random.default_rng(seed)
    ux, uy = _direction(axes)
    duration_us = duration * 1e6
    moves = []
    t = float(t_inject)
    pos = (0.0, 0.0)

    def add(step_mm, velocity, accel=accel_mm_s2, period_us=None):
        nonlocal t, pos
        move = Move(t, pos, (ux * step_mm, uy * step_mm), velocity, accel, settle_ms * 1e3)
        if period_us is not None:
            move = replace(move, settle_us=max(period_us - move.duration_us, 0.0))
        moves.append(move)
        t = move.t_settled_us
        pos = move.end

    for k in range(PROLOGUE_MOVES):
        add(amplitude_mm if k % 2 == 0 else -amplitude_mm, prologue_velocity_mm_s)

    spike_t = None
    if sync_spike:
        k = int(math.ceil(round((t - t_inject) * gt_rate_hz / 1e6, 9)))
        while gt_ticks(t_inject, gt_rate_hz, k) < t:
            k += 1
        spike_t = int(gt_ticks(t_inject, gt_rate_hz, k))
        t = float(spike_t)
        add(SPIKE_MM, prologue_velocity_mm_s)
        add(-SPIKE_MM, prologue_velocity_mm_s)

    jitter_start = int(math.ceil(t))
    t = float(jitter_start)
    sign = 1.0
    while t < duration_us:
        velocity = rng.uniform(band.v_min, band.v_max)
        if waveform == 'square':
            half_us = 0.5e6 / frequency_of_motion(velocity, amplitude_mm)
            add(sign * amplitude_mm, SQUARE_VELOCITY_MM_S, SQUARE_ACCEL_MM_S2, half_us)
        else:
            add(sign * amplitude_mm, velocity)
        sign = -sign

    logger.debug('... %d moves generated (%s, %s) ...', len(moves), band.name, axes.value)
    return JitterTrajectory(moves, duration, band, axes, seed, t_inject, jitter_start, spike_t)


def sample_ground_truth(trajectory, rate=30.0, clock_offset_us=0) -> List[GroundTruthSample]:
    """Positions at t_inject + k / rate, stamped on the actuator clock (sim time + offset)."""
    if not rate > 0:
        raise DomainError('ground truth rate must be > 0, got %r' % rate)
    span_us = trajectory.duration_s * 1e6 - trajectory.t_inject_us
    n = max(int(math.floor(round(span_us * rate / 1e6, 9))), 0)
    t = gt_ticks(trajectory.t_inject_us, rate, np.arange(n))
    x, y = trajectory.position_at(t)
    return [GroundTruthSample(int(ti) + int(clock_offset_us), float(xi), float(yi))
            for ti, xi, yi in zip(t.tolist(), x.tolist(), y.tolist())]


#### star field ####

def make_star_field(n, geom=SensorGeometry(), rng=None, psf_sigma=1.0, intensity=1.0,
                    travel_px=None, min_separation_px=None, max_attempts=20000) -> List[Star]:
    """
    Place `n` stars uniformly at random so that every star stays on the sensor over its whole
    motion locus (`travel_px` = largest +x / +y displacement) and no two tracks merge.
    """
    rng = np.random.default_rng(rng)
    spike_px = mm_to_pixels(SPIKE_MM, geom)
    travel_x, travel_y = travel_px if travel_px is not None else (spike_px, spike_px)
    reach = Star(0.0, 0.0, intensity, psf_sigma).reach
    if min_separation_px is None:
        min_separation_px = spike_px + 2 * reach + 3
    lo = reach + 1
    hi_x = geom.width - 1 - reach - travel_x
    hi_y = geom.height - 1 - reach - travel_y
    if n and (hi_x <= lo or hi_y <= lo):
        raise DomainError('no room on a %dx%d sensor for the star motion locus'
                          % (geom.width, geom.height))
    placed = []
    attempts = 0
    while len(placed) < n:
        attempts += 1
        if attempts > max_attempts:
            raise DomainError('could not place %d stars %.1f px apart (placed %d)'
                              % (n, min_separation_px, len(placed)))
        x, y = rng.uniform(lo, hi_x), rng.uniform(lo, hi_y)
        if all(math.hypot(x - s.x0, y - s.y0) >= min_separation_px for s in placed):
            placed.append(Star(float(x), float(y), intensity, psf_sigma))
    return placed


#### rendering ####

def _render_times(trajectory, geom, drift_px_per_s, max_step_px, duration_us):
    parts = [np.zeros(1)]
    for move in trajectory.moves:
        if move.t_start_us >= duration_us:
            break
        dt_us = max_step_px / (move.peak_velocity * geom.px_per_mm) * 1e6
        n = max(1, int(math.ceil(move.duration_us / dt_us)))
        parts.append(move.t_start_us + np.arange(n + 1) * (move.duration_us / n))
    if drift_px_per_s > 0:
        parts.append(np.arange(0.0, duration_us, max_step_px / drift_px_per_s * 1e6))
    t = np.unique(np.rint(np.concatenate(parts)).astype(np.int64))
    return t[(t >= 0) & (t < duration_us)]


def _star_levels(stars, cx, cy, geom, dark_level):
    """Log intensity over the union of the stars' windows for every step of a chunk."""
    w = geom.width
    windows = []
    for s, star in enumerate(stars):
        r = star.reach
        x_lo = max(int(math.floor(cx[s].min())) - r, 0)
        x_hi = min(int(math.ceil(cx[s].max())) + r, geom.width - 1)
        y_lo = max(int(math.floor(cy[s].min())) - r, 0)
        y_hi = min(int(math.ceil(cy[s].max())) + r, geom.height - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        gx, gy = np.meshgrid(np.arange(x_lo, x_hi + 1), np.arange(y_lo, y_hi + 1))
        windows.append((s, (gy * w + gx).ravel()))
    if not windows:
        return np.empty(0, dtype=np.int64), None
    pix = np.unique(np.concatenate([flat for _, flat in windows]))
    intensity = np.zeros((cx.shape[1], pix.size))
    for s, flat in windows:
        star = stars[s]
        col = np.searchsorted(pix, flat)
        d2 = (((flat % w)[None, :] - cx[s][:, None]) ** 2
              + ((flat // w)[None, :] - cy[s][:, None]) ** 2)
        intensity[:, col] += star.intensity * np.exp(-d2 / (2.0 * star.psf_sigma ** 2))
    return pix, np.log(dark_level + intensity)


def _render_signal(stars, times, shift_x, shift_y, geom, threshold, dark_level, refractory_us,
                   chunk_steps=256):
    empty = np.empty(0, dtype=EVENT_DTYPE)
    if not stars or times.size < 2:
        return empty
    w = geom.width
    sx = np.array([s.x0 for s in stars])[:, None]
    sy = np.array([s.y0 for s in stars])[:, None]

    ref = np.full(geom.width * geom.height, math.log(dark_level))
    pix0, level0 = _star_levels(stars, sx + shift_x[0], sy + shift_y[0], geom, dark_level)
    ref[pix0] = level0[0]
    last_t = np.full(ref.size, np.iinfo(np.int64).min // 2, dtype=np.int64)

    out_t, out_pix, out_p = [], [], []
    n = times.size
    for k0 in range(0, n - 1, chunk_steps):
        k1 = min(k0 + chunk_steps, n - 1)
        pix, level = _star_levels(stars, sx + shift_x[None, k0:k1 + 1],
                                  sy + shift_y[None, k0:k1 + 1], geom, dark_level)
        if not pix.size:
            continue
        ref_c = ref[pix]
        last_c = last_t[pix]
        for j in range(1, k1 - k0 + 1):
            t = int(times[k0 + j])
            n_ev = np.trunc((level[j] - ref_c) / threshold)
            idx = np.flatnonzero(n_ev)
            if not idx.size:
                continue
            ref_c[idx] += n_ev[idx] * threshold
            counts = np.abs(n_ev[idx]).astype(np.int64)
            if refractory_us:
                first = np.maximum(t, last_c[idx] + refractory_us)
                last_c[idx] = first + (counts - 1) * refractory_us
            else:
                first = np.full(idx.size, t, dtype=np.int64)
            rep = np.repeat(np.arange(idx.size), counts)
            nth = np.arange(rep.size) - np.repeat(np.cumsum(counts) - counts, counts)
            out_t.append(first[rep] + nth * refractory_us)
            out_pix.append(pix[idx][rep])
            out_p.append(np.sign(n_ev[idx]).astype(np.int8)[rep])
        ref[pix] = ref_c
        last_t[pix] = last_c
    if not out_t:
        return empty
    flat = np.concatenate(out_pix)
    return make_events(np.concatenate(out_t), flat % w, flat // w, np.concatenate(out_p))


def background_noise(noise, geom, duration_us, rng) -> np.ndarray:
    """Poisson count of events, uniform in space and time, fair-coin polarity."""
    n = rng.poisson(noise.background_rate * duration_us / 1e6 * geom.width * geom.height)
    t = np.sort(rng.integers(0, max(int(duration_us), 1), n))
    x = rng.integers(0, geom.width, n)
    y = rng.integers(0, geom.height, n)
    p = rng.integers(0, 2, n) * 2 - 1
    return make_events(t, x, y, p)


def apply_refractory(events, refractory_us) -> np.ndarray:
    """Drop every event closer than `refractory_us` to the previous event of the same pixel."""
    if refractory_us <= 0 or events.size < 2:
        return events
    key = events['x'].astype(np.int64) * 65536 + events['y']
    order = np.lexsort((events['t'], key))
    k = key[order]
    t = events['t'][order]
    blind = np.zeros(events.size, dtype=bool)
    blind[1:] = (k[1:] == k[:-1]) & (np.diff(t) < refractory_us)
    keep = np.ones(events.size, dtype=bool)
    keep[order[blind]] = False
    return events[keep]


def render_events(stars, trajectory, geom=SensorGeometry(), noise=NoiseModel(), seed=None,
                  contrast_threshold=0.3, dark_level=0.1, drift_px_per_s=0.0,
                  max_step_px=0.25) -> np.ndarray:
    """
    Events of the star field displaced by the stage trajectory (plus optional sidereal drift
    along +x), merged with background noise and sorted by t.
    """
    if contrast_threshold <= 0 or dark_level <= 0:
        raise DomainError('contrast threshold and dark level must be > 0')
    rng = np.random.default_rng(seed)
    duration_us = int(round(trajectory.duration_s * 1e6))
    times = _render_times(trajectory, geom, drift_px_per_s, max_step_px, duration_us)
    x_mm, y_mm = trajectory.position_at(times)
    shift_x = mm_to_pixels(x_mm, geom) + drift_px_per_s * times / 1e6
    shift_y = mm_to_pixels(y_mm, geom)

    visible = []
    for i, star in enumerate(stars):
        r = star.reach
        x_range = (star.x0 + shift_x.min() - r, star.x0 + shift_x.max() + r)
        y_range = (star.y0 + shift_y.min() - r, star.y0 + shift_y.max() + r)
        if (x_range[1] < 0 or x_range[0] > geom.width - 1
                or y_range[1] < 0 or y_range[0] > geom.height - 1):
            logger.warning('... star %d at (%.1f, %.1f) never reaches the sensor, no events ...',
                           i, star.x0, star.y0)
            continue
        visible.append(star)

    signal = _render_signal(visible, times, shift_x, shift_y, geom, contrast_threshold,
                            dark_level, noise.refractory_us)
    signal = signal[signal['t'] < duration_us]
    background = background_noise(noise, geom, duration_us, rng)
    merged = np.concatenate((signal, background))
    events = apply_refractory(merged[np.argsort(merged['t'], kind='stable')], noise.refractory_us)
    logger.info('... %d events rendered (%d signal, %d noise) over %d steps ...',
                events.size, signal.size, background.size, times.size)
    return events


#### sequences ####

@dataclass
class SimulatedSequence:
    config: SimConfig
    events: np.ndarray
    telemetry: List[GroundTruthSample]
    logs: List[LogEntry]
    trajectory: JitterTrajectory
    stars: List[Star]


def sequence_log(trajectory, clock_offset_us=0) -> List[LogEntry]:
    """Protocol milestones stamped on the camera clock and on the actuator clock."""
    marks = {'homing_complete': trajectory.t_inject_us,
             'jitter_start': trajectory.jitter_start_us,
             'sync_spike': trajectory.spike_t_us,
             'recording_end': int(round(trajectory.duration_s * 1e6))}
    entries = []
    for label in LOG_LABELS:
        t = marks[label]
        if t is None:
            continue
        entries.append(LogEntry('cam.' + label, int(t)))
        entries.append(LogEntry('piezo.' + label, int(t) + int(clock_offset_us)))
    return entries


def simulate_sequence(config, geom=SensorGeometry()) -> SimulatedSequence:
    logger.info('... simulate sequence %s (seed %d, %.0f s) ...',
                config.label, config.seed, config.duration_s)
    band = get_band(config.band)
    traj_seed, star_seed, noise_seed = np.random.SeedSequence(config.seed).spawn(3)
    trajectory = generate_trajectory(
        band, config.axes, config.duration_s, seed=traj_seed, amplitude_mm=config.amplitude_mm,
        settle_ms=config.settle_ms, accel_mm_s2=config.accel_mm_s2,
        baseline_s=config.baseline_s, homing_s=config.homing_s,
        prologue_velocity_mm_s=config.prologue_velocity_mm_s, gt_rate_hz=config.gt_rate_hz,
        sync_spike=not config.episode20_compat, waveform=config.waveform)

    spike_px = mm_to_pixels(SPIKE_MM, geom) if band is not None else 0.0
    travel = (spike_px + config.drift_px_per_s * config.duration_s, spike_px)
    stars = make_star_field(config.stars, geom, np.random.default_rng(star_seed),
                            config.psf_sigma, config.star_intensity, travel_px=travel)
    events = render_events(stars, trajectory, geom,
                           NoiseModel(config.noise_rate, config.refractory_us), seed=noise_seed,
                           contrast_threshold=config.contrast_threshold,
                           dark_level=config.dark_level, drift_px_per_s=config.drift_px_per_s)

    telemetry = sample_ground_truth(trajectory, config.gt_rate_hz, config.clock_offset_us)
    if config.queue_loss_ratio is not None:
        telemetry = transmit_samples(telemetry, config.queue_loss_ratio, seed=config.seed)
    return SimulatedSequence(config, events, telemetry,
                             sequence_log(trajectory, config.clock_offset_us), trajectory, stars)


def derive_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def episode_configs(seed=0, **overrides) -> List[SimConfig]:
    """The ten sequences of an episode: one static plus every band on every axes setting."""
    combos = [(STATIC, Axes.AXIS1)] + [(band, axes) for band in BANDS for axes in Axes]
    return [SimConfig(band=band, axes=axes.value, seed=derive_seed(seed, i), **overrides)
            for i, (band, axes) in enumerate(combos)]
