#!/usr/bin/env python3
"""
Shared domain types and calibration arithmetic.

Events are carried as numpy structured arrays (EVENT_DTYPE) because every stage of the toolkit
handles millions of them; the scalar dataclasses below describe single records for the places
that need them (tests, CSV rows, reports).
"""

import contextlib
import enum
import math
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np


EVENT_DTYPE = np.dtype([('t', '<i8'), ('x', '<u2'), ('y', '<u2'), ('p', 'i1')])

STAGE_RANGE_MM = 22.0


class JitterError(ValueError):
    """Base class for every error raised by the toolkit."""


class DomainError(JitterError):
    pass


class ContractError(JitterError):
    pass


class ParseError(JitterError):
    """Malformed input, located by byte offset (binary) or line number (text)."""

    def __init__(self, message, offset=None, line=None):
        self.offset = offset
        self.line = line
        where = []
        if line is not None:
            where.append('line %d' % line)
        if offset is not None:
            where.append('byte offset %d' % offset)
        if where:
            message = '%s: %s' % (', '.join(where), message)
        super().__init__(message)


class AlignmentNotFoundError(JitterError):
    pass


class DegenerateFitError(JitterError):
    pass


class InsufficientDataError(JitterError):
    pass


class Axes(str, enum.Enum):
    AXIS1 = 'axis1'
    AXIS2 = 'axis2'
    BOTH = 'both'

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise DomainError('unknown axes %r (expected one of: %s)'
                              % (name, ', '.join(a.value for a in cls))) from None


@dataclass(frozen=True)
class SensorGeometry:
    """Sensor size plus the single isotropic mm <-> px calibration ratio."""

    width: int = 1280
    height: int = 720
    pixel_pitch_um: float = 4.86
    calib_mm: float = 0.1
    calib_px: float = 20.58

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DomainError('sensor size must be positive, got %dx%d' % (self.width, self.height))
        if self.calib_mm <= 0 or self.calib_px <= 0:
            raise DomainError('calibration ratio must be positive')

    @property
    def px_per_mm(self):
        return self.calib_px / self.calib_mm

    @property
    def mm_per_px(self):
        return self.calib_mm / self.calib_px

    def contains(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= 0) & (x < self.width) & (y >= 0) & (y < self.height)


@dataclass(frozen=True)
class FrequencyBand:
    name: str
    f_min: float
    f_max: float
    v_min: float
    v_max: float

    def __post_init__(self):
        if not 0 <= self.f_min < self.f_max:
            raise DomainError('band %s: need 0 <= f_min < f_max' % self.name)
        if not 0 < self.v_min < self.v_max:
            raise DomainError('band %s: need 0 < v_min < v_max' % self.name)


# Velocity and frequency parameters of the three jitter bands (amplitude 0.1 mm)
BANDS = {
    'slow': FrequencyBand('slow', 0.0, 30.0, 1.0, 6.0),
    'medium': FrequencyBand('medium', 30.0, 100.0, 6.0, 20.0),
    'fast': FrequencyBand('fast', 100.0, 200.0, 20.0, 40.0),
}

STATIC = 'static'


def get_band(name) -> Optional[FrequencyBand]:
    """Look a band up by name; 'static' maps to None."""
    key = str(name).lower()
    if key == STATIC:
        return None
    if key not in BANDS:
        raise DomainError('unknown band %r (expected static, %s)' % (name, ', '.join(BANDS)))
    return BANDS[key]


@dataclass(frozen=True)
class JitterEstimate:
    batch_index: int
    dx: int
    dy: int
    support: int
    flags: int = 0

    def __post_init__(self):
        if self.support < 0:
            raise DomainError('support must be >= 0')


@dataclass(frozen=True)
class GroundTruthSample:
    t: int
    x_mm: float
    y_mm: float

    def __post_init__(self):
        if abs(self.x_mm) > STAGE_RANGE_MM or abs(self.y_mm) > STAGE_RANGE_MM:
            raise DomainError('sample at t=%d outside the %.0f mm stage range'
                              % (self.t, STAGE_RANGE_MM))


@contextlib.contextmanager
def open_stream(source, mode):
    """Open a path, or hand an already open stream through untouched."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, mode) as fh:
            yield fh
    else:
        yield source


def mm_to_pixels(d, geom=SensorGeometry()):
    # divide first so the calibration distance itself maps exactly onto calib_px
    return (d / geom.calib_mm) * geom.calib_px


def pixels_to_mm(px, geom=SensorGeometry()):
    return (px / geom.calib_px) * geom.calib_mm


def frequency_of_motion(v, a):
    """Reversal frequency f = v / (2a) of a stage moving at v mm/s between 0 and a mm."""
    if a <= 0:
        raise DomainError('amplitude must be > 0, got %r' % a)
    if v < 0:
        raise DomainError('velocity must be >= 0, got %r' % v)
    return v / (2.0 * a)


def batch_duration(f_max):
    """Batch length in seconds sampling at twice the band's highest frequency."""
    if f_max <= 0:
        raise DomainError('f_max must be > 0, got %r' % f_max)
    return 1.0 / (2.0 * f_max)


def make_events(t, x, y, p) -> np.ndarray:
    """Pack parallel arrays into an EVENT_DTYPE array."""
    t = np.asarray(t, dtype=np.int64)
    events = np.empty(t.shape[0], dtype=EVENT_DTYPE)
    events['t'] = t
    events['x'] = np.asarray(x)
    events['y'] = np.asarray(y)
    events['p'] = np.asarray(p)
    return events


def check_events(events, geom=None, error=ContractError):
    """Validate sortedness, polarity and bounds; raise `error` on the first violation."""
    if events.dtype != EVENT_DTYPE:
        raise error('events must use EVENT_DTYPE, got %s' % events.dtype)
    if events.size == 0:
        return
    t = events['t']
    if t[0] < 0:
        raise error('negative timestamp at index 0')
    drops = np.flatnonzero(np.diff(t) < 0)
    if drops.size:
        raise error('events not sorted by t at index %d' % (drops[0] + 1))
    bad_p = np.flatnonzero((events['p'] != 1) & (events['p'] != -1))
    if bad_p.size:
        raise error('invalid polarity at index %d' % bad_p[0])
    if geom is not None:
        outside = np.flatnonzero(~geom.contains(events['x'], events['y']))
        if outside.size:
            i = outside[0]
            raise error('event %d at (%d, %d) outside %dx%d sensor'
                        % (i, events['x'][i], events['y'][i], geom.width, geom.height))


def band_table() -> Dict[str, Dict[str, float]]:
    """Band constants as plain dicts, for reports and JSON summaries."""
    return {name: {'f_min_hz': b.f_min, 'f_max_hz': b.f_max,
                   'v_min_mm_s': b.v_min, 'v_max_mm_s': b.v_max}
            for name, b in BANDS.items()}


def ceil_radius(r):
    return int(math.ceil(r))
