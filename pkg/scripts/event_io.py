#!/usr/bin/env python3
"""
Readers and writers for the three file families of a recorded sequence.

  <name>.dat   raw events, native container (magic ESTRTEV1) or interchange CSV `t,x,y,p`
  <name>.csv   actuator telemetry `t_us,x_mm,y_mm`
  <name>.log   synchronisation timestamps `label,t_us`

plus the clock alignment between the camera and the actuator based on the 0.4 mm sync spike.

Native container layout (little-endian):

  header (32 bytes)  magic[8] width:u16 height:u16 t_origin:u64 event_count:u64 crc32:u32
  record (16 bytes)  t:u64 x:u16 y:u16 p:i8 pad[3]

The CRC covers header bytes 0-27 followed by the whole payload. Record pad bytes are zero.
"""

import io
import logging
import os
import struct
import zlib
from dataclasses import asdict, dataclass
from typing import List, NamedTuple, Optional

import numpy as np
import pandas as pd

from core_model import (EVENT_DTYPE, AlignmentNotFoundError, ContractError, DomainError,
                        GroundTruthSample, ParseError, SensorGeometry, check_events, mm_to_pixels,
                        open_stream)


logger = logging.getLogger(__name__)

MAGIC = b'ESTRTEV1'
HEADER = struct.Struct('<8sHHQQI')
HEADER_SIZE = HEADER.size
CRC_OFFSET = 28
RECORD_SIZE = 16
CSV_EVENT_HEADER = 't,x,y,p'
TELEMETRY_COLUMNS = ('t_us', 'x_mm', 'y_mm')
LOG_COLUMNS = ('label', 't_us')

RECORD_DTYPE = np.dtype({'names': ['t', 'x', 'y', 'p'],
                         'formats': ['<u8', '<u2', '<u2', 'i1'],
                         'offsets': [0, 8, 10, 12],
                         'itemsize': RECORD_SIZE})

CHUNK_RECORDS = 1 << 16


@dataclass(frozen=True)
class EventFileHeader:
    width: int
    height: int
    t_origin: int
    event_count: int
    crc32: int = 0
    magic: bytes = MAGIC


@dataclass(frozen=True)
class ClockAlignment:
    """t_piezo = t_cam + offset_us."""

    offset_us: int
    spike_t_cam: int
    spike_t_piezo: int
    confidence: float

    def __post_init__(self):
        if self.confidence < 1.0:
            raise DomainError('alignment confidence must be >= 1, got %.3f' % self.confidence)
        if self.offset_us != self.spike_t_piezo - self.spike_t_cam:
            raise DomainError('offset does not match the spike timestamps')

    def to_dict(self):
        return asdict(self)


class LogEntry(NamedTuple):
    label: str
    t_us: int


def _describe(source):
    return os.fspath(source) if isinstance(source, (str, os.PathLike)) else '<stream>'


#### event streams ####

def write_events(events, sink, geom=SensorGeometry(), t_origin=0):
    """Write `events` in the native container; returns the record count."""
    check_events(events, geom, error=ContractError)
    records = np.zeros(events.size, dtype=RECORD_DTYPE)
    records['t'] = events['t']
    records['x'] = events['x']
    records['y'] = events['y']
    records['p'] = events['p']
    payload = records.tobytes()

    head = HEADER.pack(MAGIC, geom.width, geom.height, int(t_origin), events.size, 0)[:CRC_OFFSET]
    crc = zlib.crc32(payload, zlib.crc32(head))
    with open_stream(sink, 'wb') as fh:
        fh.write(head)
        fh.write(struct.pack('<I', crc))
        fh.write(payload)
    return int(events.size)


def read_events(source, geom=None):
    return read_event_file(source, geom)[1]


def read_event_file(source, geom=None):
    """Parse a native or CSV event file; returns (header, events)."""
    logger.info('... parse event file: %s ...', _describe(source))
    with open_stream(source, 'rb') as fh:
        lead = fh.read(len(MAGIC))
        if lead == MAGIC:
            header, events = _read_native(fh, lead, geom)
        elif lead[:len(CSV_EVENT_HEADER)] == CSV_EVENT_HEADER.encode():
            events = _read_events_csv(lead + fh.read(), geom)
            g = geom or SensorGeometry()
            header = EventFileHeader(g.width, g.height, 0, int(events.size))
        else:
            raise ParseError('bad magic %r (expected %r or a %r CSV header)'
                             % (lead, MAGIC, CSV_EVENT_HEADER), offset=0)
    logger.info('... %d events read from %s ...', events.size, _describe(source))
    return header, events


def _read_native(fh, lead, geom):
    rest = fh.read(HEADER_SIZE - len(lead))
    raw_head = lead + rest
    if len(raw_head) < HEADER_SIZE:
        raise ParseError('truncated header (%d of %d bytes)' % (len(raw_head), HEADER_SIZE),
                         offset=len(raw_head))
    magic, width, height, t_origin, count, crc = HEADER.unpack(raw_head)
    if width == 0 or height == 0:
        raise ParseError('zero sensor size in header', offset=8)
    if geom is not None and (width, height) != (geom.width, geom.height):
        raise ParseError('header sensor %dx%d does not match %dx%d'
                         % (width, height, geom.width, geom.height), offset=8)

    running = zlib.crc32(raw_head[:CRC_OFFSET])
    chunks = []
    n_read = 0
    last_t = 0
    while True:
        buf = fh.read(CHUNK_RECORDS * RECORD_SIZE)
        if not buf:
            break
        offset = HEADER_SIZE + n_read * RECORD_SIZE
        if len(buf) % RECORD_SIZE:
            cut = offset + (len(buf) // RECORD_SIZE) * RECORD_SIZE
            raise ParseError('truncated record %d' % (n_read + len(buf) // RECORD_SIZE + 1),
                             offset=cut)
        n = len(buf) // RECORD_SIZE
        if n_read + n > count:
            extra = count - n_read
            raise ParseError('data beyond the %d records declared in the header' % count,
                             offset=offset + max(extra, 0) * RECORD_SIZE)
        recs = np.frombuffer(buf, dtype=RECORD_DTYPE)
        last_t = _check_records(recs, np.frombuffer(buf, dtype=np.uint8).reshape(n, RECORD_SIZE),
                                n_read, last_t, width, height)
        running = zlib.crc32(buf, running)
        chunks.append(recs)
        n_read += n

    if n_read < count:
        raise ParseError('truncated payload: header declares %d records, found %d'
                         % (count, n_read), offset=HEADER_SIZE + n_read * RECORD_SIZE)
    if running != crc:
        raise ParseError('checksum mismatch (stored %08x, computed %08x)' % (crc, running),
                         offset=CRC_OFFSET)

    events = np.empty(n_read, dtype=EVENT_DTYPE)
    pos = 0
    for recs in chunks:
        sl = slice(pos, pos + recs.size)
        events['t'][sl] = recs['t']
        events['x'][sl] = recs['x']
        events['y'][sl] = recs['y']
        events['p'][sl] = recs['p']
        pos += recs.size
    return EventFileHeader(width, height, t_origin, count, crc, magic), events


def _check_records(recs, raw, first, last_t, width, height):
    """Validate one chunk of records; returns the chunk's last timestamp."""
    def fail(i, field_offset, message):
        record_no = first + i + 1
        raise ParseError('record %d: %s' % (record_no, message),
                         offset=HEADER_SIZE + (first + i) * RECORD_SIZE + field_offset)

    t = recs['t']
    big = np.flatnonzero(t > np.iinfo(np.int64).max)
    if big.size:
        fail(big[0], 0, 'timestamp %d out of range' % t[big[0]])
    t = t.astype(np.int64)
    prev = np.concatenate(([last_t], t[:-1]))
    back = np.flatnonzero(t < prev)
    if back.size:
        i = back[0]
        fail(i, 0, 'timestamp %d decreases (previous %d)' % (t[i], prev[i]))
    bad_x = np.flatnonzero(recs['x'] >= width)
    if bad_x.size:
        i = bad_x[0]
        fail(i, 8, 'x=%d outside sensor width %d' % (recs['x'][i], width))
    bad_y = np.flatnonzero(recs['y'] >= height)
    if bad_y.size:
        i = bad_y[0]
        fail(i, 10, 'y=%d outside sensor height %d' % (recs['y'][i], height))
    p = recs['p']
    bad_p = np.flatnonzero((p != 1) & (p != -1))
    if bad_p.size:
        i = bad_p[0]
        fail(i, 12, 'polarity %d not in {-1, +1}' % p[i])
    dirty = np.flatnonzero(raw[:, 13:].any(axis=1))
    if dirty.size:
        fail(dirty[0], 13, 'non-zero padding')
    return int(t[-1]) if t.size else last_t


def _numeric_column(frame, name, integer):
    values = pd.to_numeric(frame[name], errors='coerce')
    bad = values.isna().to_numpy()
    if integer:
        bad |= ~np.isclose(values.fillna(0) % 1, 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ParseError('non-numeric %s field %r' % (name, frame[name].iloc[i]), line=i + 2)
    return values.to_numpy()


def _read_events_csv(data, geom):
    frame = pd.read_csv(io.BytesIO(data), dtype=str, keep_default_na=False)
    if list(frame.columns) != CSV_EVENT_HEADER.split(','):
        raise ParseError('expected CSV header %r' % CSV_EVENT_HEADER, line=1)
    t = _numeric_column(frame, 't', integer=True).astype(np.int64)
    x = _numeric_column(frame, 'x', integer=True).astype(np.int64)
    y = _numeric_column(frame, 'y', integer=True).astype(np.int64)
    p = _numeric_column(frame, 'p', integer=True).astype(np.int64)
    g = geom or SensorGeometry()
    checks = [
        (t < 0, 'negative timestamp'),
        (np.concatenate(([False], np.diff(t) < 0)), 'timestamp decreases'),
        ((x < 0) | (x >= g.width), 'x outside sensor width %d' % g.width),
        ((y < 0) | (y >= g.height), 'y outside sensor height %d' % g.height),
        ((p != 1) & (p != -1), 'polarity not in {-1, +1}'),
    ]
    for mask, message in checks:
        if mask.any():
            raise ParseError(message, line=int(np.flatnonzero(mask)[0]) + 2)
    events = np.empty(t.size, dtype=EVENT_DTYPE)
    events['t'], events['x'], events['y'], events['p'] = t, x, y, p
    return events


#### telemetry ####

def read_telemetry(source, columns=None) -> List[GroundTruthSample]:
    """
    Parse a `t_us,x_mm,y_mm` telemetry CSV. `columns` remaps file column names onto the
    declared schema, e.g. {'time': 't_us'}.
    """
    logger.info('... parse telemetry file: %s ...', _describe(source))
    with open_stream(source, 'r') as fh:
        try:
            frame = pd.read_csv(fh, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            return []
    if columns:
        frame = frame.rename(columns=dict(columns))
    missing = [c for c in TELEMETRY_COLUMNS if c not in frame.columns]
    if missing:
        raise ParseError('missing telemetry column(s): %s' % ', '.join(missing), line=1)

    t = _numeric_column(frame, 't_us', integer=True).astype(np.int64)
    x = _numeric_column(frame, 'x_mm', integer=False).astype(float)
    y = _numeric_column(frame, 'y_mm', integer=False).astype(float)
    back = np.flatnonzero(np.diff(t) <= 0)
    if back.size:
        raise ParseError('non-monotone t_us %d' % t[back[0] + 1], line=int(back[0]) + 3)

    samples = []
    for i, (ti, xi, yi) in enumerate(zip(t.tolist(), x.tolist(), y.tolist())):
        try:
            samples.append(GroundTruthSample(ti, xi, yi))
        except DomainError as exc:
            raise ParseError(str(exc), line=i + 2) from None
    logger.info('... %d telemetry samples read from %s ...', len(samples), _describe(source))
    return samples


def telemetry_frame(samples) -> pd.DataFrame:
    return pd.DataFrame({'t_us': np.array([s.t for s in samples], dtype=np.int64),
                         'x_mm': np.array([s.x_mm for s in samples], dtype=float),
                         'y_mm': np.array([s.y_mm for s in samples], dtype=float)})


def write_telemetry(samples, sink):
    with open_stream(sink, 'w') as fh:
        telemetry_frame(samples).to_csv(fh, index=False, lineterminator='\n')
    return len(samples)


#### synchronisation logs ####

def read_log(source) -> List[LogEntry]:
    with open_stream(source, 'r') as fh:
        try:
            frame = pd.read_csv(fh, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            return []
    if list(frame.columns) != list(LOG_COLUMNS):
        raise ParseError('expected log header %r' % ','.join(LOG_COLUMNS), line=1)
    t = _numeric_column(frame, 't_us', integer=True).astype(np.int64)
    return [LogEntry(label, int(ti)) for label, ti in zip(frame['label'], t)]


def write_log(entries, sink):
    frame = pd.DataFrame(list(entries), columns=list(LOG_COLUMNS))
    with open_stream(sink, 'w') as fh:
        frame.to_csv(fh, index=False, lineterminator='\n')
    return len(frame)


def log_time(entries, label) -> Optional[int]:
    for entry in entries:
        if entry.label == label:
            return entry.t_us
    return None


def offset_from_log(entries, prefer=('sync_spike', 'jitter_start', 'homing_complete',
                                     'recording_end')) -> int:
    """Clock offset t_piezo - t_cam from a label logged on both clocks."""
    for name in prefer:
        t_cam = log_time(entries, 'cam.' + name)
        t_piezo = log_time(entries, 'piezo.' + name)
        if t_cam is not None and t_piezo is not None:
            return t_piezo - t_cam
    raise AlignmentNotFoundError('log holds no label stamped on both clocks')


#### clock alignment ####

def _telemetry_spike_onset(telemetry, threshold_mm):
    frame = telemetry_frame(telemetry)
    if frame.empty:
        raise AlignmentNotFoundError('empty telemetry')
    disp = np.hypot(frame['x_mm'].to_numpy(), frame['y_mm'].to_numpy())
    over = np.flatnonzero(disp > threshold_mm)
    if not over.size:
        raise AlignmentNotFoundError('no telemetry sample beyond %.3f mm' % threshold_mm)
    # the spike is fired right after a telemetry read: the previous sample marks the onset
    k = over[0]
    return int(frame['t_us'].iloc[max(k - 1, 0)])


def _burst_runs(hot, merge_gap):
    idx = np.flatnonzero(hot)
    if not idx.size:
        return []
    breaks = np.flatnonzero(np.diff(idx) > merge_gap + 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks], [idx[-1]]))
    return list(zip(starts.tolist(), ends.tolist()))


def _robust_extent(xs, ys):
    lo_x, hi_x = np.percentile(xs, [2, 98])
    lo_y, hi_y = np.percentile(ys, [2, 98])
    return float(np.hypot(hi_x - lo_x, hi_y - lo_y))


def align_clocks(events, telemetry, geom=SensorGeometry(), amplitude_mm=0.1, spike_mm=0.4,
                 bin_us=1000, rate_factor=5.0, baseline_us=1_000_000, merge_gap_us=2000,
                 extent_range=(0.75, 1.5), eps=3.0, min_pts=5) -> ClockAlignment:
    """Locate the sync spike on both clocks and return their offset."""
    from recovery import cluster_labels

    spike_t_piezo = _telemetry_spike_onset(telemetry, 2.0 * amplitude_mm)
    if events.size == 0:
        raise AlignmentNotFoundError('empty event stream')

    t = events['t']
    t0 = int(t[0])
    bins = (t - t0) // bin_us
    counts = np.bincount(bins).astype(float)
    window = max(int(baseline_us // bin_us), 1)
    background = (pd.Series(counts).rolling(window, min_periods=1).median()
                  .shift(1).fillna(0.0).to_numpy())
    floor = np.maximum(background, 1.0)
    hot = counts > rate_factor * floor

    spike_px = mm_to_pixels(spike_mm, geom)
    gap = int(merge_gap_us // bin_us)
    for start, end in _burst_runs(hot, gap):
        lo = np.searchsorted(bins, max(start - gap, 0), side='left')
        hi = np.searchsorted(bins, end, side='right')
        burst = events[lo:hi]
        labels = cluster_labels(burst, eps, min_pts)
        extents = []
        for label in range(labels.max() + 1 if labels.size else 0):
            member = burst[labels == label]
            extents.append(_robust_extent(member['x'].astype(float), member['y'].astype(float)))
        if not extents:
            continue
        ratio = float(np.median(extents)) / spike_px
        if not extent_range[0] <= ratio <= extent_range[1]:
            logger.debug('... burst at %d us rejected, extent ratio %.2f ...',
                         t0 + start * bin_us, ratio)
            continue
        spike_t_cam = int(burst['t'][labels >= 0].min())
        confidence = float(counts[start:end + 1].max() / floor[start])
        logger.info('... sync spike at t_cam=%d us, t_piezo=%d us (confidence %.1f) ...',
                    spike_t_cam, spike_t_piezo, confidence)
        return ClockAlignment(spike_t_piezo - spike_t_cam, spike_t_cam, spike_t_piezo, confidence)

    raise AlignmentNotFoundError('no event burst with a %.1f mm spatial extent' % spike_mm)
