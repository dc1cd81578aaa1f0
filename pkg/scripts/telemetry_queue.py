#!/usr/bin/env python3
"""
Nine-register circular queue used to stream actuator positions off the controller.

Register layout written by one loop of the controller macro (1-based):

  r1 LoopCount   r2 AXIS1_POS   r3 StepCount    r4 AXIS2_POS   r5 StepCount     (after +a)
                 r6 AXIS1_POS   r7 StepCount    r8 AXIS2_POS   r9 StepCount     (after -a)

The StepCount registers (r3, r5, r7, r9) pair each position reading with the number of motion
commands executed so far. A host snapshot is trusted only where those counters increase from
top to bottom; the newest consistent suffix survives, older or torn entries are dropped.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core_model import DomainError, GroundTruthSample, ParseError, open_stream


logger = logging.getLogger(__name__)

N_REGISTERS = 9
# 0-based (position register, StepCount register, axis) for the four readings of a loop
READINGS = ((1, 2, 1), (3, 4, 2), (5, 6, 1), (7, 8, 2))
DATA_WRITES_PER_LOOP = 8
TRACE_COLUMNS = ['read_t_us'] + ['r%d' % i for i in range(1, N_REGISTERS + 1)]


@dataclass(frozen=True)
class IoModel:
    set_latency_us: int = 15_000
    read_latency_us: int = 32_000

    def step_period(self, delay_us):
        return delay_us + self.set_latency_us


@dataclass(frozen=True)
class QueueWriterState:
    loop_count: int = 0
    step_count: int = 0
    axis1_pos: float = 0.0
    axis2_pos: float = 0.0
    registers: Tuple[float, ...] = (0.0,) * N_REGISTERS


@dataclass(frozen=True)
class RegisterSnapshot:
    values: Tuple[float, ...]
    read_t: int = 0

    def __post_init__(self):
        if len(self.values) != N_REGISTERS:
            raise DomainError('a snapshot holds exactly %d registers, got %d'
                              % (N_REGISTERS, len(self.values)))


@dataclass(frozen=True)
class QueueEntry:
    """One position reading; only the axis that was read carries a value."""

    loop_count: int
    step_count: int
    axis1_pos: Optional[float] = None
    axis2_pos: Optional[float] = None
    t: Optional[int] = None


def loop_writes(loop_count, step_count, readings) -> List[Tuple[int, float]]:
    """Register writes (0-based index, value) of one macro loop, in execution order."""
    a1_up, a2_up, a1_down, a2_down = readings
    s = step_count
    return [(0, float(loop_count)),
            (1, a1_up), (2, float(s + 1)),
            (3, a2_up), (4, float(s + 2)),
            (5, a1_down), (6, float(s + 3)),
            (7, a2_down), (8, float(s + 4))]


def macro_step(state, amplitude, delay_us) -> Tuple[QueueWriterState, Tuple[float, ...]]:
    """Execute one loop of the circular-queue macro; returns the new state and register image."""
    if amplitude <= 0 or delay_us <= 0:
        raise DomainError('amplitude and delay must be > 0')
    up1 = state.axis1_pos + amplitude
    up2 = state.axis2_pos + amplitude
    registers = list(state.registers)
    writes = loop_writes(state.loop_count, state.step_count,
                         (up1, up2, up1 - amplitude, up2 - amplitude))
    for index, value in writes:
        registers[index] = value
    new_state = QueueWriterState(loop_count=state.loop_count + 1,
                                 step_count=state.step_count + 4,
                                 axis1_pos=up1 - amplitude,
                                 axis2_pos=up2 - amplitude,
                                 registers=tuple(registers))
    return new_state, new_state.registers


def validate_snapshot(snapshot) -> List[QueueEntry]:
    """
    Entries of the maximal suffix whose StepCounts strictly increase top to bottom, checked
    against LoopCount (r1).

    A position register is written just before its StepCount, so a read landing between the two
    pairs the next loop's position with the old counter. Only the oldest pair of the suffix can
    be caught that way, and only once r1 shows a later loop than the pair's own; it is dropped.
    Counters from a loop newer than r1 cannot exist and are dropped too.
    """
    values = snapshot.values
    loop = values[0]
    if loop < 0 or loop != math.floor(loop):
        return []
    loop = int(loop)
    steps = [values[step_reg] for _, step_reg, _ in READINGS]
    k = len(steps) - 1
    while k > 0 and steps[k - 1] < steps[k]:
        k -= 1
    entries = []
    for pos_reg, step_reg, axis in READINGS[k:]:
        step = values[step_reg]
        # never-written registers read as zero; fractional counters are corrupt
        if step < 1 or step != math.floor(step):
            continue
        step = int(step)
        written_in = (step - 1) // 4
        if written_in > loop:
            continue
        if not entries and pos_reg == READINGS[k][0] and written_in < loop:
            continue
        pos = float(values[pos_reg])
        entries.append(QueueEntry(loop_count=written_in, step_count=step,
                                  axis1_pos=pos if axis == 1 else None,
                                  axis2_pos=pos if axis == 2 else None))
    return entries


def decode_entries(snapshots, delay_us, io_model=IoModel(), t0_us=0) -> List[QueueEntry]:
    """Validated entries of all snapshots, deduplicated and timestamped, by StepCount."""
    unique = {}
    for snapshot in snapshots:
        for entry in validate_snapshot(snapshot):
            unique.setdefault((entry.loop_count, entry.step_count), entry)
    period = io_model.step_period(delay_us)
    return [QueueEntry(e.loop_count, e.step_count, e.axis1_pos, e.axis2_pos,
                       int(t0_us + e.step_count * period))
            for _, e in sorted(unique.items(), key=lambda kv: kv[0][1])]


def reconstruct_trajectory(snapshots, delay_us, io_model=IoModel(),
                           t0_us=0) -> List[GroundTruthSample]:
    """
    One sample per decoded StepCount. Each entry updates the axis it read; the other axis keeps
    its latest decoded position (home until first read).
    """
    entries = decode_entries(snapshots, delay_us, io_model, t0_us)
    axis1 = axis2 = 0.0
    samples = []
    for e in entries:
        if e.axis1_pos is not None:
            axis1 = e.axis1_pos
        if e.axis2_pos is not None:
            axis2 = e.axis2_pos
        samples.append(GroundTruthSample(e.t, axis1, axis2))
    if snapshots:
        logger.info('... %d samples decoded from %d snapshots ...', len(samples), len(snapshots))
    return samples


#### writer/reader co-simulation ####

@dataclass
class CoSimulation:
    written: List[QueueEntry] = field(default_factory=list)
    snapshots: List[RegisterSnapshot] = field(default_factory=list)

    def recovered_fraction(self, delay_us, io_model=IoModel()):
        if not self.written:
            return 1.0
        return len(decode_entries(self.snapshots, delay_us, io_model)) / len(self.written)


def cosimulate(n_iterations, ratio, amplitude=0.1, delay_us=10_000, io_model=IoModel(),
               read_points='loop', readings=None, seed=None) -> CoSimulation:
    """
    Drive the macro writer and the host reader from one scheduler.

    `ratio` counts data-register writes (8 per loop) per host read request. With
    read_points='loop' the controller serves pending requests when a loop completes, so every
    loop is read while ratio <= 8. With read_points='any' requests arrive after exponentially
    distributed numbers of writes (mean `ratio`) and are served immediately, tearing loops.
    """
    if ratio <= 0:
        raise DomainError('read ratio must be > 0')
    if read_points not in ('loop', 'any'):
        raise DomainError('read_points must be "loop" or "any"')
    rng = np.random.default_rng(seed)
    period = io_model.step_period(delay_us)
    registers = [0.0] * N_REGISTERS
    sim = CoSimulation()
    data_writes = 0
    next_request = float(ratio) if read_points == 'loop' else rng.exponential(ratio)

    def serve(t_now):
        nonlocal next_request
        while next_request <= data_writes:
            sim.snapshots.append(RegisterSnapshot(tuple(registers),
                                                  int(t_now + io_model.read_latency_us)))
            next_request += ratio if read_points == 'loop' else rng.exponential(ratio)

    for k in range(n_iterations):
        if readings is None:
            loop_readings = (amplitude, amplitude, 0.0, 0.0)
        else:
            loop_readings = tuple(float(v) for v in readings[k])
        for index, value in loop_writes(k, 4 * k, loop_readings):
            registers[index] = value
            if index in (2, 4, 6, 8):
                step = int(value)
                pos = registers[index - 1]
                axis = 1 if index in (2, 6) else 2
                sim.written.append(QueueEntry((step - 1) // 4, step,
                                              pos if axis == 1 else None,
                                              pos if axis == 2 else None,
                                              int(step * period)))
            if index:
                data_writes += 1
            if read_points == 'any':
                serve(4 * k * period + (index + 1) * period / 2)
        if read_points == 'loop':
            serve((4 * k + 4) * period)
    return sim


def transmit_samples(samples, ratio, delay_us=10_000, io_model=IoModel(),
                     seed=None) -> List[GroundTruthSample]:
    """
    Push telemetry samples through the queue (sample i rides on StepCount i+1) and keep the
    ones the host decodes.
    """
    n = len(samples)
    if n == 0:
        return []
    n_loops = int(math.ceil(n / 4.0))
    padded = list(samples) + [samples[-1]] * (4 * n_loops - n)
    readings = [(padded[4 * k].x_mm, padded[4 * k + 1].y_mm,
                 padded[4 * k + 2].x_mm, padded[4 * k + 3].y_mm) for k in range(n_loops)]
    sim = cosimulate(n_loops, ratio, delay_us=delay_us, io_model=io_model, readings=readings,
                     seed=seed)
    steps = [e.step_count for e in decode_entries(sim.snapshots, delay_us, io_model)]
    kept = [samples[s - 1] for s in steps if s <= n]
    if len(kept) < n:
        logger.warning('... telemetry queue dropped %d of %d samples (ratio %g) ...',
                       n - len(kept), n, ratio)
    return kept


#### snapshot traces ####

def write_snapshot_trace(snapshots: Sequence[RegisterSnapshot], sink):
    frame = pd.DataFrame([(s.read_t,) + tuple(s.values) for s in snapshots],
                         columns=TRACE_COLUMNS)
    frame['read_t_us'] = frame['read_t_us'].astype(np.int64)
    with open_stream(sink, 'w') as fh:
        frame.to_csv(fh, index=False, lineterminator='\n')
    return len(frame)


def read_snapshot_trace(source) -> List[RegisterSnapshot]:
    with open_stream(source, 'r') as fh:
        try:
            frame = pd.read_csv(fh, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            return []
    if list(frame.columns) != TRACE_COLUMNS:
        raise ParseError('expected trace header %s' % ','.join(TRACE_COLUMNS), line=1)
    numeric = frame.apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        raise ParseError('non-numeric register value', line=int(np.flatnonzero(bad)[0]) + 2)
    read_t = numeric['read_t_us'].to_numpy()
    back = np.flatnonzero(np.diff(read_t) < 0)
    if back.size:
        raise ParseError('read_t_us goes backwards', line=int(back[0]) + 3)
    regs = numeric[TRACE_COLUMNS[1:]].to_numpy(dtype=float)
    return [RegisterSnapshot(tuple(row.tolist()), int(t)) for t, row in zip(read_t, regs)]
