import io

import numpy as np
import pytest

import telemetry_queue as tq
from core_model import DomainError, GroundTruthSample, ParseError


def test_macro_step_register_layout():
    state = tq.QueueWriterState()
    for _ in range(3):
        state, registers = tq.macro_step(state, 0.1, 10_000)
    assert state.loop_count == 3
    assert state.step_count == 12
    assert registers[0] == 2.0
    assert [registers[i] for i in (2, 4, 6, 8)] == [9.0, 10.0, 11.0, 12.0]
    assert registers[1] == pytest.approx(0.1) and registers[5] == pytest.approx(0.0)


def test_macro_follows_vibrate_commands(vibrate_commands):
    commands = vibrate_commands(0.1, 5)
    positions = {1: 0.0, 2: 0.0}
    trace = []
    for axis, delta in commands:
        positions[axis] += delta
        trace.append(positions[axis])
    state = tq.QueueWriterState()
    logged = []
    for _ in range(5):
        state, registers = tq.macro_step(state, 0.1, 10_000)
        logged.extend(registers[i] for i in (1, 3, 5, 7))
    np.testing.assert_allclose(logged, trace, atol=1e-12)


def test_macro_step_rejects_bad_parameters():
    with pytest.raises(DomainError):
        tq.macro_step(tq.QueueWriterState(), 0.0, 10_000)


def test_consistent_snapshot_yields_four_entries():
    snap = tq.RegisterSnapshot((4.0, 0.1, 17.0, 0.1, 18.0, 0.0, 19.0, 0.0, 20.0))
    entries = tq.validate_snapshot(snap)
    assert [e.step_count for e in entries] == [17, 18, 19, 20]
    assert entries[0].axis1_pos == 0.1 and entries[0].axis2_pos is None
    assert entries[1].axis2_pos == 0.1
    assert {e.loop_count for e in entries} == {4}


def test_torn_snapshot_keeps_newest_consistent_suffix():
    # r6 may already hold loop 5's reading while r7 still counts loop 4
    snap = tq.RegisterSnapshot((5.0, 0.1, 21.0, 0.1, 22.0, 0.0, 19.0, 0.0, 20.0))
    assert [e.step_count for e in tq.validate_snapshot(snap)] == [20]


def test_position_written_ahead_of_its_counter_is_dropped():
    # loop 5 wrote r1 and r2, r3 still counts step 17 of loop 4
    snap = tq.RegisterSnapshot((5.0, 0.777, 17.0, 0.1, 18.0, 0.0, 19.0, 0.0, 20.0))
    entries = tq.validate_snapshot(snap)
    assert [e.step_count for e in entries] == [18, 19, 20]
    assert all(e.axis1_pos != 0.777 for e in entries)


def test_loop_count_bounds_the_counters():
    assert [e.step_count for e in tq.validate_snapshot(
        tq.RegisterSnapshot((1.0, 0, 5.0, 0, 6.0, 0, 7.0, 0, 8.0)))] == [5, 6, 7, 8]
    assert [e.step_count for e in tq.validate_snapshot(
        tq.RegisterSnapshot((0.0, 0, 9.0, 0, 10.0, 0, 3.0, 0, 4.0)))] == [3, 4]
    assert [e.step_count for e in tq.validate_snapshot(
        tq.RegisterSnapshot((0.0, 0, 4.0, 0, 3.0, 0, 2.0, 0, 1.0)))] == [1]
    # counters of a loop r1 has not reached yet
    assert tq.validate_snapshot(
        tq.RegisterSnapshot((0.0, 0, 5.0, 0, 6.0, 0, 7.0, 0, 8.0))) == []
    assert tq.validate_snapshot(
        tq.RegisterSnapshot((1.5, 0, 5.0, 0, 6.0, 0, 7.0, 0, 8.0))) == []


def test_unwritten_registers_are_ignored():
    assert tq.validate_snapshot(tq.RegisterSnapshot((0.0,) * 9)) == []
    with pytest.raises(DomainError):
        tq.RegisterSnapshot((0.0,) * 8)


def test_decode_timestamps():
    snap = tq.RegisterSnapshot((0.0, 0.1, 1.0, 0.1, 2.0, 0.0, 3.0, 0.0, 4.0))
    entries = tq.decode_entries([snap, snap], delay_us=10_000, t0_us=1_000)
    assert [e.t for e in entries] == [1_000 + k * 25_000 for k in (1, 2, 3, 4)]


@pytest.mark.parametrize('ratio', [1, 2, 4, 8])
def test_loop_reads_are_lossless_up_to_eight(ratio):
    sim = tq.cosimulate(1000, ratio)
    assert sim.recovered_fraction(10_000) == 1.0


def test_slow_reader_loses_data_but_stays_ordered():
    sim = tq.cosimulate(1000, 16)
    entries = tq.decode_entries(sim.snapshots, 10_000)
    assert sim.recovered_fraction(10_000) < 1.0
    steps = [e.step_count for e in entries]
    assert all(a < b for a, b in zip(steps, steps[1:]))


@pytest.mark.parametrize('seed', range(6))
def test_reads_at_any_point_decode_only_written_entries(seed):
    rng = np.random.default_rng(seed)
    readings = rng.integers(-50, 51, size=(400, 4)) / 500.0
    sim = tq.cosimulate(400, 3, read_points='any', readings=readings, seed=seed)
    written = {(e.step_count, e.axis1_pos, e.axis2_pos) for e in sim.written}
    decoded = tq.decode_entries(sim.snapshots, 10_000)
    assert len(decoded) > 0.4 * len(written)
    for e in decoded:
        assert (e.step_count, e.axis1_pos, e.axis2_pos) in written


def test_cosimulate_validation():
    with pytest.raises(DomainError):
        tq.cosimulate(10, 0)
    with pytest.raises(DomainError):
        tq.cosimulate(10, 4, read_points='sometimes')


def test_reconstruct_trajectory_holds_other_axis():
    sim = tq.cosimulate(3, 1, readings=[(0.1, 0.2, 0.0, 0.0)] * 3)
    samples = tq.reconstruct_trajectory(sim.snapshots, 10_000)
    assert len(samples) == 12
    assert (samples[0].x_mm, samples[0].y_mm) == (0.1, 0.0)
    assert (samples[1].x_mm, samples[1].y_mm) == (0.1, 0.2)
    assert (samples[2].x_mm, samples[2].y_mm) == (0.0, 0.2)


def test_transmit_samples():
    samples = [GroundTruthSample(k * 33_333, 0.1 * (k % 2), 0.0) for k in range(101)]
    assert tq.transmit_samples(samples, 8) == samples
    kept = tq.transmit_samples(samples, 16)
    assert 0 < len(kept) < len(samples)
    assert [s.t for s in kept] == sorted(s.t for s in kept)
    assert tq.transmit_samples([], 8) == []


def test_snapshot_trace_round_trip():
    sim = tq.cosimulate(20, 8)
    buf = io.StringIO()
    tq.write_snapshot_trace(sim.snapshots, buf)
    buf.seek(0)
    back = tq.read_snapshot_trace(buf)
    assert back == sim.snapshots


def test_snapshot_trace_errors():
    header = ','.join(tq.TRACE_COLUMNS)
    with pytest.raises(ParseError) as info:
        tq.read_snapshot_trace(io.StringIO(header + '\n0,1,2,3,4,5,6,7,8,9\n5,1,2,x,4,5,6,7,8,9\n'))
    assert info.value.line == 3
    with pytest.raises(ParseError) as info:
        tq.read_snapshot_trace(io.StringIO('t,r1\n0,1\n'))
    assert info.value.line == 1
