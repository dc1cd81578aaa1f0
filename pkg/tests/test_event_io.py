import io
import struct

import numpy as np
import pandas as pd
import pytest

import event_io
from core_model import (AlignmentNotFoundError, ContractError, GroundTruthSample, ParseError,
                        SensorGeometry, make_events)
from jitter_sim import simulate_sequence


def random_events(n, rng, geom=SensorGeometry()):
    t = np.sort(rng.integers(0, 10**9, n))
    return make_events(t, rng.integers(0, geom.width, n), rng.integers(0, geom.height, n),
                       rng.integers(0, 2, n) * 2 - 1)


def native_bytes(events, **kwargs):
    buf = io.BytesIO()
    event_io.write_events(events, buf, **kwargs)
    return buf.getvalue()


def test_native_round_trip_million_events(rng):
    events = random_events(1_000_000, rng)
    data = native_bytes(events)
    assert len(data) == event_io.HEADER_SIZE + 16 * events.size
    back = event_io.read_events(io.BytesIO(data))
    np.testing.assert_array_equal(back, events)
    assert native_bytes(back) == data


def test_native_header_fields(rng):
    events = random_events(10, rng)
    header, _ = event_io.read_event_file(io.BytesIO(native_bytes(events, t_origin=99)))
    assert (header.width, header.height, header.t_origin, header.event_count) == (1280, 720, 99,
                                                                                   10)
    assert header.magic == b'ESTRTEV1'


def test_csv_round_trip(rng, tmp_path):
    events = random_events(500, rng)
    path = tmp_path / 'events.dat'
    pd.DataFrame({name: events[name] for name in ('t', 'x', 'y', 'p')}).to_csv(path, index=False)
    assert path.read_text().splitlines()[0] == 't,x,y,p'
    np.testing.assert_array_equal(event_io.read_events(str(path)), events)


def test_empty_stream(rng):
    empty = random_events(0, rng)
    assert event_io.read_events(io.BytesIO(native_bytes(empty))).size == 0


def test_writer_refuses_unsorted_events():
    events = make_events([5, 1], [0, 0], [0, 0], [1, 1])
    with pytest.raises(ContractError):
        native_bytes(events)


def test_single_byte_mutations_are_detected(rng):
    events = random_events(200, rng)
    data = native_bytes(events)
    for pos in rng.choice(len(data), size=100, replace=False):
        mutated = bytearray(data)
        mutated[pos] = (mutated[pos] + int(rng.integers(1, 256))) % 256
        with pytest.raises(ParseError) as info:
            event_io.read_events(io.BytesIO(bytes(mutated)))
        assert info.value.offset is not None


def test_bad_magic_is_located():
    with pytest.raises(ParseError) as info:
        event_io.read_events(io.BytesIO(b'NOTMAGIC' + bytes(40)))
    assert info.value.offset == 0


def test_truncated_payload(rng):
    data = native_bytes(random_events(10, rng))
    with pytest.raises(ParseError, match='truncated record') as info:
        event_io.read_events(io.BytesIO(data[:-5]))
    assert info.value.offset == event_io.HEADER_SIZE + 9 * 16
    with pytest.raises(ParseError, match='truncated payload'):
        event_io.read_events(io.BytesIO(data[:-16]))
    with pytest.raises(ParseError, match='truncated header'):
        event_io.read_events(io.BytesIO(data[:20]))


def test_nonzero_padding_names_the_record(rng):
    data = bytearray(native_bytes(random_events(10, rng)))
    data[event_io.HEADER_SIZE + 3 * 16 + 14] = 7
    with pytest.raises(ParseError, match='record 4: non-zero padding') as info:
        event_io.read_events(io.BytesIO(bytes(data)))
    assert info.value.offset == event_io.HEADER_SIZE + 3 * 16 + 13


def test_geometry_mismatch(rng):
    data = native_bytes(random_events(3, rng))
    with pytest.raises(ParseError, match='does not match'):
        event_io.read_events(io.BytesIO(data), SensorGeometry(width=640, height=480))


def test_csv_errors_are_located():
    text = b't,x,y,p\n1,2,3,1\n2,2,3,0\n'
    with pytest.raises(ParseError, match='polarity') as info:
        event_io.read_events(io.BytesIO(text))
    assert info.value.line == 3
    with pytest.raises(ParseError) as info:
        event_io.read_events(io.BytesIO(b't,x,y,p\n5,1,1,1\n4,1,1,1\n'))
    assert info.value.line == 3
    with pytest.raises(ParseError) as info:
        event_io.read_events(io.BytesIO(b't,x,y,p\nabc,1,1,1\n'))
    assert info.value.line == 2


def test_header_crc_covers_header(rng):
    data = bytearray(native_bytes(random_events(5, rng)))
    stored = struct.unpack_from('<I', data, event_io.CRC_OFFSET)[0]
    struct.pack_into('<Q', data, 12, 1234)
    with pytest.raises(ParseError, match='checksum') as info:
        event_io.read_events(io.BytesIO(bytes(data)))
    assert '%08x' % stored in str(info.value)


#### telemetry and logs ####

def test_telemetry_round_trip(tmp_path):
    samples = [GroundTruthSample(0, 0.0, 0.0), GroundTruthSample(33333, 0.05, -0.01),
               GroundTruthSample(66667, 0.1, 0.0)]
    path = tmp_path / 'seq.csv'
    event_io.write_telemetry(samples, str(path))
    back = event_io.read_telemetry(str(path))
    assert [s.t for s in back] == [0, 33333, 66667]
    np.testing.assert_allclose([s.x_mm for s in back], [0.0, 0.05, 0.1])


def test_telemetry_column_remap():
    text = io.StringIO('time,x,y\n0,0.0,0.0\n10,0.1,0.0\n')
    samples = event_io.read_telemetry(text, columns={'time': 't_us', 'x': 'x_mm', 'y': 'y_mm'})
    assert [s.t for s in samples] == [0, 10]


def test_telemetry_errors():
    with pytest.raises(ParseError, match='missing') as info:
        event_io.read_telemetry(io.StringIO('t_us,x_mm\n0,0.0\n'))
    assert info.value.line == 1
    with pytest.raises(ParseError, match='non-monotone') as info:
        event_io.read_telemetry(io.StringIO('t_us,x_mm,y_mm\n0,0,0\n10,0,0\n10,0,0\n'))
    assert info.value.line == 4
    with pytest.raises(ParseError, match='stage range') as info:
        event_io.read_telemetry(io.StringIO('t_us,x_mm,y_mm\n0,0,0\n10,30,0\n'))
    assert info.value.line == 3


def test_log_round_trip_and_offset():
    entries = [event_io.LogEntry('cam.sync_spike', 1000), event_io.LogEntry('piezo.sync_spike',
                                                                           51000)]
    buf = io.StringIO()
    event_io.write_log(entries, buf)
    buf.seek(0)
    back = event_io.read_log(buf)
    assert back == entries
    assert event_io.offset_from_log(back) == 50000
    assert event_io.log_time(back, 'cam.missing') is None


def test_offset_from_log_needs_both_clocks():
    with pytest.raises(AlignmentNotFoundError):
        event_io.offset_from_log([event_io.LogEntry('cam.sync_spike', 10)])


#### clock alignment ####

@pytest.fixture(scope='module')
def spiked_sequence():
    from jitter_sim import SimConfig
    config = SimConfig(band='fast', axes='axis1', stars=4, seed=3, duration_s=3.0,
                       baseline_s=1.0, homing_s=1.0)
    return simulate_sequence(config)


@pytest.mark.parametrize('offset_us', [-1_000_000, -50_000, 0, 50_000, 1_000_000])
def test_align_clocks_recovers_offset(spiked_sequence, offset_us):
    telemetry = [GroundTruthSample(s.t + offset_us, s.x_mm, s.y_mm)
                 for s in spiked_sequence.telemetry]
    alignment = event_io.align_clocks(spiked_sequence.events, telemetry)
    assert abs(alignment.offset_us - offset_us) <= 2500
    assert alignment.spike_t_piezo == spiked_sequence.trajectory.spike_t_us + offset_us
    assert alignment.confidence >= 1.0


def test_alignment_agrees_with_log(spiked_sequence):
    alignment = event_io.align_clocks(spiked_sequence.events, spiked_sequence.telemetry)
    assert abs(alignment.offset_us - event_io.offset_from_log(spiked_sequence.logs)) <= 2500


def test_alignment_without_spike():
    from jitter_sim import SimConfig
    config = SimConfig(band='fast', axes='axis1', stars=4, seed=3, duration_s=3.0,
                       baseline_s=1.0, homing_s=1.0, episode20_compat=True)
    seq = simulate_sequence(config)
    with pytest.raises(AlignmentNotFoundError):
        event_io.align_clocks(seq.events, seq.telemetry)
