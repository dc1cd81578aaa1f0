#!/usr/bin/env python3

"""
estrt: simulate, estimate and evaluate stage jitter on event-camera star-field sequences.

Usage:
python estrt.py [--seed=SEED --config=CONFIG_YAML --out=OUTPUT_DIR --verbose] COMMAND [options]

Commands:
  simulate           write <label>.dat, <label>.csv and <label>.log for one sequence (or --episode)
  estimate           run the recovery pipeline over an event file, write <name>.estimates.csv
  evaluate           score estimates against telemetry, write report, interval and heatmap CSVs
  decode-telemetry   rebuild telemetry from a register-snapshot trace
  align              locate the sync spike and print the camera/actuator clock offset as JSON
  results            tabulate every <label>.report.csv of a directory next to reference values

Exit status: 0 success, 1 data error, 2 usage error.
"""


import argparse
import contextlib
import glob
import json
import logging
import os
import sys
import tempfile
from dataclasses import fields, replace

import pandas as pd
import yaml

import event_io
import evaluation
import recovery
import telemetry_queue
from core_model import BANDS, STATIC, Axes, DomainError, JitterError, SensorGeometry, get_band
from jitter_sim import SimConfig, episode_configs, simulate_sequence


logger = logging.getLogger('estrt')

BAND_CHOICES = [STATIC] + list(BANDS)
AXES_CHOICES = [a.value for a in Axes]
CONFIG_SECTIONS = ('simulation', 'pipeline')


#### configuration ####

def load_run_config(path):
    """Read the YAML run configuration; returns {'simulation': {...}, 'pipeline': {...}}."""
    if path is None:
        return {}
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise DomainError('cannot parse config %s: %s' % (path, exc)) from None
    if not isinstance(doc, dict):
        raise DomainError('config %s must be a mapping' % path)
    unknown = sorted(set(doc) - set(CONFIG_SECTIONS))
    if unknown:
        raise DomainError('unknown config section(s): %s' % ', '.join(unknown))
    return doc


def pipeline_config(args, doc) -> recovery.PipelineConfig:
    """Pipeline settings: CLI flags over the `pipeline:` section over the band defaults."""
    section = dict(doc.get('pipeline') or {})
    band_name = getattr(args, 'band', None) or section.pop('band', None)
    section.pop('band', None)
    known = {f.name for f in fields(recovery.PipelineConfig)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise DomainError('unknown pipeline option(s): %s' % ', '.join(unknown))
    flags = {'t_batch_s': getattr(args, 't_batch', None), 'n_c': getattr(args, 'n_c', None),
             'eps': getattr(args, 'eps', None), 'min_pts': getattr(args, 'min_pts', None),
             'radius': getattr(args, 'radius', None),
             'min_support': getattr(args, 'min_support', None),
             'support': getattr(args, 'support', None)}
    section.update({k: v for k, v in flags.items() if v is not None})
    if 't_batch_s' in section:
        return recovery.PipelineConfig(**section)
    if band_name is None:
        raise DomainError('need --band or --t-batch to size the batches')
    # static sequences carry no band; they are batched like the slow band
    band = get_band(band_name) or BANDS['slow']
    return recovery.PipelineConfig.for_band(band, **section)


#### output ####

@contextlib.contextmanager
def atomic_output(path, mode='w'):
    """Write to a temporary file next to `path` and rename it into place on success."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.%s.' % os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline=None if 'b' in mode else '') as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def output_path(args, name):
    return os.path.join(args.out, name)


def stem(path):
    name = os.path.basename(path)
    for suffix in ('.estimates.csv', '.dat', '.csv'):
        if name.endswith(suffix):
            return name[:-len(suffix)]
    return os.path.splitext(name)[0]


#### commands ####

def cmd_simulate(args, doc):
    overrides = {'band': args.band, 'axes': args.axes, 'stars': args.stars,
                 'noise_rate': args.noise_rate, 'duration_s': args.duration,
                 'seed': args.seed, 'queue_loss_ratio': args.queue_ratio,
                 'clock_offset_us': args.clock_offset_us, 'drift_px_per_s': args.drift,
                 'episode20_compat': True if args.no_spike else None}
    base = SimConfig.from_mapping(doc.get('simulation'), **overrides)
    if args.episode:
        configs = [replace(base, band=c.band, axes=c.axes, seed=c.seed)
                   for c in episode_configs(base.seed)]
    else:
        configs = [base]

    geom = SensorGeometry()
    for config in configs:
        seq = simulate_sequence(config, geom)
        prefix = output_path(args, config.label)
        with atomic_output(prefix + '.dat', 'wb') as fh:
            event_io.write_events(seq.events, fh, geom)
        with atomic_output(prefix + '.csv') as fh:
            event_io.write_telemetry(seq.telemetry, fh)
        with atomic_output(prefix + '.log') as fh:
            event_io.write_log(seq.logs, fh)
        print('✓ %-14s %9d events  %5d telemetry samples  seed %d -> %s.{dat,csv,log}'
              % (config.label, seq.events.size, len(seq.telemetry), config.seed, prefix))
    return 0


def cmd_estimate(args, doc):
    config = pipeline_config(args, doc)
    geom = SensorGeometry()
    events = event_io.read_events(args.events, geom)
    duration_us = None if args.duration is None else int(round(args.duration * 1e6))
    estimates = recovery.run_pipeline(events, config, duration_us, geom)

    path = args.output or output_path(args, stem(args.events) + '.estimates.csv')
    with atomic_output(path) as fh:
        recovery.write_estimates(estimates, fh, config)

    print('✓ %d batches (t_batch=%g s, N_c=%d, %s support) -> %s'
          % (len(estimates), config.t_batch_s, config.n_c, config.support, path))
    for name, count in recovery.flag_summary(estimates).items():
        print('    %-28s %d' % (name, count))
    return 0


def resolve_offset(args, telemetry, log_entries):
    """Clock offset from --offset-us, else the sync spike in --events, else the --log."""
    if args.offset_us is not None:
        return int(args.offset_us), 'option'
    if args.events is not None:
        events = event_io.read_events(args.events)
        try:
            return event_io.align_clocks(events, telemetry).offset_us, 'sync spike'
        except JitterError as exc:
            if log_entries is None:
                raise
            logger.warning('... %s; falling back to the synchronisation log ...', exc)
    if log_entries is not None:
        return event_io.offset_from_log(log_entries), 'log'
    logger.warning('... no alignment source given, assuming a zero clock offset ...')
    return 0, 'assumed'


def cmd_evaluate(args, doc):
    estimates, meta = recovery.read_estimates(args.estimates)
    if 't_batch_s' in meta and args.t_batch is None:
        t_batch_s = meta['t_batch_s']
    else:
        t_batch_s = pipeline_config(args, doc).t_batch_s
    telemetry = event_io.read_telemetry(args.telemetry)
    log_entries = event_io.read_log(args.log) if args.log else None
    offset_us, source = resolve_offset(args, telemetry, log_entries)
    recording_end = score_from = None
    if log_entries is not None:
        recording_end = event_io.log_time(log_entries, 'cam.recording_end')
        if args.jitter_only:
            score_from = event_io.log_time(log_entries, 'cam.jitter_start')
    if args.jitter_only and score_from is None:
        raise DomainError('--jitter-only needs a log holding cam.jitter_start')

    band = args.band or ''
    axes = args.axes or ''
    geom = SensorGeometry()
    report, aggregates = evaluation.evaluate_sequence(estimates, t_batch_s, telemetry, offset_us,
                                                      geom, band, axes, recording_end,
                                                      score_from)

    name = args.name or stem(args.estimates)
    prefix = output_path(args, name)
    with atomic_output(prefix + '.report.csv') as fh:
        row = dict(report.to_dict(), offset_us=offset_us, t_batch_s=t_batch_s)
        pd.DataFrame([row]).to_csv(fh, index=False, lineterminator='\n')
    with atomic_output(prefix + '.report.json') as fh:
        json.dump(dict(report.to_dict(), offset_us=offset_us, offset_source=source), fh,
                  indent=2)
    with atomic_output(prefix + '.intervals.csv') as fh:
        evaluation.interval_frame(aggregates, telemetry, geom).to_csv(fh, index=False,
                                                                      lineterminator='\n')
    with atomic_output(prefix + '.heatmap.csv') as fh:
        evaluation.heatmap_frame(evaluation.estimate_heatmap(estimates)).to_csv(
            fh, lineterminator='\n')

    print('=' * 70)
    print('JITTER RECOVERY ERROR (%s) - pixels' % name)
    print('=' * 70)
    print('clock offset      %d us (%s)' % (offset_us, source))
    print('intervals         %d' % report.n_intervals)
    print('Error Axis1       %.3f' % report.rmse_axis1)
    print('Error Axis2       %.3f' % report.rmse_axis2)
    print('Error combined    %.3f' % report.rmse_combined)
    print('=' * 70)
    print('✓ Saved: %s.{report.csv,report.json,intervals.csv,heatmap.csv}' % prefix)
    return 0


def cmd_decode_telemetry(args, doc):
    snapshots = telemetry_queue.read_snapshot_trace(args.trace)
    t0 = args.t0_us
    if t0 is None and args.log:
        t0 = event_io.log_time(event_io.read_log(args.log), 'piezo.homing_complete')
    if t0 is None:
        t0 = 0
    io_model = telemetry_queue.IoModel(set_latency_us=args.set_latency_us)
    samples = telemetry_queue.reconstruct_trajectory(snapshots, args.delay_us, io_model, t0)
    path = args.output or output_path(args, stem(args.trace) + '.telemetry.csv')
    with atomic_output(path) as fh:
        event_io.write_telemetry(samples, fh)
    print('✓ %d samples decoded from %d snapshots -> %s' % (len(samples), len(snapshots), path))
    return 0


def cmd_align(args, doc):
    events = event_io.read_events(args.events)
    telemetry = event_io.read_telemetry(args.telemetry)
    alignment = event_io.align_clocks(events, telemetry, amplitude_mm=args.amplitude)
    text = json.dumps(alignment.to_dict(), indent=2)
    if args.output:
        with atomic_output(args.output) as fh:
            fh.write(text + '\n')
    print(text)
    return 0


def cmd_results(args, doc):
    paths = sorted(glob.glob(os.path.join(args.directory, '*.report.csv')))
    if not paths:
        raise DomainError('no *.report.csv under %s' % args.directory)
    names = [f.name for f in fields(evaluation.ErrorReport)]
    reports = []
    for path in paths:
        frame = pd.read_csv(path, dtype={'band': str, 'axes': str}, keep_default_na=False)
        for row in frame[names].to_dict(orient='records'):
            reports.append(evaluation.ErrorReport(**row))
    table = evaluation.results_table(reports, with_reference=True)
    path = args.output or os.path.join(args.directory, 'results_table.csv')
    with atomic_output(path) as fh:
        table.to_csv(fh, float_format='%.3f', lineterminator='\n')
    print(table.to_string(float_format='%.3f'))
    print('✓ %d reports -> %s' % (len(reports), path))
    return 0


#### argument parsing ####

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=argparse.SUPPRESS)
    common.add_argument('--config', default=argparse.SUPPRESS, help='YAML run configuration')
    common.add_argument('--out', default=argparse.SUPPRESS, help='output directory')
    common.add_argument('--verbose', action='store_true', default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog='estrt', parents=[common],
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.set_defaults(seed=None, config=None, out='.', verbose=False)
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    def pipeline_flags(p):
        p.add_argument('--band', choices=BAND_CHOICES)
        p.add_argument('--t-batch', dest='t_batch', type=float, help='batch length in seconds')
        p.add_argument('--n-c', dest='n_c', type=int)
        p.add_argument('--eps', type=float)
        p.add_argument('--min-pts', dest='min_pts', type=int)
        p.add_argument('--radius', type=float)
        p.add_argument('--min-support', dest='min_support', type=int)
        p.add_argument('--support', choices=recovery.SUPPORT_MODES,
                       help='contrast-image state (default) or the batch events')

    p = sub.add_parser('simulate', parents=[common], help='generate synthetic sequences')
    p.add_argument('--band', choices=BAND_CHOICES)
    p.add_argument('--axes', choices=AXES_CHOICES)
    p.add_argument('--episode', action='store_true', help='all ten sequences of an episode')
    p.add_argument('--stars', type=int)
    p.add_argument('--noise-rate', dest='noise_rate', type=float, help='events/s/pixel')
    p.add_argument('--duration', type=float, help='seconds')
    p.add_argument('--queue-ratio', dest='queue_ratio', type=float,
                   help='route telemetry through the register queue at this write:read ratio')
    p.add_argument('--clock-offset-us', dest='clock_offset_us', type=int)
    p.add_argument('--drift', type=float, help='sidereal drift in px/s')
    p.add_argument('--no-spike', dest='no_spike', action='store_true',
                   help='omit the sync spike (episode 20 compatibility)')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('estimate', parents=[common], help='recover jitter from events')
    p.add_argument('events')
    pipeline_flags(p)
    p.add_argument('--duration', type=float, help='seconds of stream to batch')
    p.add_argument('--output')
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser('evaluate', parents=[common], help='score estimates against telemetry')
    p.add_argument('--estimates', required=True)
    p.add_argument('--telemetry', required=True)
    p.add_argument('--events', help='event file for sync-spike alignment')
    p.add_argument('--log', help='synchronisation log')
    p.add_argument('--offset-us', dest='offset_us', type=int)
    p.add_argument('--axes', choices=AXES_CHOICES)
    p.add_argument('--jitter-only', dest='jitter_only', action='store_true',
                   help='score only intervals after cam.jitter_start')
    p.add_argument('--name')
    pipeline_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('decode-telemetry', parents=[common], help='decode a register trace')
    p.add_argument('trace')
    p.add_argument('--delay-us', dest='delay_us', type=int, default=10_000)
    p.add_argument('--set-latency-us', dest='set_latency_us', type=int, default=15_000)
    p.add_argument('--t0-us', dest='t0_us', type=int)
    p.add_argument('--log', help='synchronisation log holding piezo.homing_complete')
    p.add_argument('--output')
    p.set_defaults(func=cmd_decode_telemetry)

    p = sub.add_parser('align', parents=[common], help='estimate the clock offset')
    p.add_argument('--events', required=True)
    p.add_argument('--telemetry', required=True)
    p.add_argument('--amplitude', type=float, default=0.1, help='jitter amplitude in mm')
    p.add_argument('--output')
    p.set_defaults(func=cmd_align)

    p = sub.add_parser('results', parents=[common], help='tabulate reports next to reference')
    p.add_argument('directory', help='directory holding <label>.report.csv files')
    p.add_argument('--output')
    p.set_defaults(func=cmd_results)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(levelname)s %(name)s: %(message)s')
    for key, value in sorted(vars(args).items()):
        if key != 'func':
            print('--%s=%s' % (key, value))
    print()

    try:
        doc = load_run_config(args.config)
        return args.func(args, doc)
    except DomainError as exc:
        print('✗ Error: %s' % exc, file=sys.stderr)
        return 2
    except (JitterError, OSError) as exc:
        print('✗ Error: %s' % exc, file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
