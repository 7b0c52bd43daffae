#!/usr/bin/env python3
import argparse
import logging
import os
import sys
import time

from catalogue import synth_heteroscedastic, NoiseLaw, write_csv, write_schema, dataset_schema
from pipeline import run_pipeline, build_report, SUMMARY_TXT
from run_config import load_run_config
from util.constants import VERSION
from util.errors import PipelineError


def cmd_synth(args):
    d = synth_heteroscedastic(args.n, seed=args.seed, noise_law=args.law, scale=args.scale,
                              n_features=args.features)
    out_dir = os.path.abspath(os.path.expanduser(args.out))
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f'{args.name}.csv')
    schema_path = os.path.join(out_dir, f'{args.name}.schema')
    write_csv(csv_path, d)
    write_schema(schema_path, dataset_schema(d))
    print(f'wrote {d.n_samples} rows ({args.law} noise, seed {args.seed}) to {csv_path}')
    print(f'wrote schema to {schema_path}')


def cmd_run(args):
    cfg = load_run_config(os.path.expanduser(args.config), seed=args.seed, output_dir=args.out)
    print(f'running {args.config} into {cfg.output_dir}')
    time_start = time.time()
    manifest = run_pipeline(cfg, config_path=os.path.expanduser(args.config), progress=print)
    print(f'{len(manifest["outputs"])} files written in {time.time() - time_start:.2f} seconds')


def cmd_report(args):
    run_dir = os.path.abspath(os.path.expanduser(args.run_dir))
    rows = build_report(run_dir)
    print(f'{len(rows)} rows merged into {os.path.join(run_dir, "summary.csv")}')
    if args.print:
        with open(os.path.join(run_dir, SUMMARY_TXT), encoding='utf8') as f:
            sys.stdout.write(f.read())


def parse_args(argv):
    ap = argparse.ArgumentParser(description='conformal prediction intervals for boosted-tree regressors')
    ap.add_argument('--verbose', '-v', action='count', default=0, help='-v for progress logs, -vv for debug')
    ap.add_argument('--version', action='version', version=VERSION)
    sub = ap.add_subparsers(dest='command')

    synth = sub.add_parser('synth', help='Write a synthetic heteroscedastic dataset and its schema')
    synth.add_argument('--law', choices=[law.value for law in NoiseLaw], default=NoiseLaw.LINEAR.value,
                       help='How the noise scale depends on x')
    synth.add_argument('--n', type=int, default=1000, help='Number of rows')
    synth.add_argument('--seed', type=int, default=0)
    synth.add_argument('--scale', type=float, default=1.0, help='Noise scale multiplier')
    synth.add_argument('--features', type=int, default=1, help='Feature columns, x plus uniform nuisance columns')
    synth.add_argument('--out', default='.', help='Output directory')
    synth.add_argument('--name', default='synth', help='Base name of the written .csv and .schema files')
    synth.set_defaults(fun=cmd_synth)

    run = sub.add_parser('run', help='Run the pipeline described by a JSON config')
    run.add_argument('config', help='Run config file')
    run.add_argument('--seed', type=int, default=None, help='Override the run seed')
    run.add_argument('--out', default=None, help='Override the output directory')
    run.set_defaults(fun=cmd_run)

    report = sub.add_parser('report', help='Merge the evaluation tables of a finished run')
    report.add_argument('run_dir', help='Output directory of a completed run')
    report.add_argument('--print', action='store_true', help=f'Also print {SUMMARY_TXT}')
    report.set_defaults(fun=cmd_report)

    if argv:
        args = ap.parse_args(argv)
        if args.command:
            return args
    ap.print_help()
    return None


def main(argv=None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    if not args:
        return 2
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        args.fun(args)
    except PipelineError as e:
        where = f'{e.stage}: ' if e.stage else ''
        print(f'{where}{e}', file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
