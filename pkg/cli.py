#!/usr/bin/env python3
"""
Optimistic MBRL Toolkit - Command Line Interface
Runs single experiments, strategy x rho x seed matrices, the bandit demo,
oracle estimates and summary reports
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed

import pandas as pd

from agent import oracle_return, run
from analytics import (
    RunAnalyzer,
    find_manifests,
    load_manifest,
    summarize_manifests,
    write_curve_csv,
    write_hashed_csv,
    write_summary,
)
from config import (
    Config,
    ConfigError,
    ExperimentMatrix,
    HucrlError,
    RunAborted,
    RunConfig,
    StrategyTag,
    config_hash,
    dump_config,
    load_config,
    payload_hash,
    save_config,
)
from env import BanditProblem, bandit_kernel, run_gp_ucb
from monitoring import configure_logging, health_check

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
DEFAULT_RHOS = (0.0, 0.1, 0.2)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
ORACLE_HELP = 'Oracle return for regret curves: a number or the path of an oracle.json'


def build_parser():
    parser = argparse.ArgumentParser(prog='hucrl', description='Optimistic model-based RL experiments')
    parser.add_argument('--log-level', default=None, help='Logging level (default from HUCRL_LOG_LEVEL)')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    run_p = sub.add_parser('run', help='Run one strategy on the pendulum')
    _add_run_args(run_p)
    run_p.add_argument('--oracle', default=None, help=ORACLE_HELP)

    matrix_p = sub.add_parser('matrix', help='Run a strategy x rho x seed matrix')
    matrix_p.add_argument('--config', help='Matrix or run config (JSON)')
    matrix_p.add_argument('--out', default=None, help='Output directory')
    matrix_p.add_argument('--workers', type=int, default=Config.WORKERS, help='Parallel worker processes')
    matrix_p.add_argument('--episodes', type=int, default=None)
    matrix_p.add_argument('--oracle', default=None, help=ORACLE_HELP)

    bandit_p = sub.add_parser('bandit', help='GP-UCB on the two-bump bandit')
    bandit_p.add_argument('--beta', type=float, action='append', help='Confidence scale (repeatable)')
    bandit_p.add_argument('--rounds', type=int, default=Config.BANDIT['rounds'])
    bandit_p.add_argument('--seed', type=int, default=0)
    bandit_p.add_argument('--out', default=None, help='Directory for bandit trace CSVs')

    oracle_p = sub.add_parser('oracle', help='Estimate the oracle return on the true dynamics')
    _add_run_args(oracle_p)
    oracle_p.add_argument('--seeds', type=int, default=Config.ORACLE_SEEDS)

    report_p = sub.add_parser('report', help='Summarize manifests under a directory')
    report_p.add_argument('--out', default=Config.OUTPUT_DIR, help='Directory holding run outputs')
    report_p.add_argument('--oracle', default=None, help=ORACLE_HELP)

    sub.add_parser('check', help='Environment health check')

    dump_p = sub.add_parser('dump-config', help='Write a fully materialized config')
    dump_p.add_argument('--config', help='Config to materialize (default: built-in defaults)')
    dump_p.add_argument('--out', default=None, help='Output path (default: stdout)')
    dump_p.add_argument('--episodes', type=int, default=20)
    return parser


def _add_run_args(parser):
    parser.add_argument('--config', help='Run config (JSON)')
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--out', default=None, help='Output directory')
    parser.add_argument('--strategy', choices=Config.STRATEGIES, default=None)
    parser.add_argument('--rho', type=float, default=None)
    parser.add_argument('--episodes', type=int, default=None)
    parser.add_argument('--beta', type=float, default=None, help='Fixed confidence scale override')


def _load_run_config(args):
    cfg = load_config(args.config) if args.config else RunConfig(episodes=args.episodes or 20)
    if isinstance(cfg, ExperimentMatrix):
        raise ConfigError(f'{args.config}: expected a run config, got an experiment matrix')
    overrides = {}
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.rho is not None:
        overrides['rho'] = args.rho
    if args.episodes is not None:
        overrides['episodes'] = args.episodes
    if args.strategy is not None or args.beta is not None:
        overrides['strategy'] = dataclasses.replace(
            cfg.strategy,
            name=args.strategy or cfg.strategy.name,
            beta=args.beta if args.beta is not None else cfg.strategy.beta,
        )
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cell_dir(root, strategy, rho, seed):
    return os.path.join(root, strategy, f'rho_{rho:g}', f'seed_{seed}')


def resolve_oracle(value):
    """Oracle return from a number or an oracle.json written by the oracle command"""
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        pass
    if not os.path.isfile(value):
        raise ConfigError(f"--oracle must be a number or an oracle.json path, got {value!r}")
    try:
        with open(value, 'r', encoding='utf-8') as f:
            return float(json.load(f)['oracle_return'])
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"{value}: no usable oracle_return ({e})") from e


def cmd_run(args):
    cfg = _load_run_config(args)
    out = args.out or cell_dir(Config.OUTPUT_DIR, cfg.strategy.name, cfg.rho, cfg.seed)
    manifest = run(cfg, out, oracle=resolve_oracle(args.oracle))
    print(f"✅ {cfg.strategy.name} rho={cfg.rho} seed={cfg.seed}: final return "
          f"{manifest.returns[-1]:.3f}, outputs in {out}")
    return EXIT_OK


def _run_cell(cfg, out, oracle=None):
    configure_logging()
    try:
        run(cfg, out, oracle=oracle)
        return out, None
    except HucrlError as e:
        return out, f'{type(e).__name__}: {e}'


def _load_matrix(args):
    cfg = load_config(args.config) if args.config else RunConfig(episodes=20)
    if isinstance(cfg, RunConfig):
        cfg = ExperimentMatrix(
            strategies=tuple(StrategyTag(name) for name in Config.STRATEGIES),
            rhos=DEFAULT_RHOS,
            seeds=DEFAULT_SEEDS,
            base=cfg,
            output_dir=Config.OUTPUT_DIR,
        )
    if args.episodes is not None:
        cfg = dataclasses.replace(cfg, base=dataclasses.replace(cfg.base, episodes=args.episodes))
    return cfg


def cmd_matrix(args):
    matrix = _load_matrix(args)
    oracle = resolve_oracle(args.oracle)
    root = args.out or matrix.output_dir
    cells = [(cfg, cell_dir(root, strategy.name, rho, seed)) for strategy, rho, seed, cfg in matrix.cells()]
    logger.info(f"🚀 Running {len(cells)} cells with {args.workers} workers into {root}")

    failures = []
    if args.workers <= 1:
        results = [_run_cell(cfg, out, oracle) for cfg, out in cells]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_run_cell, cfg, out, oracle) for cfg, out in cells]
            results = [future.result() for future in as_completed(futures)]
    for out, error in results:
        if error:
            failures.append(out)
            logger.error(f"❌ Cell {out} failed: {error}")

    summary_path = os.path.join(root, 'summary.csv')
    write_summary(summarize_manifests(find_manifests(root)), summary_path)
    print(f"{'✅' if not failures else '⚠️'} {len(cells) - len(failures)}/{len(cells)} cells complete, "
          f"summary in {summary_path}")
    return EXIT_OK if not failures else EXIT_FAILED


def bandit_hash(problem, beta_value, rounds, seed):
    return payload_hash({
        'problem': dump_config(problem),
        'kernel': dump_config(bandit_kernel()),
        'beta': beta_value,
        'rounds': rounds,
        'seed': seed,
    })


def cmd_bandit(args):
    problem = BanditProblem()
    betas = args.beta or [0.0, 2.0]
    out = args.out
    if out:
        os.makedirs(out, exist_ok=True)
    for beta_value in betas:
        trace = run_gp_ucb(problem, beta_value, rounds=args.rounds, seed=args.seed)
        final = trace.indices[-1] if trace.indices else None
        gap = abs(final - problem.global_index) if final is not None else None
        print(f"beta={beta_value:g}: final grid index {final} (global optimum {problem.global_index}, "
              f"distance {gap} cells)")
        if out:
            frame = pd.DataFrame({
                'round': range(1, len(trace.xs) + 1),
                'x': trace.xs,
                'index': trace.indices,
                'value': trace.values,
            })
            write_hashed_csv(frame, os.path.join(out, f'bandit_beta_{beta_value:g}.csv'),
                             bandit_hash(problem, beta_value, args.rounds, args.seed))
    return EXIT_OK


def cmd_oracle(args):
    cfg = _load_run_config(args)
    value = oracle_return(cfg, seeds=range(args.seeds))
    payload = {
        'oracle_return': value,
        'oracle_tag': Config.ORACLE_TAG,
        'config_hash': config_hash(cfg),
        'seeds': args.seeds,
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, 'oracle.json'), 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_report(args):
    paths = find_manifests(args.out)
    if not paths:
        print(f"❌ No manifests found under {args.out}")
        return EXIT_FAILED
    oracle = resolve_oracle(args.oracle)
    for path in paths:
        data = load_manifest(path)
        run_dir = os.path.dirname(path)
        if oracle is not None:
            write_curve_csv(data, os.path.join(run_dir, 'curve.csv'), oracle)
        RunAnalyzer(data, oracle).export_to_json(os.path.join(run_dir, 'report.json'))
    summary = summarize_manifests(paths)
    write_summary(summary, os.path.join(args.out, 'summary.csv'))
    print(summary.to_string(index=False))
    return EXIT_OK


def cmd_check(args):
    health = health_check()
    print(json.dumps(health, indent=2))
    return EXIT_OK if health['status'] == 'healthy' else EXIT_FAILED


def cmd_dump_config(args):
    cfg = load_config(args.config) if args.config else RunConfig(episodes=args.episodes)
    if args.out:
        save_config(cfg, args.out)
        print(f"✅ Config written to {args.out}")
    else:
        print(json.dumps(dump_config(cfg), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'matrix': cmd_matrix,
    'bandit': cmd_bandit,
    'oracle': cmd_oracle,
    'report': cmd_report,
    'check': cmd_check,
    'dump-config': cmd_dump_config,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"❌ Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as e:
        print(f"❌ Run aborted: {e} (partial manifest: {e.manifest_path})", file=sys.stderr)
        return EXIT_FAILED
    except HucrlError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())
