"""
OOB-aided mmWave beam-selection simulator
Command-line entry point: run configs, sweep experiment families, validate, inspect
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from exceptions import ConfigurationError
from experiment_config import ExperimentConfig, PRESETS, env_n_jobs, preset
from harness import ExperimentHarness
from invariant_suite import InvariantSuite
from mmwave_frontend import dbm_to_watts
from multiband_channel import MultiBandChannel, spawn_rng
from oob_extraction import OOBExtraction
from results_database import ResultsDatabase

logger = logging.getLogger(__name__)

# (method that degrades, reference) per sweep family
CROSSOVER_PAIRS = {
    'aoa_mismatch': ('structured_lw_omp', 'omp'),
    'as_mismatch': ('structured_lw_omp', 'omp'),
}


def parse_grid(text: str):
    """'8x16' -> (8, 16) as (N_RX, N_TX)"""
    try:
        n_rx, n_tx = (int(part) for part in text.lower().split('x'))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 8x8, got '{text}'")
    return n_rx, n_tx


def build_parser():
    parser = argparse.ArgumentParser(
        description="OOB-aided compressed beam selection for mmWave links"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--db", help="Run ledger path (default: $BEAMSEL_RESULTS_DB or beamsel_runs.db)")

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # ========================================
    # Run command
    # ========================================
    run_parser = subparsers.add_parser("run", help="Run an experiment from a JSON config")
    run_parser.add_argument("config", help="Path to the experiment config (JSON)")
    run_parser.add_argument("--output-dir", help="Override the config's output directory")
    run_parser.add_argument("--n-jobs", type=int, help="Parallel trials (default: $BEAMSEL_N_JOBS)")
    run_parser.add_argument("--no-ledger", action="store_true", help="Do not record the run")

    # ========================================
    # Sweep command
    # ========================================
    sweep_parser = subparsers.add_parser("sweep", help="Run a named experiment family")
    sweep_parser.add_argument("--family", required=True, choices=sorted(PRESETS), help="Experiment family")
    sweep_parser.add_argument("--grid", nargs="+", type=parse_grid, help="Training sizes, e.g. 4x8 8x8")
    sweep_parser.add_argument("--coherence", nargs="+", type=float, help="Coherence times in blocks (inf ok)")
    sweep_parser.add_argument("--trials", type=int, help="Number of trials E")
    sweep_parser.add_argument("--seed", type=int, help="Master seed")
    sweep_parser.add_argument("--output-dir", help="Output directory")
    sweep_parser.add_argument("--n-jobs", type=int, help="Parallel trials (default: $BEAMSEL_N_JOBS)")
    sweep_parser.add_argument("--no-ledger", action="store_true", help="Do not record the run")

    # ========================================
    # Validate command
    # ========================================
    validate_parser = subparsers.add_parser("validate", help="Run the invariant checks")
    validate_parser.add_argument("--quick", action="store_true", help="Smaller Monte-Carlo sizes")
    validate_parser.add_argument("--seed", type=int, default=0, help="Seed of the checks")

    # ========================================
    # Dump-channel command
    # ========================================
    dump_parser = subparsers.add_parser("dump-channel", help="Export one multi-band realization as JSON")
    dump_parser.add_argument("--family", choices=sorted(PRESETS), default="rate_vs_measurements",
                             help="Family whose band specs and distance are used")
    dump_parser.add_argument("--seed", type=int, default=0, help="Master seed")
    dump_parser.add_argument("--trial", type=int, default=0, help="Trial index")
    dump_parser.add_argument("-o", "--output", help="Output file (default: stdout)")
    dump_parser.add_argument("--spectrum-dir",
                             help="Also write the sub-6 GHz spatial spectrum and its scaled copy as CSV")

    # ========================================
    # History command
    # ========================================
    history_parser = subparsers.add_parser("history", help="List recorded runs")
    history_parser.add_argument("--limit", type=int, default=20, help="Number of runs to show")

    return parser


def _run_and_emit(config: ExperimentConfig, args):
    n_jobs = args.n_jobs if args.n_jobs is not None else env_n_jobs(config.n_jobs)
    table, records = ExperimentHarness.run_experiment(config, n_jobs=n_jobs, return_records=True)
    ledger = None if args.no_ledger else ResultsDatabase(args.db)
    paths = ExperimentHarness.emit_results(table, config, output_dir=args.output_dir,
                                           records=records, ledger=ledger)
    print(table.frame.to_string(index=False))

    pair = CROSSOVER_PAIRS.get(config.name)
    if pair and table.has_sweep:
        crossover = ExperimentHarness.locate_crossover(table, *pair)
        if crossover is None:
            print(f"\n{pair[0]} stays at or above {pair[1]} over the sweep")
        else:
            print(f"\n{pair[0]} falls below {pair[1]} at sweep value {crossover:.4f}")
    print(f"\nResults: {paths['csv']}, {paths['json']}")
    return 0


def cmd_run(args):
    config = ExperimentConfig.load(args.config)
    return _run_and_emit(config, args)


def cmd_sweep(args):
    overrides = {
        'beam_grid': tuple(args.grid) if args.grid else None,
        'coherence': tuple(args.coherence) if args.coherence else None,
        'trials': args.trials,
        'seed': args.seed,
    }
    config = preset(args.family, **overrides)
    return _run_and_emit(config, args)


def cmd_validate(args):
    results = InvariantSuite.run_all(seed=args.seed, quick=args.quick)
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'}  {result.name:<22} {result.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error("invariant checks failed: %s", ", ".join(failed))
        return 2
    return 0


def cmd_dump_channel(args):
    config = preset(args.family, seed=args.seed)
    realization = MultiBandChannel.generate_realization(
        config.sub6, config.mmwave, config.distance, args.seed, args.trial,
        sub6_angles=config.sub6_angles, mmwave_angles=config.mmwave_angles)
    payload = {'seed': args.seed, 'trial': args.trial, 'distance': config.distance,
               **realization.to_dict()}
    text = json.dumps(payload, indent=2)
    if args.output:
        with open(args.output, 'w') as f:
            f.write(text)
        logger.info("wrote realization to %s", args.output)
    else:
        print(text)
    if args.spectrum_dir:
        for path in export_spectra(config, realization, args.seed, args.trial, args.spectrum_dir):
            logger.info("wrote %s", path)
    return 0


def export_spectra(config: ExperimentConfig, realization, seed: int, trial: int, out_dir):
    """Sub-6 GHz spatial spectrum and its mmWave-scaled copy, as the trial pipeline computes them"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, sigma2_sub6 = ExperimentHarness.noise_models(config)
    mm = config.mmwave
    oob = OOBExtraction.extract(
        MultiBandChannel.render_narrowband_sub6(realization.sub6), (mm.m_rx, mm.m_tx),
        sigma2_sub6, dbm_to_watts(config.p_t_dbm), config.j_p,
        rng=spawn_rng(seed, trial, 'sub6_noise'), d=config.sub6.d)
    return [oob.spectrum.to_csv(out_dir / 'sub6_spectrum.csv'),
            oob.scaled.to_csv(out_dir / 'scaled_spectrum.csv')]


def cmd_history(args):
    db = ResultsDatabase(args.db)
    runs = db.list_runs(args.limit)
    if not runs:
        print("No runs recorded")
        return 0
    for run in runs:
        print(f"{run['id']:>5}  {run['timestamp']}  {run['name']:<22} seed={run['seed']:<6} "
              f"E={run['trials']:<6} {run['config_hash'][:12]}  {run['csv_path'] or ''}")
    stats = db.get_statistics()
    print(f"\n{stats['total_runs']} runs, {stats['distinct_configs']} distinct configs")
    return 0


COMMANDS = {
    'run': cmd_run,
    'sweep': cmd_sweep,
    'validate': cmd_validate,
    'dump-channel': cmd_dump_channel,
    'history': cmd_history,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s [%(levelname)s] %(name)s: %(message)s'
    )

    if args.command is None:
        parser.print_help()
        return 1

    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logger.error("configuration error: %s", e)
        return 1
    except Exception as e:
        logger.exception("run failed: %s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
