#!/usr/bin/env python3
"""
Main orchestrator script to run GA1, GA2, PEGA1 and PEGA2 over a set of
TSPLIB instances and seeds. Writes one run record per (algorithm, instance,
seed) to output/runs.json and a flat table to output/runs.csv.

By default PEGA and GA runs share only the initial population seed, so the
comparison measures two independent searches from the same start. Pass
--mirror to share all four seeds instead (the runs then coincide exactly).
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List

import pandas as pd

from pega.cli import algorithm_tag, solve
from pega.config import load_settings
from pega.engine import User
from pega.ga import Seeds, Selection
from pega.io_utils import run_record, save_to_json, validate_records
from pega.tsp import load_instance

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

ALGORITHMS = {
    'GA1': ('plain', Selection.FPS),
    'GA2': ('plain', Selection.TOURNAMENT),
    'PEGA1': ('pega', Selection.FPS),
    'PEGA2': ('pega', Selection.TOURNAMENT),
}

# Offset for the independent selection/crossover/mutation seeds of PEGA runs
INDEPENDENT_OFFSET = 1_000_003


def seeds_for(run: int, mode: str, mirror: bool) -> Seeds:
    base = Seeds.derive(run)
    if mirror or mode == 'plain':
        return base
    other = Seeds.derive(run + INDEPENDENT_OFFSET)
    return Seeds(base.population, other.selection, other.crossover, other.mutation)


def parse_args(argv: List[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument('--instances', nargs='+', help='TSPLIB files (default: every data/*.tsp)')
    parser.add_argument('--algorithms', nargs='+', choices=list(ALGORITHMS), default=list(ALGORITHMS))
    parser.add_argument('--runs', type=int, default=30)
    parser.add_argument('--pop', type=int, default=300)
    parser.add_argument('--gens', type=int, default=10000)
    parser.add_argument('--profile', default='experiment')
    parser.add_argument('--mirror', action='store_true')
    parser.add_argument('--output', default='output')
    return parser.parse_args(argv)


def main(argv: List[str] = None) -> bool:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    base_dir = Path(__file__).parent
    output_dir = base_dir / args.output
    output_dir.mkdir(exist_ok=True)
    instances = args.instances or sorted(str(p) for p in (base_dir / 'data').glob('*.tsp'))
    if not instances:
        logger.error("No instances given and data/ is empty; run fetch_tsplib.py first")
        return False

    logger.info("=" * 60)
    logger.info(f"Running {', '.join(args.algorithms)} on {len(instances)} instances x {args.runs} runs")
    logger.info("=" * 60)

    base_settings = load_settings({'profile': args.profile, 'pop': args.pop, 'gens': args.gens, 'quiet': True})
    user = None
    if any(ALGORITHMS[a][0] == 'pega' for a in args.algorithms):
        user = User.generate(base_settings.kappa, base_settings.seed)

    records: List[Dict] = []
    results: Dict[str, Dict] = {}
    for path in instances:
        try:
            instance = load_instance(path)
        except Exception as e:
            logger.error(f"✗ Cannot load {path}: {e}")
            results[path] = {'runs': 0, 'error': str(e)}
            continue

        logger.info("\n" + "=" * 60)
        logger.info(f"Instance {instance.name} (m={instance.dimension})")
        logger.info("=" * 60)
        for algorithm in args.algorithms:
            mode, selection = ALGORITHMS[algorithm]
            key = f"{instance.name}/{algorithm}"
            finals = []
            try:
                for run in range(args.runs):
                    seeds = seeds_for(run, mode, args.mirror)
                    settings = load_settings({
                        'profile': args.profile, 'pop': args.pop, 'gens': args.gens, 'quiet': True,
                        'mode': mode, 'selection': selection.value, 'seed': run, 'perm_seed': run,
                        'seed_population': seeds.population, 'seed_selection': seeds.selection,
                        'seed_crossover': seeds.crossover, 'seed_mutation': seeds.mutation,
                    })
                    params = settings.ga_params(instance.name)
                    stats, extras = solve(settings, instance, params, user)
                    records.append(run_record(algorithm_tag(mode, selection), instance.name, run,
                                              params.as_dict(), stats, extras['transcript'], extras['timings']))
                    finals.append(stats.best_cost)
                    logger.info(f"{key} run {run}: final cost {stats.best_cost}")
                results[key] = {'runs': len(finals), 'best': min(finals), 'mean': sum(finals) / len(finals)}
            except Exception as e:
                logger.error(f"✗ Error running {key}: {e}", exc_info=True)
                results[key] = {'runs': len(finals), 'error': str(e)}

    records = validate_records(records)
    save_to_json(records, str(output_dir / 'runs.json'))
    if records:
        table = pd.DataFrame([{k: r[k] for k in ('algorithm', 'instance', 'seed', 'final_cost')} for r in records])
        table.to_csv(output_dir / 'runs.csv', index=False, lineterminator='\n')

    logger.info("\n" + "=" * 60)
    logger.info("EXPERIMENTS COMPLETE")
    logger.info("=" * 60)
    for key, summary in results.items():
        if 'error' in summary:
            logger.error(f"  {key}: ERROR - {summary['error']}")
        else:
            logger.info(f"  {key}: {summary}")
    logger.info(f"Run records saved in: {output_dir}")
    return len(records) > 0


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
