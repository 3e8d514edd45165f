#!/usr/bin/env python3
"""
Command-line interface: keygen, encrypt, solve, bench, stats.

Exit status: 0 success, 1 usage error, 2 data error.
"""

import argparse
import json
import logging
import os
import random
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

from .config import Settings, load_settings
from .engine import PegaSession, User, finalize, open_session, run_pega, submit
from .errors import ConfigError, PegaError
from .ga import GaParams, RunStats, Selection, run_ga
from .io_utils import load_bytes, load_sample, run_record, save_bytes, save_to_json, write_series_csv
from .stats import compare
from .thpc import (PartialKey, PublicKey, SecretKey, keygen, partial_key_from_bytes,
                   partial_key_to_bytes, public_key_from_bytes, public_key_to_bytes,
                   secret_key_from_bytes, secret_key_to_bytes)
from .tsp import (EncryptedTsp, TspInstance, build_matrix, encrypt_tsp, format_tsplib, load_city_map,
                  load_instance, pseudonymize, save_city_map)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

KEY_FILES = {
    'public': 'public.key',
    'secret': 'secret.key',
    'share1': 'share1.key',
    'share2': 'share2.key',
}


class UsageError(Exception):
    pass


class PegaArgumentParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; we reserve 2 for data errors"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def setup_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s', force=True)


# Keys

def save_keys(directory: str, pk: PublicKey, sk: SecretKey, share1: PartialKey, share2: PartialKey):
    save_bytes(public_key_to_bytes(pk), os.path.join(directory, KEY_FILES['public']))
    save_bytes(secret_key_to_bytes(sk), os.path.join(directory, KEY_FILES['secret']))
    save_bytes(partial_key_to_bytes(share1), os.path.join(directory, KEY_FILES['share1']))
    save_bytes(partial_key_to_bytes(share2), os.path.join(directory, KEY_FILES['share2']))


def load_user(directory: str) -> User:
    def read(name):
        return load_bytes(os.path.join(directory, KEY_FILES[name]))

    pk = public_key_from_bytes(read('public'))
    sk = secret_key_from_bytes(read('secret'))
    share1, share2 = partial_key_from_bytes(read('share1')), partial_key_from_bytes(read('share2'))
    if not (sk.public_key == share1.public_key == share2.public_key == pk):
        raise PegaError(f"key files in {directory} belong to different keys")
    return User(pk, sk, (share1, share2))


def user_for(settings: Settings) -> User:
    """Keys from --keys when present, else generated from --seed"""
    if os.path.exists(os.path.join(settings.key_dir, KEY_FILES['public'])):
        return load_user(settings.key_dir)
    logger.info(f"No keys in {settings.key_dir}; generating {settings.bits}-bit keys from seed {settings.seed}")
    return User.generate(settings.kappa, settings.seed)


# Commands

def cmd_keygen(settings: Settings, args) -> int:
    out = args.out or settings.key_dir
    pk, sk, share1, share2 = keygen(settings.kappa, random.Random(settings.seed))
    save_keys(out, pk, sk, share1, share2)
    logger.info(f"Wrote keys {pk.fingerprint().hex()} to {out}")
    return EXIT_OK


def _require_tsp(settings: Settings) -> TspInstance:
    if not settings.tsp:
        raise UsageError("--tsp is required")
    return load_instance(settings.tsp)


def cmd_encrypt(settings: Settings, args) -> int:
    instance = _require_tsp(settings)
    if not settings.out:
        raise UsageError("--out is required")
    pk = public_key_from_bytes(load_bytes(os.path.join(settings.key_dir, KEY_FILES['public'])))
    perm_seed = settings.seed if settings.perm_seed is None else settings.perm_seed
    city_map, relabeled = pseudonymize(build_matrix(instance), random.Random(perm_seed))
    enc_tsp = encrypt_tsp(pk, relabeled, settings.scale, settings.enc_seed, progress=not settings.quiet)
    enc_tsp.save(settings.out)
    map_path = settings.city_map or f"{settings.out}.map.json"
    save_city_map(city_map, map_path)
    logger.info(f"Wrote {enc_tsp.payload_size()} bytes to {settings.out}; city map kept in {map_path}")
    return EXIT_OK


def solve(settings: Settings, instance: TspInstance, params: GaParams,
          user: Optional[User] = None) -> Tuple[RunStats, Dict]:
    """One run in the configured mode. Returns (stats over city labels, record extras)."""
    matrix = build_matrix(instance)
    perm_seed = settings.seed if settings.perm_seed is None else settings.perm_seed

    if settings.mode == 'plain':
        extras: Dict = {'transcript': None, 'timings': {}}
        # Same relabeling as the encrypted path so both walk the same search
        city_map, relabeled = pseudonymize(matrix, random.Random(perm_seed))
        started = time.perf_counter()
        stats = run_ga(relabeled, params, progress=not settings.quiet)
        extras['timings']['search'] = time.perf_counter() - started
        stats.best_tour = city_map.restore(stats.best_tour)
        return stats, extras

    user = user or user_for(settings)
    session = submit(user, matrix, params, perm_seed=perm_seed, enc_seed=settings.enc_seed,
                     crypto_seed=settings.crypto_seed, transport=settings.transport,
                     host=settings.host, port=settings.port, sigma=settings.sigma,
                     search=settings.search, progress=not settings.quiet)
    return _run_session(settings, user, session)


def solve_container(settings: Settings, params: GaParams) -> Tuple[RunStats, Dict]:
    """PEGA over a container written by `encrypt`.

    The tour comes back over pseudonyms unless --city-map names the user's map.
    """
    user = load_user(settings.key_dir)
    enc_tsp = EncryptedTsp.load(user.public_key, settings.container)
    if settings.city_map:
        user.city_map = load_city_map(settings.city_map)
        if len(user.city_map.forward) != enc_tsp.m:
            raise PegaError(f"city map covers {len(user.city_map.forward)} cities, container has {enc_tsp.m}")
    if enc_tsp.scale != params.scale:
        logger.info(f"Using the container's scale {enc_tsp.scale}")
        params = replace(params, scale=enc_tsp.scale)
    session = open_session(enc_tsp, user.partial_keys, params, crypto_seed=settings.crypto_seed,
                           transport=settings.transport, host=settings.host, port=settings.port,
                           sigma=settings.sigma, search=settings.search)
    return _run_session(settings, user, session)


def _run_session(settings: Settings, user: User, session: PegaSession) -> Tuple[RunStats, Dict]:
    try:
        result = run_pega(session, progress=not settings.quiet)
    finally:
        session.close()
    stats = finalize(user, result)
    stats.seeds = session.params.seeds
    extras = {
        'transcript': session.endpoint.transcript.summary(),
        'timings': dict(session.timings),
        'comparisons': session.s1.comparisons,
        'params': session.params,
    }
    return stats, extras


def algorithm_tag(mode: str, selection: Selection) -> str:
    prefix = 'GA' if mode == 'plain' else 'PEGA'
    return f"{prefix}{1 if selection == Selection.FPS else 2}"


def cmd_solve(settings: Settings, args) -> int:
    if settings.container:
        if settings.mode != 'pega':
            raise UsageError("--container needs --mode pega")
        name = Path(settings.container).name.split('.')[0]
        params = settings.ga_params(name)
        stats, extras = solve_container(settings, params)
    else:
        instance = _require_tsp(settings)
        name = instance.name
        params = settings.ga_params(name)
        stats, extras = solve(settings, instance, params)
    if settings.csv:
        write_series_csv(stats, settings.csv)
    params = extras.get('params', params)
    if args.record:
        record = run_record(algorithm_tag(settings.mode, params.selection), name, settings.seed,
                            params.as_dict(), stats, extras['transcript'], extras['timings'])
        save_to_json(record, args.record, backup=False)
    print(f"final cost {stats.best_cost}: {'-'.join(map(str, stats.best_tour))}")
    return EXIT_OK


def _bench_users(settings: Settings, sweep: Optional[List[int]]) -> List[User]:
    if not sweep:
        return [user_for(settings)]
    users = []
    for bits in sweep:
        if bits < 16 or bits % 2:
            raise UsageError(f"modulus size must be an even number of bits >= 16, got {bits}")
        logger.info(f"Generating {bits}-bit keys for the sweep")
        users.append(User.generate(bits // 2, settings.seed))
    return users


def cmd_bench(settings: Settings, args) -> int:
    """Payload sizes and per-generation protocol traffic for each instance and modulus size"""
    rows: List[Dict] = []
    users = _bench_users(settings, args.sweep_bits)
    for path in args.instances:
        instance = load_instance(path)
        plain_bytes = len(format_tsplib(instance).encode('utf-8'))
        matrix = build_matrix(instance)
        for user in users:
            bits = user.public_key.n.bit_length()
            for selection in (Selection.FPS, Selection.TOURNAMENT):
                for r in range(settings.repeat):
                    run_settings = Settings(**{**vars(settings), 'mode': 'pega', 'selection': selection.value,
                                               'seed': settings.seed + r})
                    params = run_settings.ga_params(instance.name)
                    session = submit(user, matrix, params, perm_seed=run_settings.seed,
                                     enc_seed=settings.enc_seed, crypto_seed=settings.crypto_seed,
                                     transport=settings.transport, sigma=settings.sigma, search=settings.search)
                    try:
                        run_pega(session)
                    finally:
                        session.close()
                    summary = session.endpoint.transcript.summary()
                    rows.append({
                        'instance': instance.name,
                        'm': instance.dimension,
                        'bits': bits,
                        'selection': selection.value,
                        'repeat': r,
                        'plain_bytes': plain_bytes,
                        'encrypted_bytes': session.enc_tsp.payload_size(),
                        'transcript_bytes': summary['total_bytes'],
                        'bytes_per_generation': summary['total_bytes'] / max(params.generations + 1, 1),
                        'rounds': summary['rounds'],
                        'comparisons': session.s1.comparisons,
                        'encrypt_seconds': round(session.timings['encrypt'], 4),
                        'search_seconds': round(session.timings['search'], 4),
                    })
    table = pd.DataFrame(rows)
    print(table.to_string(index=False))
    if settings.csv:
        table.to_csv(settings.csv, index=False, lineterminator='\n')
        logger.info(f"Wrote bench table to {settings.csv}")
    return EXIT_OK


def cmd_stats(settings: Settings, args) -> int:
    sample_a = [v for path in args.csv_a for v in load_sample(path, settings.column)]
    sample_b = [v for path in args.csv_b for v in load_sample(path, settings.column)]
    print(json.dumps(compare(sample_a, sample_b).as_dict(), indent=2))
    return EXIT_OK


COMMANDS = {
    'keygen': cmd_keygen,
    'encrypt': cmd_encrypt,
    'solve': cmd_solve,
    'bench': cmd_bench,
    'stats': cmd_stats,
}


def _common(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='key=value configuration file')
    parser.add_argument('--profile', help='named key/scale profile (test32 ... hardened)')
    parser.add_argument('--bits', type=int, help='modulus size in bits')
    parser.add_argument('--scale', type=int, help='fixed-point scale (bits)')
    parser.add_argument('--seed', type=int, help='root seed')
    parser.add_argument('--keys', dest='key_dir', help='key directory')
    parser.add_argument('--verbose', action='store_true', default=None)
    parser.add_argument('--quiet', action='store_true', default=None)


def _run_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--mode', choices=['plain', 'pega'])
    parser.add_argument('--selection', choices=['fps', 'tournament'])
    parser.add_argument('--k', type=int, help='tournament size')
    parser.add_argument('--pop', type=int, help='population size')
    parser.add_argument('--gens', type=int, help='generation budget')
    parser.add_argument('--crossover-rate', type=float)
    parser.add_argument('--mutation-rate', type=float)
    parser.add_argument('--elitism', type=int)
    for stream in ('population', 'selection', 'crossover', 'mutation'):
        parser.add_argument(f'--seed-{stream}', type=int)
    parser.add_argument('--perm-seed', type=int)
    parser.add_argument('--enc-seed', type=int)
    parser.add_argument('--crypto-seed', type=int)
    parser.add_argument('--transport', choices=['inproc', 'tcp'])
    parser.add_argument('--host')
    parser.add_argument('--port', type=int)
    parser.add_argument('--sigma', type=int)
    parser.add_argument('--search', choices=['bisect', 'recursive'])
    parser.add_argument('--csv', help='output CSV')


def build_parser() -> argparse.ArgumentParser:
    parser = PegaArgumentParser(prog='pega', description='Privacy-preserving GA for encrypted TSPs')
    sub = parser.add_subparsers(dest='command', parser_class=PegaArgumentParser)
    sub.required = True

    p = sub.add_parser('keygen', help='generate a threshold Paillier key')
    _common(p)
    p.add_argument('--out', help='key directory (defaults to --keys)')

    p = sub.add_parser('encrypt', help='pseudonymize and encrypt a TSPLIB instance')
    _common(p)
    p.add_argument('--tsp', required=True)
    p.add_argument('--perm-seed', type=int)
    p.add_argument('--enc-seed', type=int)
    p.add_argument('--out', required=True, help='encrypted container')
    p.add_argument('--city-map', help='where the user keeps the city map')

    p = sub.add_parser('solve', help='run the plaintext GA or PEGA')
    _common(p)
    _run_flags(p)
    source = p.add_mutually_exclusive_group()
    source.add_argument('--tsp', help='TSPLIB instance (encrypted on the fly in pega mode)')
    source.add_argument('--container', help='container written by `encrypt` (pega mode)')
    p.add_argument('--city-map', help='user city map; restores city labels in the final tour')
    p.add_argument('--record', help='write a JSON run record')

    p = sub.add_parser('bench', help='payload and transcript sizes')
    _common(p)
    _run_flags(p)
    p.add_argument('--instances', nargs='+', required=True, metavar='TSP')
    p.add_argument('--repeat', type=int)
    p.add_argument('--sweep-bits', nargs='+', type=int, metavar='BITS',
                   help='one freshly generated key per modulus size')

    p = sub.add_parser('stats', help='mean, std and Wilcoxon rank-sum p-value')
    _common(p)
    p.add_argument('--csv-a', nargs='+', required=True)
    p.add_argument('--csv-b', nargs='+', required=True)
    p.add_argument('--column', help='run-table column holding final costs')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(vars(args), args.config)
    except ConfigError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_USAGE
    setup_logging(settings.verbose, settings.quiet)

    try:
        return COMMANDS[args.command](settings, args)
    except (UsageError, ConfigError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PegaError, OSError, OverflowError, ZeroDivisionError, ValueError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=True)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())
