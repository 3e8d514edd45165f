#!/usr/bin/env python3
"""
File helpers shared by the CLI and the experiment scripts.
"""

import json
import logging
import os
import shutil
from datetime import datetime
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .ga import RunStats

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ['generation', 'best_cost', 'mean_cost']
RECORD_FIELDS = ['algorithm', 'instance', 'seed', 'final_cost', 'best_costs']


def backup_file_if_exists(filepath: str) -> None:
    """Copy an existing non-empty file to <parent>/backup/<name>_<timestamp><ext>"""
    if not os.path.exists(filepath) or os.path.getsize(filepath) == 0:
        return
    file_dir = os.path.dirname(os.path.abspath(filepath))
    base_name, ext = os.path.splitext(os.path.basename(filepath))
    backup_dir = os.path.join(os.path.dirname(file_dir), 'backup')
    os.makedirs(backup_dir, exist_ok=True)
    timestamp = datetime.now().strftime('%Y%m%d%H%M%S')
    backup_path = os.path.join(backup_dir, f"{base_name}_{timestamp}{ext}")
    try:
        shutil.copy2(filepath, backup_path)
        logger.info(f"Backed up existing file: {backup_path}")
    except OSError as e:
        logger.error(f"Failed to backup file {filepath}: {e}")


def _ensure_parent(filepath: str):
    parent = os.path.dirname(filepath)
    if parent:
        os.makedirs(parent, exist_ok=True)


def save_to_json(data, filepath: str, backup: bool = True) -> bool:
    """Save records or a report to JSON with optional backup"""
    try:
        if backup:
            backup_file_if_exists(filepath)
        _ensure_parent(filepath)
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
        size = len(data) if isinstance(data, list) else 1
        logger.info(f"Saved {size} entries to {filepath}")
        return True
    except (OSError, TypeError) as e:
        logger.error(f"Failed to save data to {filepath}: {e}")
        return False


def save_bytes(data: bytes, filepath: str):
    _ensure_parent(filepath)
    with open(filepath, 'wb') as f:
        f.write(data)


def load_bytes(filepath: str) -> bytes:
    with open(filepath, 'rb') as f:
        return f.read()


def format_mean(value: Fraction) -> str:
    """Exact mean rendered with four decimals, identically for every mode"""
    return f"{float(value):.4f}"


def format_tour(tour: Sequence[int]) -> str:
    return '-'.join(str(c) for c in tour)


def series_frame(stats: RunStats) -> pd.DataFrame:
    frame = stats.to_frame()
    frame['mean_cost'] = [format_mean(v) for v in stats.mean_costs]
    return frame[SERIES_COLUMNS]


def write_series_csv(stats: RunStats, filepath: str):
    """generation,best_cost,mean_cost rows, then final,<cost>,<tour>"""
    _ensure_parent(filepath)
    text = series_frame(stats).to_csv(index=False, lineterminator='\n')
    text += f"final,{stats.best_cost},{format_tour(stats.best_tour)}\n"
    with open(filepath, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    logger.info(f"Wrote {len(stats.best_costs)} generations to {filepath}")


def read_series_csv(filepath: str) -> Tuple[pd.DataFrame, int, List[int]]:
    """Inverse of write_series_csv: (series, final cost, final tour)"""
    frame = pd.read_csv(filepath, dtype=str)
    final = frame[frame['generation'] == 'final']
    if len(final) != 1:
        raise ValueError(f"{filepath} has no final line")
    series = frame[frame['generation'] != 'final'].copy()
    series['generation'] = series['generation'].astype(int)
    series['best_cost'] = series['best_cost'].astype(int)
    row = final.iloc[0]
    return series, int(row['best_cost']), [int(c) for c in row['mean_cost'].split('-')]


def load_sample(filepath: str, column: str = 'final_cost') -> List[float]:
    """Final costs from a run table, or the single final cost of a series CSV"""
    with open(filepath, 'r', encoding='utf-8') as f:
        header = f.readline().strip().split(',')
    if header[:3] == SERIES_COLUMNS:
        return [float(read_series_csv(filepath)[1])]
    frame = pd.read_csv(filepath)
    if column not in frame.columns:
        raise ValueError(f"{filepath} has no column '{column}'")
    return frame[column].astype(float).tolist()


def validate_records(records: List[Dict]) -> List[Dict]:
    """Drop run records that miss required fields or carry a non-monotone series"""
    validated = []
    for record in records:
        if not all(key in record for key in RECORD_FIELDS):
            logger.warning(f"Skipping record with missing fields: {record.get('algorithm')} "
                           f"{record.get('instance')} seed={record.get('seed')}")
            continue
        series = record['best_costs']
        if any(b > a for a, b in zip(series, series[1:])):
            logger.warning(f"Skipping record with increasing best-so-far series: "
                           f"{record['algorithm']} {record['instance']} seed={record['seed']}")
            continue
        validated.append(record)
    return validated


def run_record(algorithm: str, instance: str, seed: int, params: Dict, stats: RunStats,
               transcript: Optional[Dict] = None, timings: Optional[Dict] = None) -> Dict:
    return {
        'algorithm': algorithm,
        'instance': instance,
        'seed': seed,
        'params': params,
        'final_cost': stats.best_cost,
        'best_tour': list(stats.best_tour or []),
        'best_costs': list(stats.best_costs),
        'mean_costs': [format_mean(v) for v in stats.mean_costs],
        'transcript': transcript,
        'timings': timings or {},
    }
