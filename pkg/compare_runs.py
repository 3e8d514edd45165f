#!/usr/bin/env python3
"""
Run Comparer for PEGA experiments
Groups run records by instance and reports mean, std and the Wilcoxon
rank-sum p-value for each algorithm pair.
"""

import json
import os
import sys
from datetime import datetime
from typing import Dict, List, Optional

import pandas as pd

from pega.io_utils import save_to_json, validate_records
from pega.stats import compare, summarize

PAIRS = [('GA1', 'PEGA1'), ('GA2', 'PEGA2'), ('GA1', 'GA2'), ('PEGA1', 'PEGA2')]
SIGNIFICANCE = 0.05


class RunComparer:
    """Builds the comparison report from output/runs.json"""

    def __init__(self, base_dir: Optional[str] = None, runs_file: str = 'runs.json'):
        self.base_dir = base_dir or os.path.dirname(os.path.abspath(__file__))
        self.output_dir = os.path.join(self.base_dir, 'output')
        self.runs_file = runs_file
        self.records: List[Dict] = []
        self.stats = {'records': 0, 'instances': 0, 'comparisons': 0}

    def load_records(self):
        filepath = os.path.join(self.output_dir, self.runs_file)
        print(f"Loading {filepath}...")
        with open(filepath, 'r', encoding='utf-8') as f:
            self.records = validate_records(json.load(f))
        self.stats['records'] = len(self.records)

    def final_costs(self) -> pd.DataFrame:
        return pd.DataFrame([
            {'instance': r['instance'], 'algorithm': r['algorithm'], 'seed': r['seed'],
             'final_cost': r['final_cost']}
            for r in self.records
        ])

    def compare_instance(self, frame: pd.DataFrame) -> Dict:
        samples = {name: group['final_cost'].astype(float).tolist()
                   for name, group in frame.groupby('algorithm')}
        entry = {
            'algorithms': {name: {**summarize(values), 'runs': len(values)}
                           for name, values in sorted(samples.items())},
            'comparisons': [],
        }
        for a, b in PAIRS:
            if a not in samples or b not in samples:
                continue
            result = compare(samples[a], samples[b]).as_dict()
            result.update({'a': a, 'b': b, 'significant': result['p_value'] < SIGNIFICANCE})
            entry['comparisons'].append(result)
            self.stats['comparisons'] += 1
        return entry

    def generate_report(self) -> Dict:
        frame = self.final_costs()
        instances = {}
        if not frame.empty:
            for name, group in frame.groupby('instance'):
                instances[name] = self.compare_instance(group)
        self.stats['instances'] = len(instances)
        report = {
            'report_metadata': {
                'generated_date': datetime.now().isoformat(),
                'description': 'Final-cost statistics and rank-sum tests per instance',
                'significance_level': SIGNIFICANCE,
            },
            'summary': dict(self.stats),
            'instances': instances,
        }
        save_to_json(report, os.path.join(self.output_dir, 'comparison_report.json'))
        return report

    def print_report(self, report: Dict):
        print(f"\n{'=' * 70}")
        print(f"{'Instance':<12} {'A':<7} {'B':<7} {'mean A':>12} {'mean B':>12} {'p-value':>10}")
        print(f"{'-' * 70}")
        for name, entry in report['instances'].items():
            for c in entry['comparisons']:
                marker = ' *' if c['significant'] else ''
                print(f"{name:<12} {c['a']:<7} {c['b']:<7} {c['mean_a']:>12.4e} {c['mean_b']:>12.4e} "
                      f"{c['p_value']:>10.4f}{marker}")
        print(f"{'=' * 70}")

    def run(self) -> bool:
        print("\n" + "=" * 70)
        print("PEGA RUN COMPARISON")
        print("=" * 70)
        self.load_records()
        report = self.generate_report()
        self.print_report(report)
        print(f"\nSaved comparison report: {os.path.join(self.output_dir, 'comparison_report.json')}")
        return self.stats['records'] > 0


def main():
    comparer = RunComparer()
    return comparer.run()


if __name__ == '__main__':
    sys.exit(0 if main() else 1)
