"""
Summary statistics and the two-sided Wilcoxon rank-sum test.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from scipy.stats import mannwhitneyu, permutation_test, rankdata

# splits of the pooled sample enumerated for an exact p-value; covers 10 vs 10
EXACT_LIMIT = 200_000


@dataclass(frozen=True)
class Comparison:
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    p_value: float

    def as_dict(self) -> Dict:
        return asdict(self)


def summarize(values: Sequence[float], ddof: int = 1) -> Dict[str, float]:
    """Mean and standard deviation; ddof=1 gives the sample std"""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise ValueError("cannot summarize an empty sample")
    std = float(data.std(ddof=ddof)) if data.size > ddof else 0.0
    return {'mean': float(data.mean()), 'std': std}


def rank_sum_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided p-value of the Wilcoxon rank-sum test.

    When the two samples split the pooled data in at most EXACT_LIMIT ways the
    p-value is exact: every split of the pooled midranks is enumerated, which
    stays correct under ties. Larger samples use scipy's normal approximation
    with tie and continuity corrections. All values tied gives p = 1.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([x, y])
    if np.all(pooled == pooled[0]):
        return 1.0
    if math.comb(n1 + n2, n1) <= EXACT_LIMIT:
        ranks = rankdata(pooled)
        result = permutation_test((ranks[:n1], ranks[n1:]), _rank_sum, permutation_type='independent',
                                  vectorized=True, n_resamples=np.inf, alternative='two-sided')
    else:
        result = mannwhitneyu(x, y, use_continuity=True, alternative='two-sided', method='asymptotic')
    return float(min(1.0, result.pvalue))


def _rank_sum(x, y, axis):
    return np.sum(x, axis=axis)


def compare(a: Sequence[float], b: Sequence[float], ddof: int = 1) -> Comparison:
    sa, sb = summarize(a, ddof), summarize(b, ddof)
    return Comparison(sa['mean'], sa['std'], sb['mean'], sb['std'], rank_sum_test(a, b))
