"""Rank-based tests: Mann-Whitney U, Wilcoxon signed-rank, Kruskal-Wallis, Dunn.

Exact null distributions are built by counting recurrences, which enumerate
every rank assignment (or sign pattern) without materializing them. Normal
approximations carry tie and continuity corrections.
"""
import logging
from functools import lru_cache
from itertools import combinations
from typing import List, Sequence

import numpy as np
from scipy.stats import chi2, norm, rankdata

from src.models import TestMethod, TestResult
from src.utils.errors import (AllZeroDifferencesError, EmptySampleError,
                              LengthMismatchError, TooFewGroupsError)

logger = logging.getLogger(__name__)

MWU_EXACT_CUTOFF = 16
SIGNED_RANK_EXACT_CUTOFF = 15
SIGNED_RANK_MIN_PAIRS = 5
KRUSKAL_PERMUTATION_CUTOFF = 30
PERMUTATIONS = 10_000
PERMUTATION_SEED = 20230516


def _sample(values, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float).ravel()
    if array.size == 0:
        raise EmptySampleError(f'{name} is empty')
    return array


def _tie_term(values: np.ndarray) -> float:
    """Sum of t^3 - t over groups of tied values"""
    _, counts = np.unique(values, return_counts=True)
    counts = counts.astype(float)
    return float(np.sum(counts ** 3 - counts))


def _two_sided(p_one_sided: float) -> float:
    return float(min(1.0, 2.0 * p_one_sided))


@lru_cache(maxsize=None)
def _u_counts(n1: int, n2: int) -> tuple:
    """Number of orderings of n1 + n2 distinct values giving U = 0 .. n1*n2"""
    if n1 == 0 or n2 == 0:
        return (1,)
    counts = np.zeros(n1 * n2 + 1, dtype=np.int64)
    # Largest pooled value from x adds n2 to U; from y adds nothing
    with_x = np.array(_u_counts(n1 - 1, n2), dtype=np.int64)
    with_y = np.array(_u_counts(n1, n2 - 1), dtype=np.int64)
    counts[n2:n2 + with_x.size] += with_x
    counts[:with_y.size] += with_y
    return tuple(int(c) for c in counts)


def _mwu_exact_p(u: float, n1: int, n2: int) -> float:
    counts = np.array(_u_counts(n1, n2), dtype=float)
    low = min(u, n1 * n2 - u)
    return _two_sided(counts[:int(np.floor(low + 1e-9)) + 1].sum() / counts.sum())


def _mwu_normal_p(u: float, n1: int, n2: int, tie_term: float) -> float:
    total = n1 + n2
    variance = n1 * n2 / 12.0 * ((total + 1) - tie_term / (total * (total - 1)))
    if variance <= 0:
        return 1.0
    z = max(abs(u - n1 * n2 / 2.0) - 0.5, 0.0) / np.sqrt(variance)
    return _two_sided(norm.sf(z))


def mann_whitney_u(x: Sequence[float], y: Sequence[float], alternative: str = 'two-sided',
                   exact_cutoff: int = MWU_EXACT_CUTOFF) -> TestResult:
    """
    Two-sided Mann-Whitney U test; the statistic is U of the first sample

    Exact p when the samples are tie-free and |x| + |y| <= exact_cutoff,
    otherwise the tie- and continuity-corrected normal approximation.
    """
    if alternative != 'two-sided':
        raise ValueError('Only the two-sided alternative is supported')
    x = _sample(x, 'x')
    y = _sample(y, 'y')
    n1, n2 = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    tie_term = _tie_term(pooled)
    has_ties = tie_term > 0

    if n1 + n2 <= exact_cutoff and not has_ties:
        p_value = _mwu_exact_p(u1, n1, n2)
        method = TestMethod.EXACT
    else:
        p_value = _mwu_normal_p(u1, n1, n2, tie_term)
        method = TestMethod.NORMAL

    return TestResult(statistic=u1, p_value=p_value, method=method, n=(n1, n2),
                      tie_correction_applied=has_ties and method is TestMethod.NORMAL,
                      name='mann_whitney_u')


def _signed_rank_exact_p(ranks: np.ndarray, w: float) -> float:
    """Exact p over all 2^n sign patterns; midranks are handled in half units"""
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    counts = np.ones(1, dtype=float)
    for r in doubled:
        grown = np.zeros(counts.size + r, dtype=float)
        grown[:counts.size] += counts
        grown[r:] += counts
        counts = grown
    low = int(np.rint(2.0 * w))
    return _two_sided(counts[:low + 1].sum() / counts.sum())


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float],
                         exact_cutoff: int = SIGNED_RANK_EXACT_CUTOFF) -> TestResult:
    """
    Two-sided Wilcoxon signed-rank test on paired samples; statistic is W+

    Zero differences are dropped first. Exact p for n <= exact_cutoff,
    normal approximation beyond. Fewer than 5 remaining pairs are tested
    exactly but logged: the smallest attainable two-sided p is then 2 / 2^n,
    at least 0.125, so such a test can never reach the 0.05 level.

    Raises:
        AllZeroDifferencesError: if every pair is equal
    """
    x = _sample(x, 'x')
    y = _sample(y, 'y')
    if x.size != y.size:
        raise LengthMismatchError(f'Paired samples differ in length: {x.size} vs {y.size}')
    diffs = x - y
    diffs = diffs[diffs != 0]
    if diffs.size == 0:
        raise AllZeroDifferencesError('All paired differences are zero')

    n = diffs.size
    if n < SIGNED_RANK_MIN_PAIRS:
        logger.warning(f'Signed-rank test on {n} nonzero pairs; p cannot fall below {2.0 / 2 ** n:.4g}')
    magnitudes = np.abs(diffs)
    ranks = rankdata(magnitudes)
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    tie_term = _tie_term(magnitudes)

    if n <= exact_cutoff:
        p_value = _signed_rank_exact_p(ranks, min(w_plus, w_minus))
        method = TestMethod.EXACT
    else:
        mean = n * (n + 1) / 4.0
        variance = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
        if variance <= 0:
            p_value = 1.0
        else:
            z = max(abs(w_plus - mean) - 0.5, 0.0) / np.sqrt(variance)
            p_value = _two_sided(norm.sf(z))
        method = TestMethod.NORMAL

    return TestResult(statistic=w_plus, p_value=p_value, method=method, n=(n,),
                      tie_correction_applied=tie_term > 0, name='wilcoxon_signed_rank')


def _groups(groups: Sequence[Sequence[float]]) -> List[np.ndarray]:
    if len(groups) < 2:
        raise TooFewGroupsError(f'Need at least 2 groups, got {len(groups)}')
    return [_sample(g, f'group {i}') for i, g in enumerate(groups)]


def _h_statistic(rank_sums: np.ndarray, sizes: np.ndarray, total: int, correction: float):
    h = 12.0 / (total * (total + 1)) * np.sum(rank_sums ** 2 / sizes, axis=-1) - 3.0 * (total + 1)
    return h / correction


def kruskal_wallis(groups: Sequence[Sequence[float]], method: str = 'auto',
                   permutations: int = PERMUTATIONS, seed: int = PERMUTATION_SEED,
                   permutation_cutoff: int = KRUSKAL_PERMUTATION_CUTOFF) -> TestResult:
    """
    Kruskal-Wallis H test with tie correction

    Args:
        groups: two or more samples
        method: 'auto' (permutation when the total size <= permutation_cutoff,
            chi-square otherwise), 'chi_square' or 'permutation'
        permutations: number of seeded label permutations
        seed: generator seed; identical inputs give identical p-values
    """
    samples = _groups(groups)
    sizes = np.array([s.size for s in samples], dtype=float)
    pooled = np.concatenate(samples)
    total = pooled.size
    ranks = rankdata(pooled)
    tie_term = _tie_term(pooled)
    correction = 1.0 - tie_term / (total ** 3 - total) if total > 1 else 0.0
    n = tuple(int(s) for s in sizes)

    if correction <= 0:
        return TestResult(statistic=0.0, p_value=1.0, method=TestMethod.CHI_SQUARE, n=n,
                          tie_correction_applied=True, name='kruskal_wallis')

    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    rank_sums = np.add.reduceat(ranks, offsets)
    h = float(_h_statistic(rank_sums, sizes, total, correction))
    h = max(h, 0.0)

    if method == 'auto':
        method = 'permutation' if total <= permutation_cutoff else 'chi_square'
    if method == 'permutation':
        rng = np.random.default_rng(seed)
        order = np.argsort(rng.random((permutations, total)), axis=1)
        permuted_sums = np.add.reduceat(ranks[order], offsets, axis=1)
        permuted_h = _h_statistic(permuted_sums, sizes, total, correction)
        exceed = int(np.sum(permuted_h >= h - 1e-9 * max(1.0, h)))
        p_value = (exceed + 1) / (permutations + 1)
        test_method = TestMethod.PERMUTATION
    elif method == 'chi_square':
        p_value = float(chi2.sf(h, len(samples) - 1))
        test_method = TestMethod.CHI_SQUARE
    else:
        raise ValueError(f'Unknown method {method!r}')

    return TestResult(statistic=h, p_value=min(1.0, float(p_value)), method=test_method, n=n,
                      tie_correction_applied=tie_term > 0, name='kruskal_wallis')


def dunn_posthoc(groups: Sequence[Sequence[float]]) -> List[TestResult]:
    """
    Pairwise Dunn z tests on mean ranks with tie correction

    Each result carries the unadjusted two-sided p in ``p_value`` and the
    Bonferroni-adjusted p in ``p_adjusted``; ``pair`` holds the group indices.
    """
    samples = _groups(groups)
    pooled = np.concatenate(samples)
    total = pooled.size
    ranks = rankdata(pooled)
    tie_term = _tie_term(pooled)
    variance = total * (total + 1) / 12.0 - (tie_term / (12.0 * (total - 1)) if total > 1 else 0.0)

    bounds = np.cumsum([0] + [s.size for s in samples])
    mean_ranks = [float(ranks[bounds[i]:bounds[i + 1]].mean()) for i in range(len(samples))]
    n_pairs = len(samples) * (len(samples) - 1) // 2

    results = []
    for i, j in combinations(range(len(samples)), 2):
        n_i, n_j = samples[i].size, samples[j].size
        se = np.sqrt(max(variance, 0.0) * (1.0 / n_i + 1.0 / n_j))
        z = (mean_ranks[i] - mean_ranks[j]) / se if se > 0 else 0.0
        p_value = _two_sided(norm.sf(abs(z)))
        results.append(TestResult(statistic=float(z), p_value=p_value, method=TestMethod.NORMAL,
                                  n=(n_i, n_j), tie_correction_applied=tie_term > 0,
                                  name='dunn', pair=(i, j),
                                  p_adjusted=min(1.0, p_value * n_pairs)))
    return results
