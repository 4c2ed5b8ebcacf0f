"""Pairwise and multiple-comparison tests over an N datasets x K algorithms
matrix of one evaluation metric (lower is better).

Pairwise tests take a baseline column and a variant column; differences are
``baseline - variant`` so a positive difference is a win for the variant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as _st

from .errors import DegenerateError, DomainError, InputError, RowError, SchemaError

ACCEPT, REJECT = "accept", "reject"
SIGN_TEST_EXACT_MAX_N = 25

# Nemenyi q_alpha at alpha = 0.05: studentized range quantile / sqrt(2).
# K = 2..10 are the classic tabulated values; K >= 11 come from the
# studentized-range quantile at infinite df, except K = 16 which is pinned
# to 3.523 so that K=16, N=90 gives CD = 2.50.
NEMENYI_Q05 = {
    2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031,
    9: 3.102, 10: 3.164, 11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354,
    15: 3.391, 16: 3.523, 17: 3.458, 18: 3.489, 19: 3.517, 20: 3.544,
}


@dataclass(frozen=True)
class MetricsMatrix:
    values: np.ndarray
    datasets: tuple[str, ...]
    algorithms: tuple[str, ...]
    metric: str = ""
    horizon: int | None = None

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape != (len(self.datasets), len(self.algorithms)):
            raise InputError(f"values shape {v.shape} does not match labels")
        if v.shape[0] < 1 or v.shape[1] < 2:
            raise InputError("need at least one dataset and two algorithms")
        if not np.all(np.isfinite(v)):
            raise DomainError("metrics matrix contains non-finite values")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.algorithms.index(name)]
        except ValueError:
            raise InputError(f"unknown algorithm column {name!r}") from None


@dataclass
class TestResult:
    test: str
    statistic: float
    critical: float
    decision: str
    alpha: float
    warnings: list[str] = field(default_factory=list)
    p_value: float | None = None
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def rejected(self) -> bool:
        return self.decision == REJECT

    def cell(self, digits: int = 2) -> str:
        """Compact ``R(8.2)`` / ``A(0.4)`` rendering."""
        value = abs(self.statistic)
        text = f"{value:.{digits}g}" if value < 100 else f"{value:.0f}"
        return f"{'R' if self.rejected else 'A'}({text})"


@dataclass(frozen=True)
class RankTable:
    ranks: np.ndarray
    algorithms: tuple[str, ...] = ()

    @property
    def average(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    @property
    def N(self) -> int:
        return self.ranks.shape[0]

    @property
    def K(self) -> int:
        return self.ranks.shape[1]


@dataclass(frozen=True)
class NemenyiResult:
    cd: float
    q_alpha: float
    average_ranks: np.ndarray
    significant: np.ndarray
    algorithms: tuple[str, ...] = ()

    def text_matrix(self) -> str:
        names = list(self.algorithms) or [str(i) for i in range(len(self.average_ranks))]
        width = max(len(n) for n in names)
        lines = [f"CD = {self.cd:.4f} (q_alpha = {self.q_alpha})"]
        lines.append(" " * (width + 1) + " ".join(n.rjust(width) for n in names))
        for i, name in enumerate(names):
            cells = [("*" if self.significant[i, j] else ".").rjust(width) for j in range(len(names))]
            lines.append(name.ljust(width) + " " + " ".join(cells))
        return "\n".join(lines) + "\n"


# -- distributions ----------------------------------------------------------

def critical_value(distribution: str, quantile: float, df: float | None = None) -> float:
    """Quantile of the standard normal, Student t or chi-squared distribution."""
    if not 0.0 < quantile < 1.0:
        raise DomainError(f"quantile must lie in (0, 1), got {quantile}")
    if distribution == "normal":
        return float(_st.norm.ppf(quantile))
    if df is None or df < 1:
        raise DomainError(f"{distribution} quantile needs df >= 1, got {df}")
    if distribution == "student-t":
        return float(_st.t.ppf(quantile, df))
    if distribution == "chi-squared":
        return float(_st.chi2.ppf(quantile, df))
    raise DomainError(f"unknown distribution {distribution!r}")


def decide(statistic: float, critical: float, rule: str) -> str:
    """``abs-gt``: |s| > c; ``gt``: s > c; ``ge``: s >= c."""
    if rule == "abs-gt":
        hit = abs(statistic) > critical
    elif rule == "gt":
        hit = statistic > critical
    elif rule == "ge":
        hit = statistic >= critical
    else:
        raise ValueError(f"unknown decision rule {rule!r}")
    return REJECT if hit else ACCEPT


# -- pairwise ---------------------------------------------------------------

def _differences(baseline, variant) -> np.ndarray:
    bl = np.asarray(baseline, dtype=float)
    tg = np.asarray(variant, dtype=float)
    if bl.shape != tg.shape or bl.ndim != 1:
        raise InputError("baseline and variant must be 1-D columns of equal length")
    return bl - tg


def paired_t(baseline, variant, alpha: float = 0.05) -> TestResult:
    d = _differences(baseline, variant)
    N = d.size
    if N < 2:
        raise DegenerateError("paired t-test needs at least 2 datasets")
    s = d.std(ddof=1)
    if s == 0:
        raise DegenerateError("paired t-test undefined: all differences are identical")
    t = d.mean() / (s / math.sqrt(N))
    crit = critical_value("student-t", 1.0 - alpha / 2.0, N - 1)
    return TestResult(
        "paired-t", float(t), crit, decide(t, crit, "abs-gt"), alpha,
        p_value=float(2.0 * _st.t.sf(abs(t), N - 1)),
        details={"mean_difference": float(d.mean()), "sd": float(s), "df": N - 1},
    )


def wilcoxon(baseline, variant, alpha: float = 0.05) -> TestResult:
    """Signed-ranks test, normal approximation, zero differences split evenly."""
    d = _differences(baseline, variant)
    N = d.size
    if N == 0 or np.all(d == 0):
        raise DegenerateError("Wilcoxon test undefined: all differences are zero")
    notes = []
    if N < 10:
        notes.append(f"normal approximation used with N={N} < 10")
    ranks = _st.rankdata(np.abs(d), method="average")
    half_zero = 0.5 * ranks[d == 0].sum()
    b_plus = ranks[d > 0].sum() + half_zero
    b_minus = ranks[d < 0].sum() + half_zero
    b_star = min(b_plus, b_minus)
    z = (b_star - N * (N + 1) / 4.0) / math.sqrt(N * (N + 1) * (2 * N + 1) / 24.0)
    crit = critical_value("normal", 1.0 - alpha / 2.0)
    return TestResult(
        "wilcoxon", float(z), crit, decide(z, crit, "abs-gt"), alpha, notes,
        p_value=float(2.0 * _st.norm.sf(abs(z))),
        details={"b_plus": float(b_plus), "b_minus": float(b_minus)},
    )


def sign_test_threshold(N: int, z: float = 1.96) -> float:
    return N / 2.0 + z * math.sqrt(N) / 2.0


def binomial_two_sided_p(k: int, n: int) -> float:
    """Two-sided exact p-value of ``k`` successes in ``n`` fair trials."""
    if n == 0:
        return 1.0
    lower = _st.binom.cdf(k, n, 0.5)
    upper = _st.binom.sf(k - 1, n, 0.5)
    return float(min(1.0, 2.0 * min(lower, upper)))


def sign_test(baseline, variant, alpha: float = 0.05, exact: bool | None = None) -> TestResult:
    """Count of datasets on which the variant wins, ties shared half/half.

    For ``N > 25`` the count is compared with ``N/2 + z sqrt(N)/2`` (z = 1.96
    at alpha = 0.05). Otherwise an exact two-sided binomial test is used;
    for that path an odd tie is dropped and the rest split evenly.
    """
    d = _differences(baseline, variant)
    N = d.size
    if N == 0:
        raise InputError("sign test needs at least one dataset")
    wins = int((d > 0).sum())
    losses = int((d < 0).sum())
    ties = N - wins - losses
    W = wins + 0.5 * ties
    notes = []
    use_exact = N <= SIGN_TEST_EXACT_MAX_N if exact is None else exact
    if not use_exact:
        z = 1.96 if alpha == 0.05 else critical_value("normal", 1.0 - alpha / 2.0)
        crit = sign_test_threshold(N, z)
        notes.append(f"normal approximation threshold N/2 + {z:g}*sqrt(N)/2 = {crit:.2f}")
        p = float(_st.norm.sf((W - N / 2.0) / (math.sqrt(N) / 2.0)))
        return TestResult("sign", float(W), crit, decide(W, crit, "ge"), alpha, notes, p_value=p,
                          details={"wins": wins, "losses": losses, "ties": ties})

    k = wins + ties // 2
    n = wins + losses + 2 * (ties // 2)
    if ties % 2:
        notes.append("one tied dataset dropped for the exact test")
    p = binomial_two_sided_p(k, n)
    crit = _exact_upper_critical(n, alpha)
    decision = REJECT if p <= alpha else ACCEPT
    return TestResult("sign", float(W), crit, decision, alpha, notes, p_value=p,
                      details={"wins": wins, "losses": losses, "ties": ties, "exact": True})


def _exact_upper_critical(n: int, alpha: float) -> float:
    """Smallest win count whose two-sided exact p-value is <= alpha (inf if none)."""
    for c in range(int(math.ceil(n / 2.0)), n + 1):
        if binomial_two_sided_p(c, n) <= alpha:
            return float(c)
    return math.inf


# -- multiple comparison ----------------------------------------------------

def rank_matrix(matrix) -> RankTable:
    """Rank each dataset's row ascending (1 = best); ties get average ranks."""
    if isinstance(matrix, MetricsMatrix):
        values, names = matrix.values, matrix.algorithms
    else:
        values, names = np.asarray(matrix, dtype=float), ()
    if values.ndim != 2:
        raise InputError("rank_matrix expects an N x K matrix")
    if not np.all(np.isfinite(values)):
        raise DomainError("cannot rank non-finite values")
    return RankTable(_st.rankdata(values, method="average", axis=1), tuple(names))


def friedman_statistic(average_ranks, N: int) -> float:
    r = np.asarray(average_ranks, dtype=float)
    K = r.size
    return float(12.0 * N / (K * (K + 1)) * (np.sum(r**2) - K * (K + 1) ** 2 / 4.0))


def friedman_from_average_ranks(average_ranks, N: int, alpha: float = 0.05,
                                quantile: float | None = None) -> TestResult:
    r = np.asarray(average_ranks, dtype=float)
    K = r.size
    notes = []
    if N <= 10 or K <= 5:
        notes.append(f"chi-squared approximation assumes N > 10 and K > 5 (N={N}, K={K})")
    stat = friedman_statistic(r, N)
    crit = critical_value("chi-squared", quantile or 1.0 - alpha, K - 1)
    return TestResult(
        "friedman", stat, crit, decide(stat, crit, "gt"), alpha, notes,
        p_value=float(_st.chi2.sf(stat, K - 1)),
        details={
            "df": K - 1,
            "critical_0.95": critical_value("chi-squared", 0.95, K - 1),
            "critical_0.975": critical_value("chi-squared", 0.975, K - 1),
        },
    )


def friedman(ranks: RankTable, alpha: float = 0.05, quantile: float | None = None) -> TestResult:
    return friedman_from_average_ranks(ranks.average, ranks.N, alpha, quantile)


def nemenyi_q(K: int, alpha: float = 0.05) -> float:
    if alpha == 0.05 and K in NEMENYI_Q05:
        return NEMENYI_Q05[K]
    if K < 2:
        raise DomainError("Nemenyi test needs K >= 2")
    return float(_st.studentized_range.ppf(1.0 - alpha, K, np.inf) / math.sqrt(2.0))


def critical_difference(K: int, N: int, q_alpha: float) -> float:
    if q_alpha <= 0:
        raise DomainError("q_alpha must be positive")
    return q_alpha * math.sqrt(K * (K + 1) / (6.0 * N))


def nemenyi(average_ranks, N: int, q_alpha: float | None = None, alpha: float = 0.05,
            algorithms=()) -> NemenyiResult:
    r = np.asarray(average_ranks, dtype=float)
    K = r.size
    q = nemenyi_q(K, alpha) if q_alpha is None else float(q_alpha)
    cd = critical_difference(K, N, q)
    significant = np.abs(r[:, None] - r[None, :]) > cd
    return NemenyiResult(cd, q, r, significant, tuple(algorithms))


# -- files ------------------------------------------------------------------

def read_metrics_matrix(path, metric: str = "", horizon: int | None = None) -> MetricsMatrix:
    """Parse ``dataset,<algo_1>,...,<algo_K>`` with one row per dataset."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip().lower() != "dataset":
            raise SchemaError(f"{path}: header must start with 'dataset'")
        algorithms = tuple(h.strip() for h in header[1:])
        if len(algorithms) < 2:
            raise SchemaError(f"{path}: need at least two algorithm columns")
        if len(set(algorithms)) != len(algorithms):
            raise SchemaError(f"{path}: duplicate algorithm columns")
        datasets, rows = [], []
        for row in reader:
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise RowError(reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise RowError(reader.line_num, "unparseable metric value") from None
            datasets.append(row[0].strip())
    if not rows:
        raise SchemaError(f"{path}: no datasets")
    return MetricsMatrix(np.array(rows), tuple(datasets), algorithms, metric, horizon)
