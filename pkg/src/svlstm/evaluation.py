"""Point-forecast error metrics and paired forecast-comparison tests."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np
from scipy import stats

from .errors import DataError, DegenerateError

LOSS_KINDS = ("squared", "absolute")


@dataclass(frozen=True)
class MetricReport:
    mse: float
    mae: float
    mape_percent: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TestResult:
    """Outcome of a paired test.

    For Wilcoxon ``statistic`` is W and ``z_or_t`` the normal score; for
    Diebold-Mariano both hold the DM statistic. ``p_value`` is two-sided.
    """

    name: str
    statistic: float
    z_or_t: float
    p_value: float
    n_effective: int
    loss_kind: str | None = None
    p_value_one_sided: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(a, b, min_len=1):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise ValueError(f"need at least {min_len} paired observations, got {a.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("inputs must be finite")
    return a, b


def point_metrics(y_true, y_pred) -> MetricReport:
    y, f = _pair(y_true, y_pred)
    if np.any(y == 0):
        raise ValueError("MAPE is undefined when an actual value is zero")
    e = f - y
    return MetricReport(
        mse=float(np.mean(e * e)),
        mae=float(np.mean(np.abs(e))),
        mape_percent=float(100.0 * np.mean(np.abs(e / y))),
        n=int(y.size),
    )


def _nonzero_differences(e1, e2):
    a, b = _pair(e1, e2)
    d = a - b
    d = d[d != 0]
    if d.size == 0:
        raise DegenerateError("all paired differences are zero")
    return d


def signed_ranks(e1, e2):
    """Mid-ranks of |d| for the nonzero differences and the sign of each d."""
    d = _nonzero_differences(e1, e2)
    return stats.rankdata(np.abs(d), method="average"), np.sign(d)


def wilcoxon_signed_rank(e1, e2) -> TestResult:
    """Signed-rank test on d = e1 - e2 with zeros dropped and the plain normal score."""
    ranks, sign = signed_ranks(e1, e2)
    n = ranks.size
    w = float(ranks[sign > 0].sum())
    mean = n * (n + 1) / 4.0
    sd = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0)
    z = (w - mean) / sd
    p = float(min(1.0, 2.0 * stats.norm.sf(abs(z))))
    return TestResult("wilcoxon", w, z, p, n)


def wilcoxon_null_distribution(ranks) -> tuple[np.ndarray, np.ndarray]:
    """Exact null distribution of W for the given ranks.

    Every rank is positive or negative with probability one half, so the
    sum of positive ranks follows a convolution of two-point laws. Ranks may
    be mid-ranks (multiples of 0.5). Returns the support and the number of
    the 2**n sign assignments yielding each value.
    """
    doubled = np.rint(2 * np.asarray(ranks, dtype=float)).astype(int)
    if not np.allclose(doubled, 2 * np.asarray(ranks, dtype=float)):
        raise ValueError("ranks must be multiples of 0.5")
    counts = np.zeros(int(doubled.sum()) + 1, dtype=object)
    counts[0] = 1
    top = 0
    for r in doubled:
        counts[r:top + r + 1] = counts[r:top + r + 1] + counts[:top + 1].copy()
        top += r
    support = np.flatnonzero(counts)
    return support / 2.0, counts[support].astype(np.int64)


def wilcoxon_exact_p(e1, e2) -> float:
    """Two-sided exact p-value from the enumerated null (small samples)."""
    ranks, sign = signed_ranks(e1, e2)
    w = ranks[sign > 0].sum()
    values, counts = wilcoxon_null_distribution(ranks)
    centre = ranks.sum() / 2.0
    extreme = np.abs(values - centre) >= abs(w - centre) - 1e-9
    return float(min(1.0, counts[extreme].sum() / counts.sum()))


def _loss(e, kind):
    if kind == "squared":
        return e * e
    if kind == "absolute":
        return np.abs(e)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def long_run_variance(d, lag: int) -> float:
    """Newey-West variance with Bartlett weights and 1/n autocovariances."""
    d = np.asarray(d, dtype=float)
    n = d.size
    u = d - d.mean()
    lrv = float(u @ u) / n
    for k in range(1, lag + 1):
        lrv += 2.0 * (1.0 - k / (lag + 1)) * float(u[k:] @ u[:-k]) / n
    return lrv


def diebold_mariano(e1, e2, loss_kind: str = "squared", h: int = 1, hln: bool = False) -> TestResult:
    """DM test on d = L(e1) - L(e2); a negative statistic favours the first series.

    ``p_value_one_sided`` tests E[d] < 0. With ``hln`` the small-sample
    correction is applied and p-values come from Student t with n-1 df.
    """
    if h < 1:
        raise ValueError("forecast horizon must be at least 1")
    a, b = _pair(e1, e2, min_len=10)
    d = _loss(a, loss_kind) - _loss(b, loss_kind)
    n = d.size
    lrv = long_run_variance(d, h - 1)
    if not lrv > 0:
        raise DegenerateError("loss differential has zero long-run variance")
    dm = float(d.mean() / math.sqrt(lrv / n))
    if hln:
        dm *= math.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
        dist = stats.t(df=n - 1)
    else:
        dist = stats.norm
    return TestResult(
        "diebold_mariano",
        dm,
        dm,
        float(min(1.0, 2.0 * dist.sf(abs(dm)))),
        n,
        loss_kind=loss_kind,
        p_value_one_sided=float(dist.cdf(dm)),
    )


def _safe(test, *args, **kwargs):
    try:
        return test(*args, **kwargs), None
    except DegenerateError as exc:
        return None, str(exc)


def compare_pair(name_a: str, e_a, name_b: str, e_b) -> dict:
    """One comparison row: Wilcoxon W/Z/p and DM on squared and absolute loss.

    Degenerate tests are reported with null values and the reason.
    """
    row = {"comparison": f"{name_a} vs. {name_b}"}
    wil, why = _safe(wilcoxon_signed_rank, e_a, e_b)
    row["wilcoxon_W"] = None if wil is None else wil.statistic
    row["wilcoxon_Z"] = None if wil is None else wil.z_or_t
    row["wilcoxon_p"] = None if wil is None else wil.p_value
    row["wilcoxon_n"] = None if wil is None else wil.n_effective
    degenerate = {} if why is None else {"wilcoxon": why}
    for kind, tag in (("squared", "mse"), ("absolute", "mae")):
        dm, why = _safe(diebold_mariano, e_a, e_b, kind)
        row[f"dm_{tag}"] = None if dm is None else dm.statistic
        row[f"dm_{tag}_p"] = None if dm is None else dm.p_value
        row[f"dm_{tag}_p_one_sided"] = None if dm is None else dm.p_value_one_sided
        if why is not None:
            degenerate[f"dm_{tag}"] = why
    row["degenerate"] = degenerate
    return row


def comparison_report(dates, y_true, predictions: dict) -> dict:
    """Metrics per model plus every pairwise comparison, in insertion order of ``predictions``."""
    y = np.asarray(y_true, dtype=float)
    names = list(predictions)
    if len(names) < 2:
        raise DataError("need at least two forecast series to compare")
    errors = {}
    for name in names:
        f = np.asarray(predictions[name], dtype=float)
        if f.shape != y.shape:
            raise DataError(f"forecast {name!r} has {f.size} rows, expected {y.size}")
        errors[name] = f - y
    dates = np.asarray(dates, dtype="datetime64[D]")
    return {
        "n": int(y.size),
        "first_date": str(dates[0]) if dates.size else None,
        "last_date": str(dates[-1]) if dates.size else None,
        "metrics": {name: point_metrics(y, predictions[name]).to_dict() for name in names},
        "comparisons": [compare_pair(a, errors[a], b, errors[b]) for a, b in combinations(names, 2)],
    }
