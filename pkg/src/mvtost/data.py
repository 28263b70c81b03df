"""Paired crossover data: CSV ingestion, robust outlier screen, summary statistics.

The CSV layout is one row per subject::

    subject,t_half_T,t_half_R,auc_0t_T,auc_0t_R,...

Values are on the original (positive) scale; the analysis works with the
per-subject log ratios ``log T - log R``.
"""

import csv
import io
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import SummaryStats
from .exceptions import DegenerateScaleError, DomainError, ParseError
from .kernels import std_normal_ppf

__all__ = [
    "MAD_CONSISTENCY",
    "PairedDataset",
    "ScreenReport",
    "load_csv",
    "load_ticlopidine",
    "mad_screen",
    "summarize",
]

MAD_CONSISTENCY = 1.4826


@dataclass(frozen=True)
class PairedDataset:
    subjects: tuple
    outcomes: tuple
    test: np.ndarray
    reference: np.ndarray

    @property
    def n(self):
        return len(self.subjects)

    @property
    def m(self):
        return len(self.outcomes)

    def log_differences(self):
        return np.log(self.test) - np.log(self.reference)

    def subset(self, keep):
        keep = np.asarray(keep, dtype=bool)
        return PairedDataset(
            tuple(s for s, k in zip(self.subjects, keep) if k),
            self.outcomes,
            self.test[keep],
            self.reference[keep],
        )


@dataclass(frozen=True)
class ScreenReport:
    outcome: str
    removed: tuple
    z: np.ndarray
    threshold: float
    median: float
    mad: float
    keep: np.ndarray

    def to_dict(self):
        return {
            "outcome": self.outcome,
            "removed": list(self.removed),
            "threshold": self.threshold,
            "median": self.median,
            "mad": self.mad,
            "z": self.z.tolist(),
        }


def _parse(reader, source):
    rows = [r for r in reader if any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0].lower() != "subject":
        raise ParseError(f"{source}: first column must be 'subject'")
    outcomes = []
    cols = {}
    for k, name in enumerate(header[1:], start=1):
        stem, _, arm = name.rpartition("_")
        if arm not in ("T", "R") or not stem:
            raise ParseError(f"{source}: column {k + 1} '{name}' is not '<outcome>_T' or '<outcome>_R'")
        if stem not in cols:
            outcomes.append(stem)
            cols[stem] = {}
        if arm in cols[stem]:
            raise ParseError(f"{source}: duplicate column '{name}'")
        cols[stem][arm] = k
    for stem in outcomes:
        missing = {"T", "R"} - cols[stem].keys()
        if missing:
            raise ParseError(f"{source}: missing column '{stem}_{missing.pop()}'")
    body = rows[1:]
    if len(body) < 2:
        raise ParseError(f"{source}: need at least two subjects")
    values = np.empty((len(body), len(header) - 1))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"{source}: row {i} has {len(row)} cells, expected {len(header)}")
        for k in range(1, len(header)):
            cell = row[k].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{source}: row {i}, column '{header[k]}': not a number: {cell!r}") from None
            if not np.isfinite(v) or v <= 0:
                raise ParseError(f"{source}: row {i}, column '{header[k]}': value {cell} is not positive")
            values[i - 2, k - 1] = v
    subjects = tuple(row[0].strip() for row in body)
    if len(set(subjects)) != len(subjects):
        raise ParseError(f"{source}: duplicate subject ids")
    t_idx = [cols[s]["T"] - 1 for s in outcomes]
    r_idx = [cols[s]["R"] - 1 for s in outcomes]
    return PairedDataset(subjects, tuple(outcomes), values[:, t_idx], values[:, r_idx])


def load_csv(path, outcomes=None):
    """Read a paired dataset; ``outcomes`` optionally selects and orders columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        data = _parse(csv.reader(fh), str(path))
    return _select(data, outcomes)


def _select(data, outcomes):
    if outcomes is None:
        return data
    unknown = [o for o in outcomes if o not in data.outcomes]
    if unknown:
        raise ParseError(f"unknown outcomes {unknown}; available {list(data.outcomes)}")
    idx = [data.outcomes.index(o) for o in outcomes]
    return PairedDataset(data.subjects, tuple(outcomes), data.test[:, idx], data.reference[:, idx])


def load_ticlopidine(outcomes=None):
    """Bundled ticlopidine hydrochloride 2x2 crossover fixture (n=24, four outcomes).

    The subject-level values are a reconstruction; see the README.
    """
    text = resources.files("mvtost").joinpath("data/ticlopidine.csv").read_text(encoding="utf-8")
    return _select(_parse(csv.reader(io.StringIO(text)), "ticlopidine.csv"), outcomes)


def mad_screen(values, alpha=0.05, ids=None, outcome=None):
    """Flag points whose robust z-score exceeds the two-sided normal quantile.

    ``z_i = (x_i - median) / (1.4826 * median|x - median|)``; points with
    ``|z_i| > z_{alpha/2}`` are removed.
    """
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size < 3:
        raise DomainError("the screen needs at least three values")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    med = float(np.median(x))
    mad = MAD_CONSISTENCY * float(np.median(np.abs(x - med)))
    if mad == 0:
        raise DegenerateScaleError("median absolute deviation is zero; no screening performed")
    z = (x - med) / mad
    thr = float(std_normal_ppf(1.0 - alpha / 2.0))
    keep = np.abs(z) <= thr
    ids = tuple(range(x.size)) if ids is None else tuple(ids)
    removed = tuple(i for i, k in zip(ids, keep) if not k)
    return ScreenReport(outcome, removed, z, thr, med, mad, keep)


def summarize(data, screen_outcome=None, alpha=0.05):
    """Summary statistics of the log ratios, optionally after screening one outcome.

    Returns ``(SummaryStats, ScreenReport or None)`` with
    ``theta_hat`` the mean log ratio, ``sigma_hat`` the covariance of that
    mean (sample covariance over ``n``) and ``nu = n - 1``.
    """
    report = None
    if screen_outcome is not None:
        if screen_outcome not in data.outcomes:
            raise DomainError(f"unknown outcome {screen_outcome!r}")
        j = data.outcomes.index(screen_outcome)
        report = mad_screen(data.log_differences()[:, j], alpha, data.subjects, screen_outcome)
        data = data.subset(report.keep)
    d = data.log_differences()
    n, m = d.shape
    if n < m + 1:
        raise DomainError(f"{n} subjects cannot support {m} outcomes (need n >= m + 1)")
    cov = np.atleast_2d(np.cov(d, rowvar=False, ddof=1)) / n
    try:
        stats = SummaryStats(d.mean(axis=0), cov, n - 1, data.outcomes)
    except DomainError as err:
        raise DomainError(f"covariance of the log ratios is degenerate: {err}") from None
    return stats, report
