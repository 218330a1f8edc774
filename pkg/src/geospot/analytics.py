"""How well do distances explain transfer difficulty?

Transfer delta between a source-trained model and the in-domain model,
Spearman rank correlation and an OLS line of delta against distance.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from geospot.distance import PairwiseDistanceTable
from geospot.errors import DataError


@dataclass
class AccuracyTable:
    """acc[s, t] is the accuracy on domain t of the model trained on domain s; NaN if missing."""

    domain_ids: list[str]
    acc: np.ndarray

    def __post_init__(self):
        self.acc = np.asarray(self.acc, dtype=np.float64)
        n = len(self.domain_ids)
        if self.acc.shape != (n, n):
            raise DataError(f"accuracy table must be {n}x{n}, got {self.acc.shape}")
        finite = self.acc[~np.isnan(self.acc)]
        if ((finite < 0) | (finite > 1)).any():
            raise DataError("accuracies must lie in [0, 1]")

    def get(self, src: str, tgt: str) -> float:
        try:
            return float(self.acc[self.domain_ids.index(src), self.domain_ids.index(tgt)])
        except ValueError:
            raise DataError(f"unknown domain in pair ({src!r}, {tgt!r})") from None

    @classmethod
    def from_csv(cls, text: str) -> "AccuracyTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise DataError("empty accuracy table")
        ids = [c.strip() for c in rows[0][1:]]
        if [r[0].strip() for r in rows[1:]] != ids:
            raise DataError("accuracy table row and column ids differ")
        vals = []
        for r in rows[1:]:
            if len(r) != len(ids) + 1:
                raise DataError("malformed row in accuracy table")
            vals.append([math.nan if v.strip() == "" else float(v) for v in r[1:]])
        return cls(ids, np.array(vals, dtype=np.float64).reshape(len(ids), len(ids)))

    @classmethod
    def read(cls, path: str | Path) -> "AccuracyTable":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"missing file: {path}")
        return cls.from_csv(path.read_text(encoding="utf-8"))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source\\target", *self.domain_ids])
        for did, row in zip(self.domain_ids, self.acc):
            w.writerow([did, *("" if math.isnan(v) else repr(float(v)) for v in row)])
        return buf.getvalue()


def relative_change(acc_transfer: float, acc_in_domain: float) -> float:
    """Percent change of transferred accuracy relative to in-domain accuracy."""
    if math.isnan(acc_transfer) or math.isnan(acc_in_domain):
        raise DataError("missing entry")
    if acc_in_domain == 0:
        raise DataError("degenerate in-domain accuracy (0)")
    return (acc_transfer - acc_in_domain) / acc_in_domain * 100.0


def transfer_delta(acc: AccuracyTable, src: str, tgt: str) -> float:
    return relative_change(acc.get(src, tgt), acc.get(tgt, tgt))


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise DataError("need at least two points")
    return x, y


def spearman(x, y) -> float:
    """Spearman's rho: Pearson correlation of average (tie-aware) ranks."""
    x, y = _check_pair(x, y)
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise DataError("constant vector: rank correlation undefined")
    # one sqrt of the product: exact +-1 for perfectly (anti)monotone ranks
    return float(np.clip(float(rx @ ry) / math.sqrt(sxx * syy), -1.0, 1.0))


def ols_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line y ~ slope * x + intercept and its R^2.

    With an intercept, R^2 equals the squared Pearson correlation.
    """
    x, y = _check_pair(x, y)
    if np.all(x == x[0]):
        raise DataError("degenerate variance: x is constant")
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        raise DataError("degenerate variance: y is constant")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - float(resid @ resid) / ss_tot
    return float(slope), float(intercept), r2


@dataclass
class CorrelationReport:
    n_pairs: int
    spearman_rho: float
    r_squared: float
    slope: float
    intercept: float
    pairs: list[tuple[str, str, float, float]] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "n_pairs": self.n_pairs,
            "spearman_rho": self.spearman_rho,
            "r_squared": self.r_squared,
            "slope": self.slope,
            "intercept": self.intercept,
            "pairs": [{"src": s, "tgt": t, "distance": d, "delta": dl} for s, t, d, dl in self.pairs],
        }
        return json.dumps(doc, indent=2) + "\n"

    def pairs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src", "tgt", "distance", "delta"])
        for s, t, d, dl in self.pairs:
            w.writerow([s, t, repr(d), repr(dl)])
        return buf.getvalue()


def collect_pairs(table: PairwiseDistanceTable, acc: AccuracyTable) -> list[tuple[str, str, float, float]]:
    """All ordered (src != tgt) pairs with a finite distance and a computable delta."""
    shared = [d for d in table.domain_ids if d in acc.domain_ids]
    pairs = []
    for s in shared:
        for t in shared:
            if s == t:
                continue
            dist = table.get(s, t)
            if not math.isfinite(dist):
                continue
            try:
                delta = transfer_delta(acc, s, t)
            except DataError:
                continue
            pairs.append((s, t, dist, delta))
    return pairs


def correlate(table: PairwiseDistanceTable, acc: AccuracyTable) -> CorrelationReport:
    pairs = collect_pairs(table, acc)
    if not pairs:
        raise DataError("no overlapping pairs between distance and accuracy tables")
    if len(pairs) < 2:
        raise DataError(f"fewer than 2 valid pairs ({len(pairs)})")
    x = np.array([p[2] for p in pairs])
    y = np.array([p[3] for p in pairs])
    rho = spearman(x, y)
    slope, intercept, r2 = ols_fit(x, y)
    return CorrelationReport(len(pairs), rho, r2, slope, intercept, pairs)
