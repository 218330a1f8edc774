"""GeoSpOT distances between domains and pairwise distance tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from geospot.cost import GroundCostConfig, build_cost_triplet
from geospot.errors import DataError, GeoSpotError
from geospot.ingest import DomainDataset
from geospot.measures import DEFAULT_N_MAX, EmpiricalMeasure, domain_measure
from geospot.ot import DistanceResult, SinkhornConfig, sinkhorn_divergence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FailedDomain:
    """Placeholder for a domain that could not be loaded."""

    id: str
    error: str


def config_snapshot(gcfg: GroundCostConfig, scfg: SinkhornConfig, n_max: int | None, seed: int) -> dict:
    return {
        "ground_cost": gcfg.to_dict(),
        "sinkhorn": scfg.to_dict(),
        "subsample": {"n_max": n_max, "seed": int(seed), "method": "uniform_without_replacement"},
    }


def measure_distance(
    src: EmpiricalMeasure, tgt: EmpiricalMeasure, gcfg: GroundCostConfig, scfg: SinkhornConfig
) -> DistanceResult:
    return sinkhorn_divergence(src, tgt, partial(build_cost_triplet, config=gcfg), scfg)


def geospot_distance(
    src: DomainDataset,
    tgt: DomainDataset,
    gcfg: GroundCostConfig,
    scfg: SinkhornConfig | None = None,
    n_max: int | None = DEFAULT_N_MAX,
    seed: int = 0,
) -> DistanceResult:
    """Sinkhorn divergence between two domains under the hybrid ground cost.

    Each domain is subsampled with a seed derived from ``seed`` and its id, so
    the same domain always yields the same subsample.
    """
    scfg = scfg or SinkhornConfig()
    return measure_distance(domain_measure(src, n_max, seed), domain_measure(tgt, n_max, seed), gcfg, scfg)


@dataclass
class PairwiseDistanceTable:
    domain_ids: list[str]
    values: np.ndarray
    config: dict = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def index(self, domain_id: str) -> int:
        try:
            return self.domain_ids.index(domain_id)
        except ValueError:
            raise DataError(f"unknown domain {domain_id!r}") from None

    def get(self, src: str, tgt: str) -> float:
        return float(self.values[self.index(src), self.index(tgt)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["domain_id", *self.domain_ids])
        for did, row in zip(self.domain_ids, self.values):
            w.writerow([did, *(_fmt(v) for v in row)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "domain_ids": self.domain_ids,
            "values": [[None if math.isnan(v) else float(v) for v in row] for row in self.values],
            "config": self.config,
            "errors": self.errors,
            "diagnostics": self.diagnostics,
        }
        return json.dumps(doc, indent=2) + "\n"

    def write(self, stem: str | Path) -> tuple[Path, Path]:
        csv_path, json_path = Path(f"{stem}.csv"), Path(f"{stem}.json")
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        json_path.write_text(self.to_json(), encoding="utf-8")
        return csv_path, json_path

    @classmethod
    def from_csv(cls, text: str) -> "PairwiseDistanceTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise DataError("empty distance table")
        ids = rows[0][1:]
        if [r[0] for r in rows[1:]] != ids:
            raise DataError("distance table row and column ids differ")
        values = np.array([[_parse(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
        if values.shape != (len(ids), len(ids)):
            raise DataError("distance table is not square")
        return cls(ids, values)

    @classmethod
    def from_json(cls, text: str) -> "PairwiseDistanceTable":
        doc = json.loads(text)
        values = np.array(
            [[np.nan if v is None else v for v in row] for row in doc["values"]], dtype=np.float64
        )
        return cls(list(doc["domain_ids"]), values, doc.get("config", {}), doc.get("errors", {}),
                   doc.get("diagnostics", {}))

    @classmethod
    def read(cls, path: str | Path) -> "PairwiseDistanceTable":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"missing file: {path}")
        text = path.read_text(encoding="utf-8")
        return cls.from_json(text) if path.suffix == ".json" else cls.from_csv(text)


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def _parse(s: str) -> float:
    s = s.strip()
    return math.nan if s == "" or s.lower() == "nan" else float(s)


def pairwise_matrix(
    domains: Sequence[DomainDataset | FailedDomain],
    gcfg: GroundCostConfig,
    scfg: SinkhornConfig | None = None,
    n_max: int | None = DEFAULT_N_MAX,
    seed: int = 0,
    jobs: int = 1,
) -> PairwiseDistanceTable:
    """Symmetric table of GeoSpOT distances over all domain pairs.

    Every domain is subsampled once and reused for all its pairs. Failures
    (unloadable domains or failed solves) become NaN cells with an entry in
    ``errors``; they never abort the build.
    """
    scfg = scfg or SinkhornConfig()
    if len(domains) < 2:
        raise DataError("pairwise_matrix needs at least two domains")
    ids = [d.id for d in domains]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate domain id")
    n = len(ids)
    values = np.full((n, n), np.nan)
    errors: dict[str, str] = {}
    measures: dict[int, EmpiricalMeasure] = {}
    for k, d in enumerate(domains):
        if isinstance(d, FailedDomain):
            errors[d.id] = d.error
            continue
        try:
            measures[k] = domain_measure(d, n_max, seed)
        except GeoSpotError as e:
            errors[d.id] = str(e)
    for k in measures:
        values[k, k] = 0.0

    pairs = [(i, j) for i, j in combinations(range(n), 2) if i in measures and j in measures]

    def job(pair):
        i, j = pair
        try:
            return measure_distance(measures[i], measures[j], gcfg, scfg), None
        except (GeoSpotError, ValueError, ArithmeticError) as e:
            return None, f"{type(e).__name__}: {e}"

    if jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(job, pairs))
    else:
        results = [job(p) for p in pairs]

    nonconverged = 0
    max_iter = 0
    for (i, j), (res, err) in zip(pairs, results):
        if res is None:
            errors[f"{ids[i]}|{ids[j]}"] = err
            log.warning("pair %s/%s failed: %s", ids[i], ids[j], err)
            continue
        values[i, j] = values[j, i] = res.value
        nonconverged += not res.converged
        max_iter = max(max_iter, *(d["iterations"] for d in res.diagnostics.values()))

    diagnostics = {
        "n_domains": n,
        "n_pairs": len(pairs),
        "n_failed": len(errors),
        "n_nonconverged": nonconverged,
        "max_iterations_used": max_iter,
        "subsample_sizes": {ids[k]: len(m) for k, m in sorted(measures.items())},
    }
    return PairwiseDistanceTable(ids, values, config_snapshot(gcfg, scfg, n_max, seed), errors, diagnostics)
