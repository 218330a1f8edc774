"""Greedy source-domain selection and budgeted sampling from the chosen pool."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from geospot.cost import GroundCostConfig
from geospot.distance import config_snapshot, measure_distance
from geospot.errors import ConfigError, DataError
from geospot.ingest import DomainDataset
from geospot.measures import DEFAULT_N_MAX, domain_measure, domain_seed, pool
from geospot.ot import SinkhornConfig


@dataclass
class SelectionTrace:
    target_id: str
    chosen: list[tuple[str, float]]
    candidate_scores: list[dict[str, float]]
    config: dict = field(default_factory=dict)

    @property
    def chosen_ids(self) -> list[str]:
        return [c for c, _ in self.chosen]

    def to_dict(self) -> dict:
        return {
            "target_id": self.target_id,
            "chosen": [{"domain_id": d, "combined_distance": s} for d, s in self.chosen],
            "candidate_scores": self.candidate_scores,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionTrace":
        return cls(
            d["target_id"],
            [(c["domain_id"], c["combined_distance"]) for c in d["chosen"]],
            d["candidate_scores"],
            d.get("config", {}),
        )


def greedy_select(
    sources: Sequence[DomainDataset],
    target: DomainDataset,
    K: int,
    gcfg: GroundCostConfig,
    scfg: SinkhornConfig | None = None,
    n_max: int | None = DEFAULT_N_MAX,
    seed: int = 0,
    jobs: int = 1,
) -> SelectionTrace:
    """Pick K sources one at a time, each minimizing the pooled distance to the target.

    At every step each remaining candidate is pooled with the sources already
    chosen and scored against the target. Ties go to the candidate listed
    first in ``sources``. Each domain is subsampled once for the whole run.
    """
    scfg = scfg or SinkhornConfig()
    ids = [s.id for s in sources]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate source domain id")
    if not 1 <= K <= len(sources):
        raise ConfigError(f"K out of range: K={K} with {len(sources)} sources")
    if target.id in ids:
        raise ConfigError(f"target id {target.id!r} collides with a source id")

    target_m = domain_measure(target, n_max, seed)
    cached = {s.id: domain_measure(s, n_max, seed) for s in sources}
    chosen: list[tuple[str, float]] = []
    steps: list[dict[str, float]] = []
    remaining = list(ids)

    def score(prefix, cid):
        res = measure_distance(pool(prefix + [cached[cid]]), target_m, gcfg, scfg)
        return res.value

    for _ in range(K):
        prefix = [cached[c] for c, _ in chosen]
        if jobs > 1 and len(remaining) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                vals = list(ex.map(lambda c: score(prefix, c), remaining))
        else:
            vals = [score(prefix, c) for c in remaining]
        scores = dict(zip(remaining, vals))
        # min() keeps the first of equal keys: ties go to input order
        best = min(remaining, key=lambda c: math.inf if math.isnan(scores[c]) else scores[c])
        steps.append(scores)
        chosen.append((best, scores[best]))
        remaining.remove(best)

    return SelectionTrace(target.id, chosen, steps, config_snapshot(gcfg, scfg, n_max, seed))


def budget_counts(budget: int, k: int) -> list[int]:
    """Equal split of ``budget`` over k domains; the first ``budget % k`` get one extra."""
    base, extra = divmod(budget, k)
    return [base + (i < extra) for i in range(k)]


def budget_sample(
    trace: SelectionTrace,
    sources: Sequence[DomainDataset],
    budget: int,
    seed: int = 0,
) -> list[tuple[str, int]]:
    """Uniform samples without replacement from the chosen domains, ``budget`` in total.

    Returns ``(domain_id, row_index)`` pairs, grouped by domain in greedy order.
    """
    if budget < 0:
        raise ConfigError("budget must be nonnegative")
    by_id = {s.id: s for s in sources}
    chosen = trace.chosen_ids
    for c in chosen:
        if c not in by_id:
            raise DataError(f"unknown domain {c!r}")
    counts = budget_counts(budget, len(chosen))
    short = {c: n - len(by_id[c]) for c, n in zip(chosen, counts) if n > len(by_id[c])}
    if short:
        detail = ", ".join(f"{c} short by {s}" for c, s in short.items())
        raise DataError(f"insufficient data for budget {budget}: {detail}")
    out = []
    for c, n in zip(chosen, counts):
        rng = np.random.default_rng(domain_seed(seed, c))
        rows = np.sort(rng.choice(len(by_id[c]), size=n, replace=False))
        out.extend((c, int(r)) for r in rows)
    return out


def samples_to_csv(samples: list[tuple[str, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["domain_id", "row_index"])
    w.writerows(samples)
    return buf.getvalue()
