"""Uniform empirical measures over domain samples."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from geospot.errors import DataError
from geospot.ingest import DomainDataset

DEFAULT_N_MAX = 1000


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Point masses in joint feature/location space.

    ``index`` records where each point came from as ``(domain_id, row)``.
    Weights are always uniform.
    """

    coords: np.ndarray
    embeddings: Mapping[str, np.ndarray]
    index: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if len(self.index) == 0:
            raise DataError("empty domain: a measure needs at least one point")
        n = len(self.index)
        if self.coords.shape != (n, 2):
            raise DataError("coordinate table does not match the point index")
        for name, mat in self.embeddings.items():
            if mat.shape[0] != n:
                raise DataError(f"embedding {name!r} does not match the point index")
        object.__setattr__(self, "embeddings", MappingProxyType(dict(self.embeddings)))

    def __len__(self) -> int:
        return len(self.index)

    @property
    def weights(self) -> np.ndarray:
        n = len(self.index)
        return np.full(n, 1.0 / n)

    def take(self, rows: Sequence[int]) -> "EmpiricalMeasure":
        rows = np.asarray(rows, dtype=np.intp)
        return EmpiricalMeasure(
            coords=_ro(self.coords[rows]),
            embeddings={k: _ro(v[rows]) for k, v in self.embeddings.items()},
            index=tuple(self.index[i] for i in rows),
        )


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def to_measure(dataset: DomainDataset) -> EmpiricalMeasure:
    if len(dataset) == 0:
        raise DataError(f"empty domain: {dataset.id!r} has no samples")
    return EmpiricalMeasure(
        coords=dataset.coords,
        embeddings=dict(dataset.embeddings),
        index=tuple((dataset.id, i) for i in range(len(dataset))),
    )


def subsample(measure: EmpiricalMeasure, n_max: int, seed: int) -> EmpiricalMeasure:
    """Seeded uniform sample of ``n_max`` points without replacement.

    Measures with at most ``n_max`` points come back unchanged. Selected rows
    keep their original relative order.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if len(measure) <= n_max:
        return measure
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(len(measure), size=n_max, replace=False))
    return measure.take(rows)


def pool(measures: Sequence[EmpiricalMeasure]) -> EmpiricalMeasure:
    """Union of points, uniform over all pooled samples (not over domains)."""
    if len(measures) == 0:
        raise DataError("cannot pool an empty list of measures")
    if len(measures) == 1:
        return measures[0]
    spaces = set(measures[0].embeddings)
    for m in measures[1:]:
        spaces &= set(m.embeddings)
    return EmpiricalMeasure(
        coords=_ro(np.concatenate([m.coords for m in measures])),
        embeddings={k: _ro(np.concatenate([m.embeddings[k] for m in measures])) for k in sorted(spaces)},
        index=tuple(p for m in measures for p in m.index),
    )


def domain_seed(seed: int, domain_id: str) -> int:
    """Per-domain seed that does not depend on where the domain sits in a list."""
    digest = hashlib.sha256(f"{int(seed)}:{domain_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def domain_measure(dataset: DomainDataset, n_max: int | None, seed: int) -> EmpiricalMeasure:
    m = to_measure(dataset)
    if n_max is None:
        return m
    return subsample(m, n_max, domain_seed(seed, dataset.id))
