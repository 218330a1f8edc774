"""Synthetic domains with planted structure, for tests and demos.

Feature embeddings drift along a 1-D latent: the mean direction rotates in a
fixed plane by ``drift`` radians per latent unit. Location embeddings are
random Fourier features of the 3-D unit vector of each coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from geospot.analytics import AccuracyTable
from geospot.ingest import DomainDataset, write_manifest

TOY_CENTERS = {
    "US": (39.8, -98.6),
    "CA": (56.1, -106.3),
    "BR": (-14.2, -51.9),
    "FR": (46.2, 2.2),
    "CN": (35.9, 104.2),
}
TOY_SPACES = {"resnet50": "feature", "geoclip": "location"}


@dataclass
class SyntheticWorld:
    domains: list[DomainDataset]
    latents: np.ndarray

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.domains]


def location_embedding(coords: np.ndarray, dim: int = 8, seed: int = 12345, scale: float = 2.0) -> np.ndarray:
    lat, lon = np.radians(coords[:, 0]), np.radians(coords[:, 1])
    xyz = np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])
    W = np.random.default_rng(seed).normal(scale=scale, size=(3, dim // 2))
    proj = xyz @ W
    # constant offset keeps every row away from the zero vector
    return np.column_stack([np.cos(proj), np.sin(proj)]) + 1.0


def _features(rng, n, dim, angle, spread, noise):
    mean = np.zeros(dim)
    mean[0], mean[1] = np.cos(angle), np.sin(angle)
    return spread * mean + noise * rng.normal(size=(n, dim))


def drift_world(
    n_domains: int = 8,
    n_samples: int = 60,
    dim: int = 8,
    drift: float = 0.3,
    noise: float = 0.35,
    centers: Sequence[tuple[float, float]] | None = None,
    ids: Sequence[str] | None = None,
    seed: int = 0,
) -> SyntheticWorld:
    rng = np.random.default_rng(seed)
    latents = np.arange(n_domains, dtype=np.float64)
    ids = list(ids) if ids is not None else [f"D{k}" for k in range(n_domains)]
    if centers is None:
        centers = [(-50.0 + 100.0 * k / max(n_domains - 1, 1), -150.0 + 300.0 * k / max(n_domains - 1, 1))
                   for k in range(n_domains)]
    domains = []
    for k in range(n_domains):
        clat, clon = centers[k]
        lat = np.clip(clat + rng.normal(scale=4.0, size=n_samples), -89.0, 89.0)
        lon = (clon + rng.normal(scale=6.0, size=n_samples) + 180.0) % 360.0 - 180.0
        coords = np.column_stack([lat, lon])
        feats = _features(rng, n_samples, dim, drift * latents[k], 1.0, noise)
        domains.append(DomainDataset(ids[k], coords, {"resnet50": feats, "geoclip": location_embedding(coords)}))
    return SyntheticWorld(domains, latents)


def planted_accuracies(
    latents: np.ndarray,
    ids: Sequence[str],
    slope: float = 8.0,
    noise_frac: float = 0.05,
    in_domain: float = 0.8,
    seed: int = 0,
) -> AccuracyTable:
    """Accuracies whose transfer delta is ``-slope * |latent gap|`` plus noise.

    Noise sd is ``noise_frac`` times the range of the noiseless deltas.
    """
    rng = np.random.default_rng(seed)
    gaps = np.abs(latents[:, None] - latents[None, :])
    delta = -slope * gaps
    off = ~np.eye(len(ids), dtype=bool)
    sd = noise_frac * (delta[off].max() - delta[off].min())
    delta = delta + np.where(off, rng.normal(scale=sd, size=delta.shape), 0.0)
    acc = np.clip(in_domain * (1.0 + delta / 100.0), 0.0, 1.0)
    return AccuracyTable(list(ids), acc)


def write_toy_dataset(directory: str | Path, n_samples: int = 120, seed: int = 7, binary: bool = False) -> Path:
    """Five-country toy manifest plus a planted accuracy table; returns the manifest path."""
    directory = Path(directory)
    ids = list(TOY_CENTERS)
    world = drift_world(len(ids), n_samples, dim=16, centers=list(TOY_CENTERS.values()), ids=ids, seed=seed)
    manifest = write_manifest(directory, world.domains, TOY_SPACES, binary=binary)
    acc = planted_accuracies(world.latents, ids, seed=seed)
    (directory / "accuracies.csv").write_text(acc.to_csv(), encoding="utf-8")
    return manifest
