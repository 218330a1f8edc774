"""Applicability maps: distances from one reference domain, min-max scaled.

Output is plot-ready data (CSV or GeoJSON); rendering is left to any GIS tool.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from geospot.distance import PairwiseDistanceTable
from geospot.errors import DataError
from geospot.ingest import DomainDataset

FORMATS = ("csv", "geojson")


class MapWarning(UserWarning):
    pass


@dataclass
class ApplicabilityMap:
    reference_id: str
    entries: list[tuple[str, float, float]]
    config: dict = field(default_factory=dict)


def build_map(table: PairwiseDistanceTable, reference_id: str) -> ApplicabilityMap:
    """Min-max scale the reference row, dropping the reference itself and NaN cells.

    When all raw values coincide (including the single-entry case) every
    entry maps to 0.
    """
    if reference_id not in table.domain_ids:
        raise DataError(f"unknown reference {reference_id!r}")
    row = table.values[table.index(reference_id)]
    kept = [(d, float(v)) for d, v in zip(table.domain_ids, row) if d != reference_id and math.isfinite(v)]
    if not kept:
        raise DataError(f"no valid distances from reference {reference_id!r}")
    lo = min(v for _, v in kept)
    hi = max(v for _, v in kept)
    span = hi - lo
    entries = [(d, v, (v - lo) / span if span > 0 else 0.0) for d, v in kept]
    return ApplicabilityMap(reference_id, entries, dict(table.config))


def domain_centroid(dataset: DomainDataset) -> tuple[float, float]:
    """Spherical mean of the sample coordinates as (lat, lon) degrees."""
    lat, lon = np.radians(dataset.coords[:, 0]), np.radians(dataset.coords[:, 1])
    xyz = np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)]).mean(axis=0)
    r = np.linalg.norm(xyz)
    if r < 1e-12:
        # antipodally balanced samples: fall back to the arithmetic mean
        return float(dataset.coords[:, 0].mean()), float(dataset.coords[:, 1].mean())
    return (
        float(np.degrees(np.arcsin(np.clip(xyz[2] / r, -1, 1)))),
        float(np.degrees(np.arctan2(xyz[1], xyz[0]))),
    )


def load_boundaries(path: str | Path) -> dict[str, dict]:
    """Geometry per domain_id from a GeoJSON FeatureCollection."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise DataError(f"{path}: boundary file must be a GeoJSON FeatureCollection")
    out = {}
    for feat in doc.get("features", []):
        did = (feat.get("properties") or {}).get("domain_id")
        if did is not None and feat.get("geometry") is not None:
            out[str(did)] = feat["geometry"]
    return out


def _round6(x: float) -> float:
    return round(float(x), 6)


def map_to_csv(amap: ApplicabilityMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["domain_id", "raw_distance", "normalized"])
    for d, raw, norm in amap.entries:
        w.writerow([d, repr(raw), repr(norm)])
    return buf.getvalue()


def map_to_geojson(
    amap: ApplicabilityMap,
    centroids: Mapping[str, tuple[float, float]] | None = None,
    boundaries: Mapping[str, dict] | None = None,
) -> str:
    centroids = centroids or {}
    boundaries = boundaries or {}
    features = []
    missing_boundary, missing_point = [], []
    for d, raw, norm in amap.entries:
        if d in boundaries:
            geom = boundaries[d]
        elif d in centroids:
            lat, lon = centroids[d]
            # RFC 7946 positions are [longitude, latitude]
            geom = {"type": "Point", "coordinates": [_round6(lon), _round6(lat)]}
            if boundaries:
                missing_boundary.append(d)
        else:
            geom = None
            missing_point.append(d)
        features.append(
            {
                "type": "Feature",
                "geometry": geom,
                "properties": {"domain_id": d, "raw_distance": raw, "normalized": norm},
            }
        )
    if missing_boundary:
        warnings.warn(f"boundary file lacks {missing_boundary}; using centroid points", MapWarning, stacklevel=2)
    if missing_point:
        warnings.warn(f"no geometry available for {missing_point}", MapWarning, stacklevel=2)
    doc = {"type": "FeatureCollection", "reference_id": amap.reference_id, "features": features}
    return json.dumps(doc, indent=2) + "\n"


def export_map(
    amap: ApplicabilityMap,
    fmt: str,
    path: str | Path | None = None,
    centroids: Mapping[str, tuple[float, float]] | None = None,
    boundaries: Mapping[str, dict] | None = None,
) -> str:
    if fmt == "csv":
        text = map_to_csv(amap)
    elif fmt == "geojson":
        text = map_to_geojson(amap, centroids, boundaries)
    else:
        raise DataError(f"unknown format {fmt!r} (expected one of {FORMATS})")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
