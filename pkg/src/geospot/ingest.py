"""Loading and writing domain datasets.

A manifest (JSON) lists the domains and the embedding spaces they carry.
Each domain has a coordinate CSV (header ``lat,lon``) and one matrix file per
embedding space. Matrix files are either headerless CSV (``.csv``) or the
binary ``GSPT`` format: magic bytes, two little-endian uint64 (rows, cols),
then rows*cols little-endian float64 in row-major order.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from geospot.errors import DataError

MAGIC = b"GSPT"
_HEADER = struct.Struct("<QQ")
SPACE_KINDS = ("feature", "location")


@dataclass(frozen=True)
class EmbeddingSpace:
    name: str
    dimension: int
    kind: str


@dataclass(frozen=True)
class DomainEntry:
    id: str
    sample_file: Path
    sample_count: int
    embeddings: Mapping[str, Path]


@dataclass(frozen=True)
class DomainManifest:
    manifest_version: int
    embedding_spaces: tuple[EmbeddingSpace, ...]
    domains: tuple[DomainEntry, ...]
    root: Path = Path(".")

    @property
    def domain_ids(self) -> list[str]:
        return [d.id for d in self.domains]

    def space(self, name: str) -> EmbeddingSpace:
        for s in self.embedding_spaces:
            if s.name == name:
                return s
        raise DataError(f"unknown embedding space {name!r}")

    def entry(self, domain_id: str) -> DomainEntry:
        for d in self.domains:
            if d.id == domain_id:
                return d
        raise DataError(f"unknown domain {domain_id!r}")


@dataclass(frozen=True)
class DomainDataset:
    """Coordinates (degrees) plus row-aligned embedding matrices for one domain."""

    id: str
    coords: np.ndarray
    embeddings: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        coords = _frozen(np.asarray(self.coords, dtype=np.float64).reshape(-1, 2))
        embeddings = {
            k: _frozen(np.asarray(v, dtype=np.float64)) for k, v in self.embeddings.items()
        }
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "embeddings", MappingProxyType(embeddings))
        validate_dataset(self)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def n_samples(self) -> int:
        return self.coords.shape[0]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


def validate_dataset(ds: DomainDataset) -> None:
    if not ds.id:
        raise DataError("domain id must be a non-empty string")
    lat, lon = ds.coords[:, 0], ds.coords[:, 1]
    if np.isnan(ds.coords).any():
        raise DataError(f"{ds.id}: NaN coordinate")
    if (np.abs(lat) > 90).any() or (np.abs(lon) > 180).any():
        bad = int(np.flatnonzero((np.abs(lat) > 90) | (np.abs(lon) > 180))[0])
        raise DataError(f"{ds.id}: coordinate out of range at row {bad}")
    n = ds.coords.shape[0]
    for name, mat in ds.embeddings.items():
        if mat.ndim != 2:
            raise DataError(f"{ds.id}/{name}: embedding must be a 2-D matrix")
        if mat.shape[0] != n:
            raise DataError(
                f"{ds.id}/{name}: row-count mismatch ({mat.shape[0]} embedding rows, {n} coordinates)"
            )
        if not np.isfinite(mat).all():
            raise DataError(f"{ds.id}/{name}: non-finite embedding value")
        zero = ~mat.any(axis=1)
        if zero.any():
            raise DataError(f"{ds.id}/{name}: zero embedding row at row {int(np.flatnonzero(zero)[0])}")


# ---------------------------------------------------------------------------
# matrix files


def read_matrix_header(path: Path) -> tuple[int | None, int]:
    """(rows, cols) of a matrix file without loading it. rows is None for CSV."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="", encoding="utf-8") as f:
            first = next(csv.reader(f), None)
        if first is None:
            return 0, 0
        return None, len(first)
    with open(path, "rb") as f:
        head = f.read(len(MAGIC) + _HEADER.size)
    if len(head) < len(MAGIC) + _HEADER.size or head[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a GSPT matrix file")
    rows, cols = _HEADER.unpack(head[len(MAGIC):])
    return rows, cols


def read_matrix(path: Path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".csv":
        rows = []
        with open(path, newline="", encoding="utf-8") as f:
            for lineno, row in enumerate(csv.reader(f), start=1):
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: malformed row") from None
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise DataError(f"{path}: malformed row (inconsistent column count)")
        return np.array(rows, dtype=np.float64).reshape(len(rows), widths.pop() if widths else 0)
    rows, cols = read_matrix_header(path)
    data = path.read_bytes()[len(MAGIC) + _HEADER.size:]
    if len(data) != rows * cols * 8:
        raise DataError(f"{path}: truncated matrix ({len(data)} bytes for {rows}x{cols})")
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols).astype(np.float64)


def write_matrix(path: Path, mat: np.ndarray) -> None:
    path = Path(path)
    mat = np.asarray(mat, dtype=np.float64)
    if path.suffix == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            for row in mat:
                w.writerow([repr(float(v)) for v in row])
        return
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(*mat.shape))
        f.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def read_coords(path: Path) -> np.ndarray:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["lat", "lon"]:
            raise DataError(f"{path}: expected header 'lat,lon'")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: malformed row (expected 2 columns, got {len(row)})")
            try:
                lat, lon = float(row[0]), float(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed row") from None
            if math.isnan(lat) or math.isnan(lon):
                raise DataError(f"{path}:{lineno}: NaN coordinate")
            if abs(lat) > 90 or abs(lon) > 180:
                raise DataError(f"{path}:{lineno}: coordinate out of range ({lat}, {lon})")
            out.append((lat, lon))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def write_coords(path: Path, coords: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["lat", "lon"])
        for lat, lon in np.asarray(coords, dtype=np.float64):
            w.writerow([repr(float(lat)), repr(float(lon))])


# ---------------------------------------------------------------------------
# manifests


def load_manifest(path: str | Path) -> DomainManifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed manifest ({e})") from None
    root = path.parent
    for key in ("manifest_version", "embedding_spaces", "domains"):
        if key not in doc:
            raise DataError(f"{path}: manifest lacks {key!r}")

    spaces = []
    for s in doc["embedding_spaces"]:
        kind = s.get("kind")
        if kind not in SPACE_KINDS:
            raise DataError(f"unknown embedding-space kind {kind!r} for {s.get('name')!r}")
        dim = s.get("dimension")
        if not isinstance(dim, int) or dim <= 0:
            raise DataError(f"embedding space {s.get('name')!r} needs a positive integer dimension")
        spaces.append(EmbeddingSpace(str(s["name"]), dim, kind))
    by_name = {s.name: s for s in spaces}
    if len(by_name) != len(spaces):
        raise DataError("duplicate embedding-space name")

    domains = []
    seen = set()
    for d in doc["domains"]:
        did = d.get("id")
        if not isinstance(did, str) or not did:
            raise DataError("domain id must be a non-empty string")
        if did in seen:
            raise DataError(f"duplicate domain id {did!r}")
        seen.add(did)
        count = d.get("sample_count", 0)
        if not isinstance(count, int) or count < 0:
            raise DataError(f"{did}: sample_count must be a nonnegative integer")
        sample_file = root / d["sample_file"]
        if not sample_file.is_file():
            raise DataError(f"missing file: {sample_file}")
        emb = {}
        for name, rel in sorted(d.get("embeddings", {}).items()):
            if name not in by_name:
                raise DataError(f"{did}: embedding space {name!r} is not declared")
            fpath = root / rel
            if not fpath.is_file():
                raise DataError(f"missing file: {fpath}")
            rows, cols = read_matrix_header(fpath)
            if cols != by_name[name].dimension:
                raise DataError(
                    f"{did}/{name}: dimension mismatch (declared {by_name[name].dimension}, file has {cols})"
                )
            if rows is not None and rows != count:
                raise DataError(f"{did}/{name}: row-count mismatch ({rows} rows, sample_count {count})")
            emb[name] = fpath
        domains.append(DomainEntry(did, sample_file, count, MappingProxyType(emb)))

    return DomainManifest(int(doc["manifest_version"]), tuple(spaces), tuple(domains), root)


def load_domain(manifest: DomainManifest, domain_id: str) -> DomainDataset:
    entry = manifest.entry(domain_id)
    coords = read_coords(entry.sample_file)
    if coords.shape[0] != entry.sample_count:
        raise DataError(
            f"{domain_id}: row-count mismatch ({coords.shape[0]} coordinates, sample_count {entry.sample_count})"
        )
    embeddings = {}
    for name, fpath in entry.embeddings.items():
        mat = read_matrix(fpath)
        if mat.shape[0] and mat.shape[1] != manifest.space(name).dimension:
            raise DataError(f"{domain_id}/{name}: dimension mismatch")
        embeddings[name] = mat
    return DomainDataset(domain_id, coords, embeddings)


def write_manifest(
    directory: str | Path,
    datasets: list[DomainDataset],
    spaces: Mapping[str, str],
    binary: bool = False,
) -> Path:
    """Write datasets plus a manifest under ``directory``; returns the manifest path.

    ``spaces`` maps embedding-space name to kind.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dims: dict[str, int] = {}
    entries = []
    ext = ".gspt" if binary else ".csv"
    for ds in datasets:
        sub = directory / ds.id
        sub.mkdir(exist_ok=True)
        write_coords(sub / "coords.csv", ds.coords)
        emb = {}
        for name, mat in sorted(ds.embeddings.items()):
            dims.setdefault(name, mat.shape[1])
            if dims[name] != mat.shape[1]:
                raise DataError(f"{ds.id}/{name}: dimension mismatch")
            write_matrix(sub / f"{name}{ext}", mat)
            emb[name] = f"{ds.id}/{name}{ext}"
        entries.append(
            {"id": ds.id, "sample_file": f"{ds.id}/coords.csv", "sample_count": len(ds), "embeddings": emb}
        )
    doc = {
        "manifest_version": 1,
        "embedding_spaces": [
            {"name": n, "dimension": dims[n], "kind": spaces[n]} for n in sorted(dims)
        ],
        "domains": entries,
    }
    out = directory / "manifest.json"
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return out
