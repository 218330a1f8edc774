"""Pointwise ground distances and cost matrices.

The ground cost between two samples is

    lam * d_feat(x, x')**p + (1 - lam) * d_loc(l, l')**p

with ``d_feat`` the cosine distance between feature embeddings and
``d_loc`` either the great-circle angle between coordinates or the cosine
distance between location embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, NamedTuple

import numpy as np

from geospot.errors import ConfigError, DataError
from geospot.measures import EmpiricalMeasure

NORMALIZATIONS = ("per_component_max", "joint_max", "none")
LOCATION_MODES = ("none", "arc", "embedding")


@dataclass(frozen=True)
class GroundCostConfig:
    feature_space: str | None = None
    location_mode: str = "none"
    location_space: str | None = None
    lam: float = 1.0
    p: float = 2.0
    normalization: str = "per_component_max"

    def __post_init__(self):
        if self.location_mode not in LOCATION_MODES:
            raise ConfigError(f"unknown location mode {self.location_mode!r}")
        if (self.location_mode == "embedding") != (self.location_space is not None):
            raise ConfigError("location_space is required exactly when location_mode is 'embedding'")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.p >= 1.0:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if not self.has_feature and not self.has_location:
            raise ConfigError("no modality: set a feature space and/or a location mode")
        if self.lam > 0 and not self.has_feature:
            raise ConfigError(f"lambda={self.lam} weights features but no feature space is set")
        if self.lam < 1 and not self.has_location:
            raise ConfigError(f"lambda={self.lam} weights location but location mode is 'none'")

    @property
    def has_feature(self) -> bool:
        return self.feature_space is not None

    @property
    def has_location(self) -> bool:
        return self.location_mode != "none"

    def to_dict(self) -> dict:
        return {
            "feature_space": self.feature_space,
            "location_mode": self.location_mode,
            "location_space": self.location_space,
            "lambda": self.lam,
            "p": self.p,
            "normalization": self.normalization,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroundCostConfig":
        return cls(
            feature_space=d.get("feature_space"),
            location_mode=d.get("location_mode", "none"),
            location_space=d.get("location_space"),
            lam=float(d.get("lambda", 1.0)),
            p=float(d.get("p", 2.0)),
            normalization=d.get("normalization", "per_component_max"),
        )


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    config: GroundCostConfig
    normalizer: float | None = None
    component_normalizers: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "component_normalizers", MappingProxyType(dict(self.component_normalizers)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def dump(self, path: str | Path) -> None:
        from geospot.ingest import write_matrix

        write_matrix(Path(path), self.values)


class CostTriplet(NamedTuple):
    cross: CostMatrix
    src_self: CostMatrix
    tgt_self: CostMatrix


# ---------------------------------------------------------------------------
# pointwise distances


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DataError("cosine distance is undefined for a zero vector")
    return float(np.clip(1.0 - np.dot(u / nu, v / nv), 0.0, 2.0))


def cosine_distance_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise DataError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    nx = np.linalg.norm(X, axis=1, keepdims=True)
    ny = np.linalg.norm(Y, axis=1, keepdims=True)
    if (nx == 0).any() or (ny == 0).any():
        raise DataError("cosine distance is undefined for a zero vector")
    D = 1.0 - (X / nx) @ (Y / ny).T
    return np.clip(D, 0.0, 2.0)


def _central_angle(lat1, lon1, lat2, lon2):
    # atan2 form: well conditioned at 0 and at pi, unlike haversine's arcsin
    dlon = lon2 - lon1
    c1, s1 = np.cos(lat1), np.sin(lat1)
    c2, s2 = np.cos(lat2), np.sin(lat2)
    cd, sd = np.cos(dlon), np.sin(dlon)
    y = np.hypot(c2 * sd, c1 * s2 - s1 * c2 * cd)
    x = s1 * s2 + c1 * c2 * cd
    return np.arctan2(y, x)


def arc_distance(a, b) -> float:
    """Great-circle angle in radians between two (lat, lon) points in degrees."""
    lat1, lon1 = np.radians(np.asarray(a, dtype=np.float64))
    lat2, lon2 = np.radians(np.asarray(b, dtype=np.float64))
    return float(_central_angle(lat1, lon1, lat2, lon2))


def arc_distance_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.radians(np.asarray(A, dtype=np.float64))
    B = np.radians(np.asarray(B, dtype=np.float64))
    return _central_angle(A[:, :1], A[:, 1:], B[:, 0][None, :], B[:, 1][None, :])


def combine(d_x, d_l, lam: float, p: float):
    """lam * d_x**p + (1 - lam) * d_l**p; works elementwise on arrays."""
    return lam * np.power(d_x, p) + (1.0 - lam) * np.power(d_l, p)


# ---------------------------------------------------------------------------
# matrices


def _space(m: EmpiricalMeasure, name: str) -> np.ndarray:
    try:
        return m.embeddings[name]
    except KeyError:
        raise DataError(f"measure lacks embedding space {name!r}") from None


def component_matrices(src: EmpiricalMeasure, tgt: EmpiricalMeasure, config: GroundCostConfig) -> dict[str, np.ndarray]:
    """Raw per-modality distance matrices; a modality with zero weight is skipped."""
    out = {}
    if config.has_feature and config.lam > 0:
        out["feature"] = cosine_distance_matrix(_space(src, config.feature_space), _space(tgt, config.feature_space))
    if config.has_location and config.lam < 1:
        if config.location_mode == "arc":
            out["location"] = arc_distance_matrix(src.coords, tgt.coords)
        else:
            out["location"] = cosine_distance_matrix(
                _space(src, config.location_space), _space(tgt, config.location_space)
            )
    return out


def _combined(comps: Mapping[str, np.ndarray], config: GroundCostConfig, scales: Mapping[str, float]) -> np.ndarray:
    shape = next(iter(comps.values())).shape
    zero = np.zeros(shape)
    d_x = comps.get("feature", zero)
    d_l = comps.get("location", zero)
    if scales:
        if scales.get("feature"):
            d_x = d_x / scales["feature"]
        if scales.get("location"):
            d_l = d_l / scales["location"]
    return combine(d_x, d_l, config.lam, config.p)


def _assemble(comps, config, comp_scales=None, joint_scale=None) -> CostMatrix:
    comp_scales = comp_scales or {}
    values = _combined(comps, config, comp_scales)
    if config.normalization == "joint_max":
        if joint_scale is None:
            joint_scale = float(values.max()) if values.size else 0.0
        if joint_scale > 0:
            values = values / joint_scale
        else:
            joint_scale = None
    return CostMatrix(values, config, normalizer=joint_scale, component_normalizers=comp_scales)


def _component_scales(comp_list, config) -> dict[str, float]:
    if config.normalization != "per_component_max":
        return {}
    scales = {}
    for key in comp_list[0]:
        m = max(float(c[key].max()) if c[key].size else 0.0 for c in comp_list)
        if m > 0:
            scales[key] = m
    return scales


def build_cost_matrix(src: EmpiricalMeasure, tgt: EmpiricalMeasure, config: GroundCostConfig) -> CostMatrix:
    """Cost matrix for one pair, normalized by its own maxima."""
    comps = component_matrices(src, tgt, config)
    return _assemble(comps, config, _component_scales([comps], config))


def build_cost_triplet(src: EmpiricalMeasure, tgt: EmpiricalMeasure, config: GroundCostConfig) -> CostTriplet:
    """Cross and both self cost matrices under one shared normalizer.

    The normalizer is the maximum over all three matrices, so the self terms
    and the cross term live on the same scale.
    """
    parts = [
        component_matrices(src, tgt, config),
        component_matrices(src, src, config),
        component_matrices(tgt, tgt, config),
    ]
    scales = _component_scales(parts, config)
    joint = None
    if config.normalization == "joint_max":
        joint = max(float(_combined(c, config, {}).max()) for c in parts)
    return CostTriplet(*(_assemble(c, config, scales, joint) for c in parts))
