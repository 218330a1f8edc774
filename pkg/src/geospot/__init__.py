"""Optimal-transport distances between geospatial data domains."""

from geospot.analytics import AccuracyTable, CorrelationReport, correlate, ols_fit, spearman, transfer_delta
from geospot.cost import (
    CostMatrix,
    GroundCostConfig,
    arc_distance,
    build_cost_matrix,
    build_cost_triplet,
    combine,
    cosine_distance,
)
from geospot.distance import PairwiseDistanceTable, geospot_distance, pairwise_matrix
from geospot.errors import ConfigError, DataError, GeoSpotError, SolverError
from geospot.ingest import DomainDataset, DomainManifest, load_domain, load_manifest
from geospot.maps import ApplicabilityMap, build_map, export_map
from geospot.measures import EmpiricalMeasure, pool, subsample, to_measure
from geospot.ot import DistanceResult, SinkhornConfig, TransportPlan, exact_ot, sinkhorn, sinkhorn_divergence
from geospot.selection import SelectionTrace, budget_sample, greedy_select

__version__ = "0.1.0"
