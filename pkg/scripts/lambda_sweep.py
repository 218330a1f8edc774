"""Sweep the feature/location weight and report how each table correlates with accuracies.

Defaults to the bundled toy data. Writes one distance table per lambda under
--out and prints rho and R^2 per lambda.
"""

import argparse
from pathlib import Path

from geospot.analytics import AccuracyTable, correlate
from geospot.cli import parse_grid
from geospot.cost import GroundCostConfig
from geospot.distance import pairwise_matrix
from geospot.ingest import load_domain, load_manifest
from geospot.ot import SinkhornConfig

TOY = Path(__file__).resolve().parent.parent / "data" / "toy"

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--manifest", default=str(TOY / "manifest.json"))
    ap.add_argument("--acc", default=str(TOY / "accuracies.csv"))
    ap.add_argument("--feature", default="resnet50")
    ap.add_argument("--location", default="geoclip", help="'arc' or a location embedding space")
    ap.add_argument("--grid", default="0:1:0.1")
    ap.add_argument("--n-max", type=int, default=1000)
    ap.add_argument("--out", default="out/lambda_sweep")
    a = ap.parse_args()

    manifest = load_manifest(a.manifest)
    domains = [load_domain(manifest, d) for d in manifest.domain_ids]
    acc = AccuracyTable.read(a.acc)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    mode, space = ("arc", None) if a.location == "arc" else ("embedding", a.location)
    print(f"{'lambda':>7}{'rho':>8}{'R2':>8}")
    for lam in parse_grid(a.grid):
        feature = a.feature if lam > 0 else None
        location = (mode, space) if lam < 1 else ("none", None)
        cfg = GroundCostConfig(feature, *location, lam=lam)
        table = pairwise_matrix(domains, cfg, SinkhornConfig(), n_max=a.n_max)
        table.write(out / f"distances_lambda{lam:.2f}")
        rep = correlate(table, acc)
        print(f"{lam:>7.2f}{rep.spearman_rho:>8.3f}{rep.r_squared:>8.3f}")
