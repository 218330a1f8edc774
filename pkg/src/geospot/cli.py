"""Command-line entry point.

    geospot dist      --manifest M --src US --tgt BR --feature resnet50
    geospot matrix    --manifest M --feature resnet50 --location geoclip [--lambda-grid 0:1:0.1]
    geospot select    --manifest M --target BR --k 5 [--budget 2000]
    geospot correlate --table out/distances.csv --acc accuracies.csv
    geospot map       --table out/distances.csv --ref US --format geojson

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from geospot.analytics import AccuracyTable, correlate
from geospot.cost import GroundCostConfig
from geospot.distance import FailedDomain, PairwiseDistanceTable, geospot_distance, pairwise_matrix
from geospot.errors import ConfigError, DataError, GeoSpotError, SolverError
from geospot.ingest import DomainManifest, load_domain, load_manifest
from geospot.maps import build_map, domain_centroid, export_map, load_boundaries
from geospot.ot import SinkhornConfig
from geospot.selection import budget_sample, greedy_select, samples_to_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("geospot")


@dataclass
class RunConfig:
    manifest: str | None = None
    feature: str | None = None
    location: str | None = None
    lam: float | None = None
    p: float = 2.0
    normalization: str = "per_component_max"
    epsilon: float = 0.01
    max_iterations: int = 10_000
    tolerance: float = 1e-9
    n_max: int = 1000
    seed: int = 0
    jobs: int | None = None
    out: str = "out"

    def resolved_lambda(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        if self.feature and self.location:
            return 0.5
        return 1.0 if self.feature else 0.0

    def ground(self, lam: float | None = None) -> GroundCostConfig:
        lam = self.resolved_lambda() if lam is None else lam
        if self.location in (None, "none"):
            mode, space = "none", None
        elif self.location == "arc":
            mode, space = "arc", None
        else:
            mode, space = "embedding", self.location
        return GroundCostConfig(self.feature, mode, space, lam, self.p, self.normalization)

    def sinkhorn(self) -> SinkhornConfig:
        return SinkhornConfig(self.epsilon, self.max_iterations, self.tolerance)

    def n_jobs(self) -> int:
        return self.jobs or os.cpu_count() or 1


class UsageError(GeoSpotError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file with run settings; flags override it")
    g.add_argument("--manifest", help="domain manifest (JSON)")
    g.add_argument("--feature", help="feature embedding space name")
    g.add_argument("--location", help="'arc' or a location embedding space name")
    g.add_argument("--lambda", dest="lam", type=float, help="feature weight in [0, 1]")
    g.add_argument("--p", type=float, help="ground cost exponent (default 2)")
    g.add_argument("--normalization", choices=["per_component_max", "joint_max", "none"])
    g.add_argument("--epsilon", type=float, help="entropic regularization (default 0.01)")
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--tolerance", type=float)
    g.add_argument("--n-max", type=int, help="per-domain subsample size (default 1000)")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, help="worker threads (default: all cores)")
    g.add_argument("--out", help="output directory (default ./out)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="geospot", description="Optimal-transport distances between geospatial domains.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("dist", parents=[common], help="distance between two domains")
    d.add_argument("--src", required=True)
    d.add_argument("--tgt", required=True)

    m = sub.add_parser("matrix", parents=[common], help="pairwise distance table")
    m.add_argument("--lambda-grid", help="START:STOP:STEP, one table per lambda value")

    s = sub.add_parser("select", parents=[common], help="greedy source-domain selection")
    s.add_argument("--target", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--sources", help="comma-separated source ids (default: all but the target)")
    s.add_argument("--budget", type=int, help="also draw this many training samples from the picks")

    c = sub.add_parser("correlate", parents=[common], help="correlate distances with transfer deltas")
    c.add_argument("--table", required=True)
    c.add_argument("--acc", required=True)

    mp = sub.add_parser("map", parents=[common], help="applicability map for a reference domain")
    mp.add_argument("--table", required=True)
    mp.add_argument("--ref", required=True)
    mp.add_argument("--format", choices=["csv", "geojson"], default="geojson")
    mp.add_argument("--boundaries", help="GeoJSON FeatureCollection with a domain_id property per feature")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"missing config file: {path}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        doc = doc.get("run", doc)
        names = {f.name for f in fields(RunConfig)}
        unknown = set(doc) - names - {"lambda"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update({("lam" if k == "lambda" else k): v for k, v in doc.items()})
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(**values)


def parse_grid(text: str) -> list[float]:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected START:STOP:STEP") from None
    if step <= 0 or stop < start:
        raise UsageError(f"bad grid {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(n)]


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _prepare(cfg: RunConfig, command: str, extra: dict) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, **extra, "run": {("lambda" if k == "lam" else k): v for k, v in asdict(cfg).items()}}
    _write_json(out / "effective_config.json", doc)
    return out


def _manifest(cfg: RunConfig) -> DomainManifest:
    if not cfg.manifest:
        raise UsageError("--manifest is required for this command")
    manifest = load_manifest(cfg.manifest)
    declared = {s.name for s in manifest.embedding_spaces}
    for name in (cfg.feature, cfg.location):
        if name not in (None, "none", "arc") and name not in declared:
            raise UsageError(f"embedding space {name!r} is not declared in the manifest")
    return manifest


def cmd_dist(cfg: RunConfig, args) -> int:
    gcfg, scfg = cfg.ground(), cfg.sinkhorn()
    manifest = _manifest(cfg)
    src = load_domain(manifest, args.src)
    tgt = load_domain(manifest, args.tgt)
    out = _prepare(cfg, "dist", {"src": args.src, "tgt": args.tgt})
    res = geospot_distance(src, tgt, gcfg, scfg, cfg.n_max, cfg.seed)
    doc = {"src": args.src, "tgt": args.tgt, "ground_cost": gcfg.to_dict(), **res.to_dict(),
           "subsample": {"n_max": cfg.n_max, "seed": cfg.seed}}
    _write_json(out / f"dist_{args.src}_{args.tgt}.json", doc)
    print(json.dumps({"src": args.src, "tgt": args.tgt, "value": res.value, "converged": res.converged}))
    if not res.converged:
        print("warning: a Sinkhorn subproblem did not converge", file=sys.stderr)
    return EXIT_OK


def _load_all(manifest: DomainManifest, ids=None) -> list:
    out = []
    for did in ids or manifest.domain_ids:
        try:
            out.append(load_domain(manifest, did))
        except DataError as e:
            out.append(FailedDomain(did, str(e)))
    return out


def cmd_matrix(cfg: RunConfig, args) -> int:
    grid = parse_grid(args.lambda_grid) if args.lambda_grid else None
    configs = [(None, cfg.ground())] if grid is None else [(lam, cfg.ground(lam)) for lam in grid]
    scfg = cfg.sinkhorn()
    manifest = _manifest(cfg)
    domains = _load_all(manifest)
    out = _prepare(cfg, "matrix", {"lambda_grid": grid})
    all_failed = True
    total_warnings = 0
    for lam, gcfg in configs:
        table = pairwise_matrix(domains, gcfg, scfg, cfg.n_max, cfg.seed, jobs=cfg.n_jobs())
        stem = out / ("distances" if lam is None else f"distances_lambda{lam:.2f}")
        table.write(stem)
        off = table.values[~np.eye(len(table.domain_ids), dtype=bool)]
        all_failed &= not np.isfinite(off).any()
        total_warnings += len(table.errors)
        for key, msg in table.errors.items():
            print(f"warning: {key}: {msg}", file=sys.stderr)
        print(f"wrote {stem}.csv")
    print(f"warnings: {total_warnings}", file=sys.stderr)
    if all_failed:
        print("error: every pair failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_select(cfg: RunConfig, args) -> int:
    gcfg, scfg = cfg.ground(), cfg.sinkhorn()
    manifest = _manifest(cfg)
    if args.sources:
        source_ids = [s.strip() for s in args.sources.split(",") if s.strip()]
    else:
        source_ids = [d for d in manifest.domain_ids if d != args.target]
    if not 1 <= args.k <= len(source_ids):
        raise UsageError(f"K out of range: --k {args.k} with {len(source_ids)} sources")
    target = load_domain(manifest, args.target)
    sources = [load_domain(manifest, d) for d in source_ids]
    out = _prepare(cfg, "select", {"target": args.target, "k": args.k, "sources": source_ids, "budget": args.budget})
    trace = greedy_select(sources, target, args.k, gcfg, scfg, cfg.n_max, cfg.seed, jobs=cfg.n_jobs())
    (out / f"selection_{args.target}_k{args.k}.json").write_text(trace.to_json(), encoding="utf-8")
    if args.budget is not None:
        samples = budget_sample(trace, sources, args.budget, cfg.seed)
        (out / f"samples_{args.target}_k{args.k}.csv").write_text(samples_to_csv(samples), encoding="utf-8")
    for rank, (did, score) in enumerate(trace.chosen, start=1):
        print(f"{rank}\t{did}\t{score!r}")
    return EXIT_OK


def cmd_correlate(cfg: RunConfig, args) -> int:
    table = PairwiseDistanceTable.read(args.table)
    acc = AccuracyTable.read(args.acc)
    report = correlate(table, acc)
    out = _prepare(cfg, "correlate", {"table": args.table, "acc": args.acc})
    (out / "correlation.json").write_text(report.to_json(), encoding="utf-8")
    (out / "correlation_pairs.csv").write_text(report.pairs_csv(), encoding="utf-8")
    print(json.dumps({"n_pairs": report.n_pairs, "spearman_rho": report.spearman_rho,
                      "r_squared": report.r_squared}))
    return EXIT_OK


def cmd_map(cfg: RunConfig, args) -> int:
    table = PairwiseDistanceTable.read(args.table)
    amap = build_map(table, args.ref)
    centroids = {}
    if cfg.manifest:
        manifest = load_manifest(cfg.manifest)
        for d in _load_all(manifest, [e for e, _, _ in amap.entries if e in manifest.domain_ids]):
            if not isinstance(d, FailedDomain):
                centroids[d.id] = domain_centroid(d)
    boundaries = load_boundaries(args.boundaries) if args.boundaries else None
    out = _prepare(cfg, "map", {"table": args.table, "ref": args.ref, "format": args.format,
                                "boundaries": args.boundaries})
    path = out / f"map_{args.ref}.{args.format}"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        export_map(amap, args.format, path, centroids=centroids, boundaries=boundaries)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"dist": cmd_dist, "matrix": cmd_matrix, "select": cmd_select, "correlate": cmd_correlate, "map": cmd_map}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits on --help and on usage errors; hand back the code instead
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
