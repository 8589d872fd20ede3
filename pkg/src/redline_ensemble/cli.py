"""Command-line driver: ``ingest``, ``run``, ``placebo``, ``synth``, ``report``.

Exit codes: 0 success, 1 input/other engine error, 2 stuck chain,
3 degenerate region.
"""

from __future__ import annotations

import argparse
import logging
import platform
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import shapely

from . import io
from .chain import EntropyTrace, run_ensemble
from .config import EngineConfig, load_config
from .diagnostics import CompactnessSummary, EnsembleReport, summarize
from .errors import EnsembleError, RegionError, StuckChainError
from .geo import build_adjacency, build_crosswalk, drop_empty_districts
from .metrics import audit_passes, compactness_audit, entropy_from_tallies
from .partition import DistrictMap, from_crosswalk
from .placebo import run_placebo, within_central
from .synth import write_region
from .validators import describe, validate

log = logging.getLogger("redline_ensemble")

EXIT_OK, EXIT_ERROR, EXIT_STUCK, EXIT_DEGENERATE = 0, 1, 2, 3


def _versions() -> dict:
    return {
        "engine": io.VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "shapely": shapely.__version__,
    }


def _config(args) -> EngineConfig:
    overrides = {
        "chain.n_chains": getattr(args, "chains", None),
        "chain.steps": getattr(args, "steps", None),
        "chain.base_seed": getattr(args, "seed", None),
    }
    if getattr(args, "shared_shuffle", False):
        overrides["placebo.shared_shuffle"] = True
    return load_config(args.config, overrides)


def ingest(region_dir: Path, out_dir: Path, cfg: EngineConfig):
    """Crosswalk + adjacency + seed map; writes the three ingest artifacts."""
    units, districts = io.read_region(region_dir, cfg.schema.labels)
    crosswalk = drop_empty_districts(build_crosswalk(units, districts), units)
    graph = build_adjacency(units)
    seed_map = from_crosswalk(crosswalk, graph, units, cfg.schema.labels)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = cfg.hash()
    io.write_crosswalk(out_dir / "crosswalk.csv", crosswalk, h)
    io.write_graph(out_dir / "graph.json", graph, h)
    io.write_assignment(out_dir / "seed_map.csv", dict(seed_map.assignment), h)
    log.info("ingested %d units (%d excluded) into %d districts", len(units), len(crosswalk.excluded), seed_map.z)
    return units, districts, crosswalk, seed_map


def _trace_writer(trace_dir: Path, cfg: EngineConfig, dump_maps: bool):
    trace_dir.mkdir(parents=True, exist_ok=True)
    h = cfg.hash()

    def write(trace: EntropyTrace):
        io.write_trace(trace_dir / f"chain_{trace.chain_id:03d}.csv", trace, h)
        if dump_maps and trace.maps:
            map_dir = trace_dir / "maps" / f"chain_{trace.chain_id:03d}"
            map_dir.mkdir(parents=True, exist_ok=True)
            for step, assignment in zip(trace.steps, trace.maps):
                io.write_assignment(map_dir / f"step_{step:06d}.csv", assignment, h)

    return write


def _end_map(seed_map: DistrictMap, trace: EntropyTrace) -> DistrictMap:
    counts = {n: seed_map.unit_counts(n) for n in seed_map.graph.nodes}
    return DistrictMap(seed_map.graph, trace.final_assignment, counts, seed_map.groups, seed_map.labels, trace.total_steps)


def compactness_summary(seed_map, traces, geoms) -> CompactnessSummary:
    seed_min, seed_mean = compactness_audit(seed_map, geoms)
    ends = [compactness_audit(_end_map(seed_map, t), geoms) for t in traces]
    return CompactnessSummary(
        seed_min=seed_min,
        seed_mean=seed_mean,
        end_min=min(e[0] for e in ends),
        end_mean=float(np.mean([e[1] for e in ends])),
        passed=all(audit_passes(seed_min, e[0]) for e in ends),
    )


def write_reports(out_dir: Path, report: EnsembleReport, cfg: EngineConfig) -> None:
    h = cfg.hash()
    io.write_json(out_dir / "report.json", report.to_json(), h)
    io.write_csv(out_dir / "report.csv", EnsembleReport.CSV_COLUMNS, [report.csv_row()], h)
    rhat_rows = [[
        report.region, report.n_chains, report.n_samples // max(report.n_chains, 1),
        "" if report.r_hat is None else f"{report.r_hat:.6f}",
        "" if report.sqrt_r_hat is None else f"{report.sqrt_r_hat:.6f}",
        "" if report.converged is None else str(report.converged).lower(),
    ]]
    io.write_csv(out_dir / "rhat.csv", ("region", "m", "n", "r_hat", "sqrt_r_hat", "converged"), rhat_rows, h)


def cmd_ingest(args) -> int:
    cfg = _config(args)
    ingest(Path(args.region), Path(args.out), cfg)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    region, out = Path(args.region), Path(args.out)
    units, _, _, seed_map = ingest(region, out, cfg)
    vcfg = cfg.validators.calibrated(seed_map)
    baseline = entropy_from_tallies(seed_map.tally_table(), cfg.weighting).H
    if args.dry_run:
        ok = validate(seed_map, vcfg)
        print(f"dry run: {seed_map.z} districts, {len(seed_map.graph)} units, baseline H={baseline:.6f}")
        print(f"seed map {'passes' if ok else 'FAILS'} validation: {describe(seed_map, vcfg)}")
        return EXIT_OK if ok else EXIT_ERROR

    writer = _trace_writer(out / "traces", cfg, args.dump_maps)
    traces = run_ensemble(seed_map, seed_map.graph, cfg, on_trace=writer, keep_maps=args.dump_maps)
    geoms = {u.id: u.geometry for u in units}
    report = summarize(traces, baseline, compactness_summary(seed_map, traces, geoms), region=region.name)
    write_reports(out, report, cfg)
    io.write_json(out / "manifest.json", {
        "region": region.name,
        "config": cfg.flat(),
        "baseline": baseline,
        "s0": vcfg.s0,
        "chains": [
            {"chain_id": t.chain_id, "seed": t.seed, "acceptance_rate": t.acceptance_rate,
             "accepts": t.accept_count, "rejects": t.reject_count, "reject_reasons": t.reject_reasons}
            for t in traces
        ],
        "total_steps": sum(t.total_steps for t in traces),
        "retained_values": sum(len(t.values) for t in traces),
        "versions": _versions(),
    }, cfg.hash())
    print(report.table_line())
    return EXIT_OK


def cmd_placebo(args) -> int:
    cfg = _config(args)
    region, out = Path(args.region), Path(args.out)
    units, districts, crosswalk, seed_map = ingest(region, out, cfg)
    n = args.replicates if args.replicates is not None else cfg.placebo_replicates
    writer = _trace_writer(out / "placebo_traces", cfg, False)
    results = run_placebo(units, districts, cfg, n, crosswalk=crosswalk,
                          graph=build_adjacency(units), on_trace=writer)
    rows = []
    for baseline, trace in results:
        lo, hi = np.quantile(trace.values, [0.025, 0.975])
        rows.append([trace.chain_id, trace.seed, repr(baseline), repr(float(np.mean(trace.values))),
                     repr(float(lo)), repr(float(hi)), str(within_central(baseline, trace.values)).lower()])
    io.write_csv(out / "placebo_baselines.csv",
                 ("replicate", "seed", "baseline", "chain_mean", "q025", "q975", "inside_central_95"), rows, cfg.hash())
    inside = sum(r[-1] == "true" for r in rows)
    io.write_json(out / "manifest.json", {
        "region": region.name,
        "config": cfg.flat(),
        "replicates": n,
        "inside_central_95": inside,
        "chains": [{"replicate": t.chain_id, "seed": t.seed, "acceptance_rate": t.acceptance_rate} for _, t in results],
        "versions": _versions(),
    }, cfg.hash())
    print(f"placebo: {inside}/{n} baselines inside their own central 95% band")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        write_region(Path(args.out), args.rows, args.cols, args.districts, args.segregation, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    manifest = io.read_json(out / "manifest.json")
    traces = []
    for path in sorted((out / "traces").glob("chain_*.csv")):
        steps, values = io.read_trace_values(path)
        chain_id = int(path.stem.split("_")[1])
        traces.append(EntropyTrace(chain_id, 0, values, steps, total_steps=manifest["config"]["chain.steps"]))
    if not traces:
        print(f"error: no traces under {out / 'traces'}", file=sys.stderr)
        return EXIT_ERROR
    report = summarize(traces, manifest["baseline"], region=manifest.get("region", ""))
    print(report.table_line())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="redline-ensemble", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, region=True):
        if region:
            sp.add_argument("--region", required=True, help="directory with blocks.geojson and districts.geojson")
        sp.add_argument("--config", type=Path, help="flat key-value YAML config")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("ingest", help="crosswalk, adjacency graph and seed map")
    common(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("run", help="run the chain ensemble and write reports")
    common(sp)
    sp.add_argument("--chains", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--dump-maps", action="store_true", help="write every retained map as CSV")
    sp.add_argument("--dry-run", action="store_true", help="validate inputs and config, do not sample")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("placebo", help="shuffled-data control ensemble")
    common(sp)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--shared-shuffle", action="store_true", help="one shuffle shared by all replicates")
    sp.set_defaults(func=cmd_placebo)

    sp = sub.add_parser("synth", help="write a synthetic grid region")
    sp.add_argument("--rows", type=int, default=10)
    sp.add_argument("--cols", type=int, default=10)
    sp.add_argument("--districts", type=int, default=4)
    sp.add_argument("--segregation", type=float, default=0.8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("report", help="re-summarize the traces of a finished run")
    sp.add_argument("--out", required=True, help="output directory of a previous run")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StuckChainError as exc:
        print(f"stuck chain: {exc}", file=sys.stderr)
        return EXIT_STUCK
    except RegionError as exc:
        print(f"degenerate region: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except EnsembleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
