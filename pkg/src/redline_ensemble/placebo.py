"""Placebo control: shuffle each group's counts across units and rerun chains.

Shuffling keeps every group's region total but wipes out its spatial
pattern, so a sampler that is not biased should produce chains whose
distributions contain their own (shuffled) baselines.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .chain import EntropyTrace, derive_seed, run_jobs
from .config import EngineConfig
from .geo import AdjacencyGraph, Crosswalk, HistoricalDistrict, SpatialUnit, build_adjacency, build_crosswalk, drop_empty_districts
from .metrics import entropy_from_tallies
from .partition import from_crosswalk

# spawn-key tags keep placebo streams disjoint from the main ensemble's
_SHUFFLE_TAG = 0x5AF1
_CHAIN_TAG = 0xC4A1


def shuffle_within_groups(units: Sequence[SpatialUnit], rng_seed, groups: Optional[Sequence[str]] = None) -> list[SpatialUnit]:
    """Permute each group's per-unit counts independently across units.

    Ids and geometries stay in place; unit totals are recomputed.
    """
    units = list(units)
    if not units:
        raise ValueError("no units to shuffle")
    if groups is None:
        groups = list(units[0].populations)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    table = np.array([[u.populations.get(g, 0) for g in groups] for u in units], dtype=np.int64)
    for j in range(table.shape[1]):
        table[:, j] = table[rng.permutation(len(units)), j]
    return [
        SpatialUnit.make(u.id, u.geometry, dict(zip(groups, row.tolist())), validate=False)
        for u, row in zip(units, table)
    ]


def _seed_for(units, crosswalk, graph, groups):
    cw = drop_empty_districts(crosswalk, units)
    return from_crosswalk(cw, graph, units, groups)


def run_placebo(
    units: Sequence[SpatialUnit],
    districts: Sequence[HistoricalDistrict],
    cfgs: EngineConfig,
    n_placebos: int,
    crosswalk: Optional[Crosswalk] = None,
    graph: Optional[AdjacencyGraph] = None,
    shared_shuffle: Optional[bool] = None,
    on_trace=None,
    workers: Optional[int] = None,
) -> list[tuple[float, EntropyTrace]]:
    """Run ``n_placebos`` shuffled replicates, one chain each.

    Each replicate gets its own shuffle (unless ``shared_shuffle``), its own
    baseline computed on the shuffled seed map, and its own validator
    calibration. Replicate ``i`` is deterministic given ``base_seed`` and ``i``.
    """
    if n_placebos <= 0:
        return []
    shared = cfgs.shared_shuffle if shared_shuffle is None else shared_shuffle
    groups = list(cfgs.schema.labels)
    crosswalk = crosswalk or build_crosswalk(units, districts)
    graph = graph or build_adjacency(units)
    base = cfgs.chain.base_seed

    baselines, jobs = [], []
    shuffled = None
    for i in range(n_placebos):
        if shuffled is None or not shared:
            shuffled = shuffle_within_groups(units, derive_seed(base, _SHUFFLE_TAG, 0 if shared else i), groups)
            seed_map = _seed_for(shuffled, crosswalk, graph, groups)
            vcfg = cfgs.validators.calibrated(seed_map)
            baseline = entropy_from_tallies(seed_map.tally_table(), cfgs.weighting).H
        baselines.append(baseline)
        jobs.append(
            (seed_map, seed_map.graph, cfgs.proposal, vcfg, cfgs.chain, i, cfgs.weighting,
             derive_seed(base, _CHAIN_TAG, i), False)
        )
    traces = run_jobs(jobs, on_trace, workers)
    return list(zip(baselines, traces))


def within_central(baseline: float, values, coverage: float = 0.95) -> bool:
    """Whether ``baseline`` lies inside the central ``coverage`` band of ``values``."""
    tail = (1 - coverage) / 2
    lo, hi = np.quantile(np.asarray(values, dtype=float), [tail, 1 - tail])
    return bool(lo <= baseline <= hi)
