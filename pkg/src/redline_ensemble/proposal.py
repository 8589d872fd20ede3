"""Chunk-flip proposal kernel."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .geo import AdjacencyGraph
from .partition import DistrictMap, district_edges

# redraws allowed per sub-flip before it is skipped
MAX_CONTIGUITY_REDRAWS = 20


@dataclass(frozen=True)
class ProposalConfig:
    max_chunk_size: int = 5
    rng_seed: int = 0
    enforce_contiguity: bool = True

    def __post_init__(self):
        if self.max_chunk_size < 1:
            raise ValueError("max_chunk_size must be >= 1")


class FlipRecord(NamedTuple):
    seed_unit: str
    chunk: frozenset
    source: str
    target: str


def source_is_connected_after_removal(dmap: DistrictMap, graph: AdjacencyGraph, chunk: Iterable[str]) -> bool:
    """True iff removing ``chunk`` leaves its source district in one piece.

    Removing the whole district counts as connected here; the lower-bound
    validator rejects the empty district later. If the source district was
    already split into several components beforehand, only the component
    holding the chunk has to stay whole.
    """
    chunk = set(chunk)
    if not chunk:
        return True
    a = dmap.assignment
    source = a[next(iter(chunk))]
    nbrs = graph.neighbors
    # remaining source units bordering the chunk; every piece left behind must contain one
    anchors = {v for u in chunk for v in nbrs[u] if a[v] == source and v not in chunk}
    if len(anchors) <= 1:
        return True
    start = next(iter(anchors))
    seen = {start}
    todo = [start]
    remaining = len(anchors) - 1
    while todo:
        u = todo.pop()
        for v in nbrs[u]:
            if v in seen or v in chunk or a[v] != source:
                continue
            seen.add(v)
            if v in anchors:
                remaining -= 1
                if remaining == 0:
                    return True
            todo.append(v)
    return False


def _grow_chunk(dmap, graph, seed_unit, size, rng) -> set:
    """Randomized breadth-first growth inside the seed's district."""
    a = dmap.assignment
    source = a[seed_unit]
    chunk = {seed_unit}
    frontier = deque([seed_unit])
    while frontier and len(chunk) < size:
        u = frontier.popleft()
        cands = [v for v in graph.neighbors[u] if a[v] == source and v not in chunk]
        if len(cands) > 1:
            cands = [cands[i] for i in rng.permutation(len(cands))]
        for v in cands:
            if len(chunk) >= size:
                break
            chunk.add(v)
            frontier.append(v)
    return chunk


def propose(
    dmap: DistrictMap,
    graph: AdjacencyGraph,
    cfg: ProposalConfig,
    rng: Optional[np.random.Generator] = None,
    record: Optional[list] = None,
) -> DistrictMap:
    """Draw a candidate map from ``dmap`` by a random number of chunk flips.

    The number of sub-flips is uniform on 1..(number of touching district
    pairs). Each sub-flip picks a touching pair and a direction uniformly,
    seeds a chunk at a uniformly chosen boundary unit of the source district
    and grows it to a size uniform on 1..max_chunk_size. The returned map has
    ``step_index`` advanced by exactly one, whether or not anything moved.

    ``rng`` defaults to a fresh generator seeded from ``cfg.rng_seed``. When
    ``record`` is a list, one ``FlipRecord`` per applied sub-flip is appended.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    edges = district_edges(dmap)
    current = dmap
    if edges:
        r = int(rng.integers(1, len(edges) + 1))
        for _ in range(r):
            current = _sub_flip(current, graph, cfg, rng, record)
    return current.with_step(dmap.step_index + 1)


def _sub_flip(dmap, graph, cfg, rng, record):
    edges = district_edges(dmap)
    if not edges:
        return dmap
    de = edges[int(rng.integers(len(edges)))]
    if rng.random() < 0.5:
        source, target = de.pair
    else:
        target, source = de.pair
    boundary = de.boundary_units(source, dmap.assignment)
    for _ in range(MAX_CONTIGUITY_REDRAWS):
        seed_unit = boundary[int(rng.integers(len(boundary)))]
        size = int(rng.integers(1, cfg.max_chunk_size + 1))
        chunk = _grow_chunk(dmap, graph, seed_unit, size, rng)
        if cfg.enforce_contiguity and not source_is_connected_after_removal(dmap, graph, chunk):
            continue
        if record is not None:
            record.append(FlipRecord(seed_unit, frozenset(chunk), source, target))
        return dmap._relabel(chunk, target)
    return dmap
