"""Region geometry: spatial units, historical districts, crosswalks, adjacency.

All coordinates are treated as planar and area-true. Reprojection happens
upstream of this module.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import shapely
from shapely.geometry.base import BaseGeometry

from .errors import GeometryError, RegionError

log = logging.getLogger(__name__)

# Minimum union overlap for a unit to be kept in the crosswalk.
VALID_OVERLAP_FRACTION = 0.5
# Relative slack used when comparing overlap areas (ties, the 50% cut).
AREA_RTOL = 1e-12

EXCLUDED = "EXCLUDED"


def repair(geom: BaseGeometry, ident=None) -> BaseGeometry:
    """Return a valid polygonal version of ``geom`` or raise GeometryError.

    A single zero-width buffer is attempted on invalid input; anything still
    invalid or without area after that is rejected.
    """
    if geom is None or geom.is_empty:
        raise GeometryError("empty geometry", ident)
    if not geom.is_valid:
        fixed = geom.buffer(0)
        if fixed.is_empty or not fixed.is_valid:
            raise GeometryError("self-intersecting geometry could not be repaired", ident)
        log.warning("repaired invalid geometry for %r", ident)
        geom = fixed
    if geom.geom_type not in ("Polygon", "MultiPolygon"):
        raise GeometryError(f"expected a polygon, got {geom.geom_type}", ident)
    return geom


@dataclass(frozen=True)
class SpatialUnit:
    """One census block group.

    ``total`` is always the sum over ``populations``; see ``make``.
    """

    id: str
    geometry: BaseGeometry
    populations: Mapping[str, int]
    total: int

    @classmethod
    def make(cls, id, geometry, populations, validate=True):
        pops = {str(k): int(v) for k, v in populations.items()}
        if any(v < 0 for v in pops.values()):
            raise ValueError(f"negative population count in unit {id!r}")
        if validate:
            geometry = repair(geometry, id)
            if geometry.area <= 0:
                raise GeometryError("zero-area unit", id)
        return cls(str(id), geometry, pops, sum(pops.values()))

    def counts(self, groups: Sequence[str]) -> np.ndarray:
        return np.array([self.populations.get(g, 0) for g in groups], dtype=np.int64)


@dataclass(frozen=True)
class HistoricalDistrict:
    label: str
    geometry: BaseGeometry
    # metadata only, never read by any computation
    grade: Optional[str] = None


@dataclass
class Crosswalk:
    """Historical districts expressed in terms of modern spatial units."""

    assignment: dict[str, str]
    excluded: set[str]
    overlap_fractions: dict[tuple[str, str], float] = field(default_factory=dict)
    union_fractions: dict[str, float] = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return sorted(set(self.assignment.values()))

    def best_fraction(self, unit_id: str) -> float:
        fracs = [f for (u, _), f in self.overlap_fractions.items() if u == unit_id]
        return max(fracs, default=0.0)

    def audit_rows(self) -> list[tuple[str, str, float, float]]:
        """Rows of (unit_id, label or EXCLUDED, union_fraction, best_fraction)."""
        best: dict[str, float] = {}
        for (u, _), f in self.overlap_fractions.items():
            best[u] = max(best.get(u, 0.0), f)
        ids = sorted(set(self.assignment) | self.excluded)
        return [
            (u, self.assignment.get(u, EXCLUDED), self.union_fractions.get(u, 0.0), best.get(u, 0.0))
            for u in ids
        ]


def _canonical_order(a: BaseGeometry, b: BaseGeometry):
    # shapely's overlay is not bit-symmetric; fix an argument order
    ka = (a.bounds, a.area)
    kb = (b.bounds, b.area)
    if ka > kb or (ka == kb and a.wkb > b.wkb):
        return b, a
    return a, b


def intersection_area(a: BaseGeometry, b: BaseGeometry, a_id=None, b_id=None) -> float:
    """Exact planar area of ``a`` ∩ ``b``."""
    a = repair(a, a_id)
    b = repair(b, b_id)
    if not a.intersects(b):
        return 0.0
    a, b = _canonical_order(a, b)
    area = a.intersection(b).area
    return min(area, a.area, b.area)


def build_crosswalk(
    units: Sequence[SpatialUnit], districts: Sequence[HistoricalDistrict]
) -> Crosswalk:
    """Assign each unit to the district it overlaps most.

    A unit is kept only when at least half of its area lies inside the union
    of all districts; otherwise it is excluded. Ties on the largest single
    overlap go to the lexicographically smallest label.
    """
    if not units:
        raise RegionError("no spatial units supplied")
    if not districts:
        raise RegionError("no historical districts supplied")
    labels = [d.label for d in districts]
    if len(set(labels)) != len(labels):
        raise RegionError("duplicate district labels")

    dgeoms = [repair(d.geometry, d.label) for d in districts]
    tree = shapely.STRtree(dgeoms)
    footprint = shapely.union_all(dgeoms)

    assignment: dict[str, str] = {}
    excluded: set[str] = set()
    overlaps: dict[tuple[str, str], float] = {}
    unions: dict[str, float] = {}

    for unit in units:
        geom = repair(unit.geometry, unit.id)
        area = geom.area
        if area <= 0:
            raise GeometryError("zero-area unit", unit.id)

        best_label, best_area = None, 0.0
        for j in sorted(tree.query(geom), key=lambda j: labels[j]):
            ov = intersection_area(geom, dgeoms[j], unit.id, labels[j])
            if ov <= 0:
                continue
            overlaps[(unit.id, labels[j])] = ov / area
            # strictly larger beyond float noise wins; otherwise the earlier label stays
            if best_label is None or ov > best_area + AREA_RTOL * area:
                best_label, best_area = labels[j], ov

        union_frac = min(intersection_area(geom, footprint, unit.id), area) / area
        unions[unit.id] = union_frac
        if best_label is not None and union_frac >= VALID_OVERLAP_FRACTION - AREA_RTOL:
            assignment[unit.id] = best_label
        else:
            excluded.add(unit.id)

    if not assignment:
        raise RegionError("every unit was excluded by the crosswalk")
    return Crosswalk(dict(sorted(assignment.items())), excluded, overlaps, unions)


def drop_empty_districts(crosswalk: Crosswalk, units: Iterable[SpatialUnit]) -> Crosswalk:
    """Remove districts whose assigned population is zero.

    Their units move to ``excluded``. Returns the input unchanged when no
    district is empty.
    """
    totals = {label: 0 for label in crosswalk.labels}
    by_id = {u.id: u for u in units}
    for uid, label in crosswalk.assignment.items():
        totals[label] += by_id[uid].total
    empty = {label for label, n in totals.items() if n == 0}
    if not empty:
        return crosswalk
    log.info("dropping %d empty district(s): %s", len(empty), sorted(empty))
    assignment = {u: l for u, l in crosswalk.assignment.items() if l not in empty}
    excluded = set(crosswalk.excluded) | {u for u, l in crosswalk.assignment.items() if l in empty}
    return Crosswalk(assignment, excluded, dict(crosswalk.overlap_fractions), dict(crosswalk.union_fractions))


class AdjacencyGraph:
    """Undirected rook-adjacency graph over unit ids.

    Edges are stored as sorted ``(a, b)`` tuples with ``a < b``.
    """

    def __init__(self, nodes: Iterable[str], shared_perimeter: Mapping[tuple[str, str], float]):
        self.nodes: tuple[str, ...] = tuple(sorted(set(nodes)))
        perims = {}
        for (a, b), length in shared_perimeter.items():
            if a == b:
                raise ValueError(f"self-loop on {a!r}")
            perims[(a, b) if a < b else (b, a)] = float(length)
        self.shared_perimeter: dict[tuple[str, str], float] = dict(sorted(perims.items()))
        self.edges: tuple[tuple[str, str], ...] = tuple(self.shared_perimeter)
        nbrs: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        self.neighbors: dict[str, tuple[str, ...]] = {n: tuple(sorted(v)) for n, v in nbrs.items()}

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        return (
            isinstance(other, AdjacencyGraph)
            and self.nodes == other.nodes
            and self.shared_perimeter == other.shared_perimeter
        )

    def __repr__(self):
        return f"AdjacencyGraph(nodes={len(self.nodes)}, edges={len(self.edges)})"

    def restrict(self, keep: Iterable[str]) -> "AdjacencyGraph":
        keep = set(keep)
        perims = {e: p for e, p in self.shared_perimeter.items() if e[0] in keep and e[1] in keep}
        return AdjacencyGraph([n for n in self.nodes if n in keep], perims)

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [{"a": a, "b": b, "shared_perimeter": p} for (a, b), p in self.shared_perimeter.items()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "AdjacencyGraph":
        return cls(data["nodes"], {(e["a"], e["b"]): e["shared_perimeter"] for e in data["edges"]})


def build_adjacency(units: Sequence[SpatialUnit]) -> AdjacencyGraph:
    """Rook adjacency: an edge iff two units share a boundary of positive length."""
    ids = [u.id for u in units]
    if len(set(ids)) != len(ids):
        raise RegionError("duplicate unit ids")
    geoms = np.array([repair(u.geometry, u.id) for u in units], dtype=object)
    if len(geoms) == 0:
        return AdjacencyGraph([], {})
    bounds = shapely.boundary(geoms)
    left, right = shapely.STRtree(geoms).query(geoms, predicate="intersects")
    mask = left < right
    left, right = left[mask], right[mask]
    lengths = shapely.length(shapely.intersection(bounds[left], bounds[right]))
    perims = {
        (ids[i], ids[j]): float(length)
        for i, j, length in zip(left.tolist(), right.tolist(), lengths.tolist())
        if length > 0
    }
    return AdjacencyGraph(ids, perims)
