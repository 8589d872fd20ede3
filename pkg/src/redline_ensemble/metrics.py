"""Segregation (multigroup entropy) and compactness measures."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
import shapely
from shapely.geometry.base import BaseGeometry

from .errors import ContractError, DegenerateRegionError, GeometryError
from .partition import DistrictMap

DEFAULT_GROUPS = ("White", "Black", "Asian", "AIAN", "NHPI", "Other", "TwoOrMore", "Hispanic")


class Weighting(str, enum.Enum):
    # standard population-weighted mean of district entropies
    POPULATION_WEIGHTED = "population_weighted"
    # the same mean with an extra 1/z factor
    LITERAL_PAPER = "literal_paper"


@dataclass(frozen=True)
class GroupSchema:
    labels: tuple[str, ...] = DEFAULT_GROUPS

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise ValueError("need at least two groups")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("group labels must be unique")

    @property
    def k(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class EntropyResult:
    h_per_district: dict
    H_hat: float
    H_bar: float
    H: float


def _plogp_sum(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def district_entropy(proportions: Sequence[float]) -> float:
    """Shannon entropy (nats) of one district's group proportions.

    Zero proportions contribute nothing.
    """
    p = np.asarray(proportions, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or np.any(p > 1):
        raise ContractError("proportions must be a 1-d vector in [0, 1]")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ContractError(f"proportions sum to {p.sum()!r}, not 1")
    return _plogp_sum(p)


def entropy_from_tallies(
    table, weighting: Union[Weighting, str] = Weighting.POPULATION_WEIGHTED, labels=None
) -> EntropyResult:
    """Region entropy index from a z-by-k table of group counts.

    Empty rows are allowed and carry zero weight. Proportions are taken over
    the row sums of the table.
    """
    weighting = Weighting(weighting)
    n = np.asarray(table, dtype=float)
    if n.ndim != 2:
        raise ContractError("tally table must be 2-d (districts x groups)")
    if np.any(n < 0):
        raise ContractError("negative counts")
    z = n.shape[0]
    labels = list(range(z)) if labels is None else list(labels)
    n_i = n.sum(axis=1)
    total = n_i.sum()
    if total <= 0:
        raise DegenerateRegionError("region has no population")

    region_p = n.sum(axis=0) / total
    H_hat = _plogp_sum(region_p)
    if H_hat <= 0:
        raise DegenerateRegionError("region is a single group; entropy index undefined")

    h = np.zeros(z)
    # per-district KL divergence from the region mix; sums to H_hat - H_bar
    kl = np.zeros(z)
    for i in range(z):
        if n_i[i] <= 0:
            continue
        p = n[i] / n_i[i]
        nz = p > 0
        h[i] = float(-(p[nz] * np.log(p[nz])).sum())
        kl[i] = float((p[nz] * np.log(p[nz] / region_p[nz])).sum())
    w = n_i / total
    H_bar = float((w * h).sum())

    if weighting is Weighting.POPULATION_WEIGHTED:
        if np.all(h == 0):
            H = 1.0
        else:
            # same quantity as (H_hat - H_bar)/H_hat but exact in the homogeneous case
            H = min(max(float((w * kl).sum()) / H_hat, 0.0), 1.0)
    else:
        H_bar = H_bar / z
        H = (H_hat - H_bar) / H_hat
    return EntropyResult(dict(zip(labels, h.tolist())), H_hat, H_bar, H)


def region_entropy(
    dmap: DistrictMap,
    schema: GroupSchema | None = None,
    weighting: Union[Weighting, str] = Weighting.POPULATION_WEIGHTED,
) -> EntropyResult:
    if schema is not None and tuple(schema.labels) != tuple(dmap.groups):
        raise ContractError("map group order does not match the schema")
    return entropy_from_tallies(dmap.tally_table(), weighting, labels=dmap.labels)


def polsby_popper(geometry: BaseGeometry) -> float:
    """4*pi*A / P**2. Multipolygons use total area and total perimeter."""
    if geometry is None or geometry.is_empty:
        raise GeometryError("empty geometry has no compactness")
    perimeter = geometry.length
    if not perimeter > 0:
        raise GeometryError("zero-perimeter geometry")
    return 4 * math.pi * geometry.area / perimeter**2


def dissolve(dmap: DistrictMap, unit_geometries: Mapping[str, BaseGeometry]) -> dict[str, BaseGeometry]:
    out = {}
    for label in dmap.labels:
        members = dmap.members(label)
        if not members:
            continue
        try:
            out[label] = shapely.union_all([unit_geometries[u] for u in members])
        except Exception as exc:  # shapely raises GEOSException and friends
            raise GeometryError(f"dissolve failed: {exc}", label) from exc
    return out


def compactness_audit(dmap: DistrictMap, unit_geometries: Mapping[str, BaseGeometry]) -> tuple[float, float]:
    """(min, mean) Polsby-Popper score over the dissolved districts."""
    scores = [polsby_popper(g) for g in dissolve(dmap, unit_geometries).values()]
    if not scores:
        raise GeometryError("map has no districts to audit")
    return min(scores), float(np.mean(scores))


def audit_passes(seed_min_pp: float, end_min_pp: float, rtol: float = 1e-9) -> bool:
    """End-of-chain minimum compactness may not fall below the seed's.

    ``rtol`` absorbs overlay round-off when the same shape is re-dissolved.
    """
    return end_min_pp >= seed_min_pp * (1 - rtol)
