"""District maps over an adjacency graph (the Markov chain state)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ContractError, RegionError
from .geo import AdjacencyGraph, Crosswalk, SpatialUnit


@dataclass(frozen=True)
class DistrictEdge:
    """A pair of districts that touch, with every graph edge between them."""

    pair: tuple[str, str]
    cut_edges: frozenset

    def boundary_units(self, source: str, assignment: Mapping[str, str]) -> list[str]:
        """Units of ``source`` lying on this district edge, sorted."""
        return sorted({u for e in self.cut_edges for u in e if assignment[u] == source})


class DistrictMap:
    """Assignment of graph nodes to district labels plus per-district tallies.

    Instances are treated as immutable values: every mutation helper returns a
    new map. Internals (count table, graph) are shared between copies.

    Parameters
    ----------
    graph : AdjacencyGraph
        The chain graph; every node must be assigned.
    assignment : mapping
        unit id -> district label.
    unit_counts : mapping
        unit id -> integer vector of group counts (fixed group order).
    groups : sequence of str
        Group labels in the order used by ``unit_counts``.
    labels : iterable of str, optional
        The district label set. Defaults to the labels present in
        ``assignment``. Labels may become empty during a chain; they are kept so
        the validators can see (and reject) the empty district.
    """

    __slots__ = ("graph", "groups", "labels", "_assignment", "_counts", "_tallies", "_cut", "step_index")

    def __init__(
        self,
        graph: AdjacencyGraph,
        assignment: Mapping[str, str],
        unit_counts: Mapping[str, np.ndarray],
        groups: Sequence[str],
        labels: Optional[Iterable[str]] = None,
        step_index: int = 0,
    ):
        missing = [n for n in graph.nodes if n not in assignment]
        if missing:
            raise ContractError(f"{len(missing)} graph node(s) have no district, e.g. {missing[0]!r}")
        self.graph = graph
        self.groups = tuple(groups)
        self._assignment = {n: assignment[n] for n in graph.nodes}
        self.labels = tuple(sorted(set(labels) if labels is not None else set(self._assignment.values())))
        self._counts = {n: np.asarray(unit_counts[n], dtype=np.int64) for n in graph.nodes}
        k = len(self.groups)
        tallies = {label: np.zeros(k, dtype=np.int64) for label in self.labels}
        for n, label in self._assignment.items():
            tallies[label] += self._counts[n]
        self._tallies = tallies
        self._cut = frozenset(
            (a, b) for a, b in graph.edges if self._assignment[a] != self._assignment[b]
        )
        self.step_index = step_index

    @classmethod
    def _raw(cls, graph, groups, labels, assignment, counts, tallies, cut, step_index):
        m = cls.__new__(cls)
        m.graph, m.groups, m.labels = graph, groups, labels
        m._assignment, m._counts, m._tallies, m._cut = assignment, counts, tallies, cut
        m.step_index = step_index
        return m

    # -- read access -------------------------------------------------------

    @property
    def assignment(self) -> Mapping[str, str]:
        return self._assignment

    @property
    def z(self) -> int:
        return len(self.labels)

    @property
    def cut_edges(self) -> frozenset:
        return self._cut

    def unit_counts(self, unit_id: str) -> np.ndarray:
        return self._counts[unit_id]

    def tally(self, label: str) -> np.ndarray:
        return self._tallies[label].copy()

    @property
    def district_tallies(self) -> dict[str, tuple[np.ndarray, int]]:
        return {label: (t.copy(), int(t.sum())) for label, t in self._tallies.items()}

    def tally_table(self) -> np.ndarray:
        """z-by-k array of group counts, rows in ``labels`` order."""
        return np.stack([self._tallies[label] for label in self.labels])

    def district_totals(self) -> np.ndarray:
        return np.array([int(self._tallies[label].sum()) for label in self.labels], dtype=np.int64)

    def members(self, label: str) -> list[str]:
        return [n for n, l in self._assignment.items() if l == label]

    def recomputed_tallies(self) -> dict[str, np.ndarray]:
        """Tallies summed from scratch; used to audit the incremental ones."""
        out = {label: np.zeros(len(self.groups), dtype=np.int64) for label in self.labels}
        for n, label in self._assignment.items():
            out[label] += self._counts[n]
        return out

    def __eq__(self, other):
        return (
            isinstance(other, DistrictMap)
            and self.step_index == other.step_index
            and self._assignment == other._assignment
        )

    def __repr__(self):
        return f"DistrictMap(z={self.z}, units={len(self._assignment)}, t={self.step_index})"

    # -- transitions -------------------------------------------------------

    def with_step(self, step_index: int) -> "DistrictMap":
        return DistrictMap._raw(
            self.graph, self.groups, self.labels, self._assignment, self._counts,
            self._tallies, self._cut, step_index,
        )

    def _relabel(self, chunk: Iterable[str], target: str) -> "DistrictMap":
        chunk = set(chunk)
        if not chunk:
            return self
        if target not in self._tallies:
            raise ContractError(f"unknown target district {target!r}")
        sources = {self._assignment[u] for u in chunk}
        if len(sources) != 1:
            raise ContractError(f"chunk spans several districts: {sorted(sources)}")
        (source,) = sources
        if source == target:
            raise ContractError("chunk already belongs to the target district")

        assignment = dict(self._assignment)
        delta = np.zeros(len(self.groups), dtype=np.int64)
        for u in chunk:
            assignment[u] = target
            delta += self._counts[u]
        tallies = dict(self._tallies)
        tallies[source] = tallies[source] - delta
        tallies[target] = tallies[target] + delta

        cut = set(self._cut)
        nbrs = self.graph.neighbors
        for u in chunk:
            for v in nbrs[u]:
                e = (u, v) if u < v else (v, u)
                if assignment[u] != assignment[v]:
                    cut.add(e)
                else:
                    cut.discard(e)
        return DistrictMap._raw(
            self.graph, self.groups, self.labels, assignment, self._counts,
            tallies, frozenset(cut), self.step_index,
        )


def from_crosswalk(
    crosswalk: Crosswalk,
    graph: AdjacencyGraph,
    units: Sequence[SpatialUnit],
    groups: Optional[Sequence[str]] = None,
) -> DistrictMap:
    """Build the t=0 seed map. Excluded units are dropped from the graph."""
    if groups is None:
        if not units:
            raise RegionError("no units")
        groups = list(units[0].populations)
    chain_graph = graph.restrict(crosswalk.assignment)
    if len(set(crosswalk.assignment.values())) < 2:
        raise RegionError("need at least two non-empty districts to run a chain")
    counts = {u.id: u.counts(groups) for u in units if u.id in crosswalk.assignment}
    return DistrictMap(chain_graph, crosswalk.assignment, counts, groups)


def apply_flip(dmap: DistrictMap, chunk: Iterable[str], target: str) -> DistrictMap:
    """Relabel ``chunk`` to ``target`` and advance the step counter.

    The chunk must sit in one source district and touch ``target`` through at
    least one graph edge.
    """
    chunk = set(chunk)
    if chunk:
        a = dmap.assignment
        nbrs = dmap.graph.neighbors
        if not any(a[v] == target for u in chunk for v in nbrs[u] if v not in chunk):
            raise ContractError(f"chunk does not touch district {target!r}")
    return dmap._relabel(chunk, target).with_step(dmap.step_index + 1)


def district_edges(dmap: DistrictMap, graph: Optional[AdjacencyGraph] = None) -> list[DistrictEdge]:
    """Every touching district pair with its full cut-edge set, sorted by pair."""
    if graph is not None and graph is not dmap.graph and graph != dmap.graph:
        raise ContractError("map was built over a different graph")
    a = dmap.assignment
    grouped: dict[tuple[str, str], set] = {}
    for e in dmap.cut_edges:
        la, lb = a[e[0]], a[e[1]]
        key = (la, lb) if la < lb else (lb, la)
        grouped.setdefault(key, set()).add(e)
    return [DistrictEdge(pair, frozenset(edges)) for pair, edges in sorted(grouped.items())]
