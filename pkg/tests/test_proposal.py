from collections import deque

import numpy as np
import pytest

from redline_ensemble.partition import district_edges
from redline_ensemble.proposal import ProposalConfig, propose, source_is_connected_after_removal

from .conftest import grid_map, random_pops


def induced_connected(nodes, graph):
    nodes = set(nodes)
    if not nodes:
        return True
    start = next(iter(nodes))
    seen, todo = {start}, deque([start])
    while todo:
        u = todo.popleft()
        for v in graph.neighbors[u]:
            if v in nodes and v not in seen:
                seen.add(v)
                todo.append(v)
    return seen == nodes


def test_config_rejects_zero_chunk():
    with pytest.raises(ValueError):
        ProposalConfig(max_chunk_size=0)


class TestConnectivityGuard:
    def path_map(self):
        # district "p" is the path c0-c1-c2, "q" is c3
        return grid_map(1, 4, lambda r, c: "p" if c < 3 else "q")[0]

    def test_articulation(self):
        m = self.path_map()
        assert not source_is_connected_after_removal(m, m.graph, {"r000c001"})

    def test_leaf(self):
        m = self.path_map()
        assert source_is_connected_after_removal(m, m.graph, {"r000c000"})

    def test_whole_district(self):
        m = self.path_map()
        assert source_is_connected_after_removal(m, m.graph, {"r000c000", "r000c001", "r000c002"})

    def test_matches_bruteforce_on_grid(self):
        m, _ = grid_map(4, 4, lambda r, c: "a" if c < 3 else "b")
        members = m.members("a")
        rng = np.random.default_rng(0)
        for _ in range(200):
            size = int(rng.integers(1, 4))
            chunk = set(rng.choice(members, size=size, replace=False).tolist())
            expect = induced_connected(set(members) - chunk, m.graph)
            assert source_is_connected_after_removal(m, m.graph, chunk) == expect


class TestPropose:
    def test_single_unit_chunks(self):
        m, _ = grid_map(4, 4, lambda r, c: "a" if c < 2 else "b", random_pops(0))
        rng = np.random.default_rng(1)
        for _ in range(50):
            rec = []
            propose(m, m.graph, ProposalConfig(max_chunk_size=1), rng, record=rec)
            assert all(len(r.chunk) == 1 for r in rec)

    def test_two_districts_one_subflip(self):
        m, _ = grid_map(4, 4, lambda r, c: "a" if c < 2 else "b", random_pops(0))
        rng = np.random.default_rng(2)
        for _ in range(100):
            rec = []
            propose(m, m.graph, ProposalConfig(), rng, record=rec)
            assert len(rec) <= 1
            assert len(district_edges(m)) == 1

    def test_seed_coverage_6x6(self):
        m, _ = grid_map(6, 6, lambda r, c: "a" if c < 3 else "b", random_pops(3))
        # exhaustive boundary enumeration: units with a neighbour in the other district
        boundary = {
            u for u in m.graph.nodes
            if any(m.assignment[v] != m.assignment[u] for v in m.graph.neighbors[u])
        }
        assert len(boundary) == 12
        rng = np.random.default_rng(4)
        seen = set()
        for _ in range(10_000):
            rec = []
            propose(m, m.graph, ProposalConfig(), rng, record=rec)
            seen.update(r.seed_unit for r in rec)
        assert seen == boundary

    def test_deterministic(self):
        m, _ = grid_map(5, 5, lambda r, c: "abc"[min(c // 2, 2)], random_pops(5))
        cfg = ProposalConfig(rng_seed=99)
        assert propose(m, m.graph, cfg).assignment == propose(m, m.graph, cfg).assignment
        a = propose(m, m.graph, cfg, np.random.default_rng(5))
        b = propose(m, m.graph, cfg, np.random.default_rng(5))
        assert a.assignment == b.assignment and a.step_index == b.step_index == 1

    def test_chunks_connected_and_local(self):
        m, _ = grid_map(6, 6, lambda r, c: "abc"[c // 2], random_pops(6))
        rng = np.random.default_rng(8)
        cfg = ProposalConfig(max_chunk_size=6)
        for _ in range(300):
            rec = []
            cand = propose(m, m.graph, cfg, rng, record=rec)
            moved = {u for u in m.graph.nodes if cand.assignment[u] != m.assignment[u]}
            touched = set().union(*(r.chunk for r in rec)) if rec else set()
            assert moved <= touched
            state = dict(m.assignment)
            for r in rec:
                assert all(state[u] == r.source for u in r.chunk)
                assert induced_connected(r.chunk, m.graph)
                for u in r.chunk:
                    state[u] = r.target
            m = cand

    def test_contiguity_kept(self):
        m, _ = grid_map(6, 6, lambda r, c: "abc"[c // 2], random_pops(9))
        rng = np.random.default_rng(10)
        for _ in range(500):
            m = propose(m, m.graph, ProposalConfig(), rng)
            for label in m.labels:
                assert induced_connected(m.members(label), m.graph)

    def test_step_advances(self):
        m, _ = grid_map(1, 2, lambda r, c: "ab"[c])
        out = propose(m, m.graph, ProposalConfig(), np.random.default_rng(0))
        assert out.step_index == 1
