from __future__ import annotations

import numpy as np
import pytest
from shapely.geometry import box

from redline_ensemble.geo import Crosswalk, SpatialUnit, build_adjacency, build_crosswalk, drop_empty_districts
from redline_ensemble.partition import from_crosswalk
from redline_ensemble.synth import make_region

GROUPS2 = ("A", "B")


def grid_units(rows, cols, counts=None, groups=GROUPS2):
    """Unit squares; ``counts(r, c)`` gives the per-group vector."""
    units = []
    for r in range(rows):
        for c in range(cols):
            vec = counts(r, c) if counts else [100] + [0] * (len(groups) - 1)
            units.append(SpatialUnit.make(f"r{r:03d}c{c:03d}", box(c, r, c + 1, r + 1), dict(zip(groups, vec))))
    return units


def grid_map(rows, cols, label_of, counts=None, groups=GROUPS2):
    """Seed map over a grid with labels from ``label_of(r, c)``."""
    units = grid_units(rows, cols, counts, groups)
    graph = build_adjacency(units)
    assignment = {}
    for u in units:
        r, c = int(u.id[1:4]), int(u.id[5:8])
        assignment[u.id] = label_of(r, c)
    cw = Crosswalk(assignment, set())
    return from_crosswalk(cw, graph, units, groups), units


@pytest.fixture(scope="session")
def synthetic_region():
    units, districts = make_region(10, 10, 4, 0.8, seed=0)
    crosswalk = drop_empty_districts(build_crosswalk(units, districts), units)
    graph = build_adjacency(units)
    seed_map = from_crosswalk(crosswalk, graph, units)
    return units, districts, crosswalk, seed_map


def random_pops(seed):
    rng = np.random.default_rng(seed)
    return lambda r, c: rng.integers(50, 150, size=2).tolist()


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
