"""Synthetic grid regions with planted segregation, for tests and demos."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import box

from .geo import HistoricalDistrict, SpatialUnit
from .io import BLOCKS_FILE, DISTRICTS_FILE, meta, write_districts, write_units
from .metrics import DEFAULT_GROUPS

UNIT_POP_RANGE = (60, 140)


def unit_id(r: int, c: int) -> str:
    return f"r{r:03d}c{c:03d}"


def _block_shape(n: int) -> tuple[int, int]:
    # most square a x b factorization of n
    a = int(math.isqrt(n))
    while n % a:
        a -= 1
    return a, n // a


def planted_labels(rows: int, cols: int, n_districts: int) -> np.ndarray:
    """rows x cols array of district indices, laid out as a block grid."""
    a, b = _block_shape(n_districts)
    if a > rows or b > cols:
        a, b = b, a
    if a > rows or b > cols:
        raise ValueError(f"cannot lay out {n_districts} districts on a {rows}x{cols} grid")
    r_edges = np.linspace(0, rows, a + 1).round().astype(int)
    c_edges = np.linspace(0, cols, b + 1).round().astype(int)
    lab = np.empty((rows, cols), dtype=int)
    for i in range(a):
        for j in range(b):
            lab[r_edges[i]:r_edges[i + 1], c_edges[j]:c_edges[j + 1]] = i * b + j
    return lab


def make_region(
    rows: int,
    cols: int,
    n_districts: int,
    segregation_level: float,
    seed: int = 0,
    groups: Sequence[str] = DEFAULT_GROUPS,
) -> tuple[list[SpatialUnit], list[HistoricalDistrict]]:
    """Grid of unit squares whose group mix is tied to planted districts.

    Each unit draws its population uniformly from ``UNIT_POP_RANGE`` and its
    group counts from a multinomial with probabilities
    ``(1 - level) * uniform + level * onehot(dominant group of its district)``.
    District ``d`` is dominated by group ``d mod k``. Level 0 mixes every unit
    the same way; level 1 puts each district's residents in a single group.
    """
    if not 2 <= n_districts <= rows * cols:
        raise ValueError("need 2 <= n_districts <= rows * cols")
    if not 0 <= segregation_level <= 1:
        raise ValueError("segregation_level must lie in [0, 1]")
    groups = list(groups)
    k = len(groups)
    rng = np.random.default_rng(seed)
    lab = planted_labels(rows, cols, n_districts)
    base = np.full(k, 1.0 / k)

    units = []
    cells: dict[int, list] = {d: [] for d in range(n_districts)}
    for r in range(rows):
        for c in range(cols):
            d = int(lab[r, c])
            p = (1 - segregation_level) * base
            p[d % k] += segregation_level
            pop = int(rng.integers(UNIT_POP_RANGE[0], UNIT_POP_RANGE[1] + 1))
            counts = rng.multinomial(pop, p / p.sum())
            geom = box(c, r, c + 1, r + 1)
            cells[d].append(geom)
            units.append(SpatialUnit.make(unit_id(r, c), geom, dict(zip(groups, counts.tolist())), validate=False))
    width = len(str(n_districts))
    districts = [
        HistoricalDistrict(f"D{d + 1:0{width}d}", shapely.union_all(cells[d]).normalize())
        for d in range(n_districts)
    ]
    return units, districts


def write_region(out_dir: Path, rows, cols, n_districts, segregation_level, seed=0, groups=DEFAULT_GROUPS) -> Path:
    units, districts = make_region(rows, cols, n_districts, segregation_level, seed, groups)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    md = meta() | {
        "synth": {"rows": rows, "cols": cols, "n_districts": n_districts,
                  "segregation_level": segregation_level, "seed": seed}
    }
    write_units(out / BLOCKS_FILE, units, md)
    write_districts(out / DISTRICTS_FILE, districts, md)
    return out
