"""File formats: GeoJSON in, CSV/JSON out.

Every written CSV starts with a ``# engine=... config_hash=...`` comment line
and every JSON document carries the same data under ``"_meta"``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence

from shapely.geometry import mapping, shape

from .errors import IngestionError
from .geo import AdjacencyGraph, Crosswalk, HistoricalDistrict, SpatialUnit

log = logging.getLogger(__name__)

ENGINE = "redline_ensemble"
VERSION = "0.1.0"

BLOCKS_FILE = "blocks.geojson"
DISTRICTS_FILE = "districts.geojson"


def meta(config_hash: str = "") -> dict:
    return {"engine": ENGINE, "version": VERSION, "config_hash": config_hash}


def header_line(config_hash: str = "") -> str:
    return f"# engine={ENGINE} version={VERSION} config_hash={config_hash}\n"


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence], config_hash: str = "") -> None:
    buf = io.StringIO()
    buf.write(header_line(config_hash))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def read_csv(path: Path) -> list[dict]:
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path: Path, payload: dict, config_hash: str = "") -> None:
    doc = {"_meta": meta(config_hash), **payload}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def _load_features(path: Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"missing input file {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path} is not valid JSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise IngestionError(f"{path} is not a GeoJSON FeatureCollection")
    return doc.get("features", [])


def _feature_id(feat: dict, idx: int, path: Path):
    props = feat.get("properties") or {}
    fid = props.get("id", feat.get("id"))
    if fid is None:
        raise IngestionError(f"{path.name}: feature {idx} has no 'id'")
    return str(fid)


def read_units(path: Path, groups: Sequence[str]) -> list[SpatialUnit]:
    """Block groups with one numeric property per group label.

    A ``total`` property, when present, is checked against the group sum; the
    group sum always wins.
    """
    path = Path(path)
    units = []
    for idx, feat in enumerate(_load_features(path)):
        uid = _feature_id(feat, idx, path)
        props = feat.get("properties") or {}
        pops = {}
        for g in groups:
            if g not in props:
                raise IngestionError(f"{path.name}: feature {idx} (id={uid!r}) lacks group property {g!r}")
            value = props[g]
            if not isinstance(value, (int, float)) or value < 0 or value != int(value):
                raise IngestionError(
                    f"{path.name}: feature {idx} (id={uid!r}) property {g!r} must be a non-negative integer"
                )
            pops[g] = int(value)
        unit = SpatialUnit.make(uid, shape(feat["geometry"]), pops)
        if "total" in props and props["total"] is not None and int(props["total"]) != unit.total:
            log.warning("unit %s: 'total'=%s differs from the group sum %s; using the sum", uid, props["total"], unit.total)
        units.append(unit)
    ids = [u.id for u in units]
    if len(set(ids)) != len(ids):
        raise IngestionError(f"{path.name}: duplicate unit ids")
    return units


def read_districts(path: Path) -> list[HistoricalDistrict]:
    path = Path(path)
    out = []
    for idx, feat in enumerate(_load_features(path)):
        props = feat.get("properties") or {}
        if "label" not in props:
            raise IngestionError(f"{path.name}: feature {idx} lacks property 'label'")
        out.append(HistoricalDistrict(str(props["label"]), shape(feat["geometry"]), props.get("grade")))
    return out


def read_region(region_dir: Path, groups: Sequence[str]):
    region_dir = Path(region_dir)
    return read_units(region_dir / BLOCKS_FILE, groups), read_districts(region_dir / DISTRICTS_FILE)


def write_units(path: Path, units: Sequence[SpatialUnit], metadata: Optional[dict] = None) -> None:
    feats = [
        {
            "type": "Feature",
            "properties": {"id": u.id, **dict(u.populations), "total": u.total},
            "geometry": mapping(u.geometry),
        }
        for u in units
    ]
    _write_collection(path, feats, metadata)


def write_districts(path: Path, districts: Sequence[HistoricalDistrict], metadata: Optional[dict] = None) -> None:
    feats = [
        {
            "type": "Feature",
            "properties": {"label": d.label, "grade": d.grade},
            "geometry": mapping(d.geometry),
        }
        for d in districts
    ]
    _write_collection(path, feats, metadata)


def _write_collection(path, feats, metadata):
    doc = {"type": "FeatureCollection", "metadata": metadata or meta(), "features": feats}
    Path(path).write_text(json.dumps(doc) + "\n")


def write_crosswalk(path: Path, crosswalk: Crosswalk, config_hash: str = "") -> None:
    rows = [(u, label, f"{uf:.12g}", f"{bf:.12g}") for u, label, uf, bf in crosswalk.audit_rows()]
    write_csv(path, ("unit_id", "assigned_label", "union_fraction", "best_fraction"), rows, config_hash)


def write_graph(path: Path, graph: AdjacencyGraph, config_hash: str = "") -> None:
    write_json(path, graph.to_json(), config_hash)


def read_graph(path: Path) -> AdjacencyGraph:
    return AdjacencyGraph.from_json(read_json(path))


def write_assignment(path: Path, assignment: dict, config_hash: str = "") -> None:
    write_csv(path, ("unit_id", "district_label"), sorted(assignment.items()), config_hash)


def write_trace(path: Path, trace, config_hash: str = "") -> None:
    rows = [(s, repr(float(h))) for s, h in zip(trace.steps, trace.values)]
    write_csv(path, ("step", "H"), rows, config_hash)


def read_trace_values(path: Path) -> tuple[list[int], list[float]]:
    rows = read_csv(path)
    return [int(r["step"]) for r in rows], [float(r["H"]) for r in rows]
