"""Ensemble sampling of counterfactual district maps scored by a multigroup entropy index."""

from .chain import ChainConfig, EntropyTrace, baseline_entropy, run_chain, run_ensemble
from .config import EngineConfig, load_config
from .diagnostics import EnsembleReport, gelman_rubin, one_sample_t_test, summarize
from .geo import (
    AdjacencyGraph,
    Crosswalk,
    HistoricalDistrict,
    SpatialUnit,
    build_adjacency,
    build_crosswalk,
    drop_empty_districts,
    intersection_area,
)
from .metrics import GroupSchema, Weighting, district_entropy, polsby_popper, region_entropy
from .partition import DistrictMap, apply_flip, district_edges, from_crosswalk
from .proposal import ProposalConfig, propose
from .validators import ValidatorConfig, validate

__version__ = "0.1.0"
