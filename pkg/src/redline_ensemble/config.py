"""Engine configuration: a flat ``key: value`` YAML document.

Grammar: one ``section.key: value`` pair per line, ``#`` comments allowed.
Recognized keys::

    chain.steps                   int     10000
    chain.burn_in_fraction        float   0.10
    chain.thinning                int     5
    chain.n_chains                int     100
    chain.base_seed               int     0
    chain.max_consecutive_rejects int     10000
    proposal.max_chunk_size       int     5
    proposal.enforce_contiguity   bool    true
    validators.min_population     int     50
    validators.std_lower_factor   float   0.75
    validators.std_upper_factor   float   1.25
    validators.std_ddof           int     1      (1 = sample std, 0 = population std)
    metrics.weighting             str     population_weighted | literal_paper
    metrics.groups                list    [White, Black, Asian, AIAN, NHPI, Other, TwoOrMore, Hispanic]
    placebo.replicates            int     100
    placebo.shared_shuffle        bool    false

Command-line flags override file values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .chain import ChainConfig
from .errors import IngestionError
from .metrics import GroupSchema, Weighting
from .proposal import ProposalConfig
from .validators import ValidatorConfig

__version__ = "0.1.0"

_KEYS = {
    "chain.steps": ("chain", "steps", int),
    "chain.burn_in_fraction": ("chain", "burn_in_fraction", float),
    "chain.thinning": ("chain", "thinning", int),
    "chain.n_chains": ("chain", "n_chains", int),
    "chain.base_seed": ("chain", "base_seed", int),
    "chain.max_consecutive_rejects": ("chain", "max_consecutive_rejects", int),
    "proposal.max_chunk_size": ("proposal", "max_chunk_size", int),
    "proposal.enforce_contiguity": ("proposal", "enforce_contiguity", bool),
    "validators.min_population": ("validators", "min_population", int),
    "validators.std_lower_factor": ("validators", "std_lower_factor", float),
    "validators.std_upper_factor": ("validators", "std_upper_factor", float),
    "validators.std_ddof": ("validators", "ddof", int),
    "metrics.weighting": ("metrics", "weighting", Weighting),
    "metrics.groups": ("metrics", "groups", list),
    "placebo.replicates": ("placebo", "replicates", int),
    "placebo.shared_shuffle": ("placebo", "shared_shuffle", bool),
}


@dataclass(frozen=True)
class EngineConfig:
    chain: ChainConfig = field(default_factory=ChainConfig)
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    validators: ValidatorConfig = field(default_factory=ValidatorConfig)
    schema: GroupSchema = field(default_factory=GroupSchema)
    weighting: Weighting = Weighting.POPULATION_WEIGHTED
    placebo_replicates: int = 100
    shared_shuffle: bool = False

    def flat(self) -> dict[str, Any]:
        """Every key with its effective value, in grammar order."""
        sections = {
            "chain": self.chain,
            "proposal": self.proposal,
            "validators": self.validators,
        }
        out = {}
        for key, (section, attr, _) in _KEYS.items():
            if section in sections:
                out[key] = getattr(sections[section], attr)
        out["metrics.weighting"] = self.weighting.value
        out["metrics.groups"] = list(self.schema.labels)
        out["placebo.replicates"] = self.placebo_replicates
        out["placebo.shared_shuffle"] = self.shared_shuffle
        return out

    def hash(self) -> str:
        blob = json.dumps(self.flat(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(key, kind, value):
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "yes", "no", "1", "0"):
            return value.lower() in ("true", "yes", "1")
        raise IngestionError(f"config key {key!r} expects a boolean, got {value!r}")
    if kind is list:
        if not isinstance(value, list):
            raise IngestionError(f"config key {key!r} expects a list")
        return [str(v) for v in value]
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise IngestionError(f"config key {key!r}: {exc}") from exc


def build_config(values: Optional[Mapping[str, Any]] = None) -> EngineConfig:
    """Turn flat ``section.key -> value`` pairs into an EngineConfig."""
    parts: dict[str, dict[str, Any]] = {"chain": {}, "proposal": {}, "validators": {}, "metrics": {}, "placebo": {}}
    for key, value in (values or {}).items():
        if key not in _KEYS:
            raise IngestionError(f"unknown config key {key!r}")
        section, attr, kind = _KEYS[key]
        parts[section][attr] = _coerce(key, kind, value)
    try:
        return EngineConfig(
            chain=ChainConfig(**parts["chain"]),
            proposal=ProposalConfig(**parts["proposal"]),
            validators=ValidatorConfig(**parts["validators"]),
            schema=GroupSchema(tuple(parts["metrics"].get("groups", GroupSchema().labels))),
            weighting=parts["metrics"].get("weighting", Weighting.POPULATION_WEIGHTED),
            placebo_replicates=parts["placebo"].get("replicates", 100),
            shared_shuffle=parts["placebo"].get("shared_shuffle", False),
        )
    except ValueError as exc:
        raise IngestionError(f"invalid configuration: {exc}") from exc


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> EngineConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise IngestionError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict) or any(isinstance(v, dict) for v in doc.values()):
            raise IngestionError("config must be a flat key-value document")
        values.update(doc)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


def with_chain(cfg: EngineConfig, **changes) -> EngineConfig:
    return replace(cfg, chain=replace(cfg.chain, **changes))
