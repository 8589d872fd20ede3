"""Accept/reject gate for proposed maps."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ContractError, RegionError
from .partition import DistrictMap


@dataclass(frozen=True)
class ValidatorConfig:
    """Thresholds for the two validators.

    ``s0`` is the spread of district populations in the seed map. It is left
    unset in configuration files and filled once per chain by ``calibrated``.
    ``ddof=1`` gives the sample standard deviation (divisor z-1).
    """

    min_population: int = 50
    std_lower_factor: float = 0.75
    std_upper_factor: float = 1.25
    s0: Optional[float] = None
    ddof: int = 1

    def __post_init__(self):
        if not 0 < self.std_lower_factor < 1 < self.std_upper_factor:
            raise ValueError("need 0 < std_lower_factor < 1 < std_upper_factor")
        if self.min_population < 0:
            raise ValueError("min_population must be non-negative")
        if self.ddof not in (0, 1):
            raise ValueError("ddof must be 0 or 1")
        if self.s0 is not None and not self.s0 > 0:
            raise ValueError("s0 must be positive")

    def calibrated(self, seed_map: DistrictMap) -> "ValidatorConfig":
        s0 = population_std(seed_map, self.ddof)
        if not s0 > 0:
            raise RegionError(
                "seed map districts all have the same population; "
                "the standard-deviation bracket would be empty"
            )
        return replace(self, s0=s0)


def population_std(dmap: DistrictMap, ddof: int = 1) -> float:
    totals = dmap.district_totals()
    if len(totals) < 2:
        raise ContractError("population spread needs at least two districts")
    return float(np.std(totals, ddof=ddof))


def validate_lower_bound(dmap: DistrictMap, cfg: ValidatorConfig) -> bool:
    return int(dmap.district_totals().min()) >= cfg.min_population


def validate_std(dmap: DistrictMap, cfg: ValidatorConfig) -> bool:
    if cfg.s0 is None:
        raise ContractError("ValidatorConfig.s0 is unset; call calibrated(seed_map) first")
    s = population_std(dmap, cfg.ddof)
    return cfg.std_lower_factor * cfg.s0 <= s <= cfg.std_upper_factor * cfg.s0


def validate(dmap: DistrictMap, cfg: ValidatorConfig) -> bool:
    return validate_lower_bound(dmap, cfg) and validate_std(dmap, cfg)


def describe(dmap: DistrictMap, cfg: ValidatorConfig) -> str:
    """One-line summary of both validator statistics, for error messages."""
    totals = dmap.district_totals()
    s = population_std(dmap, cfg.ddof)
    lo = cfg.std_lower_factor * cfg.s0 if cfg.s0 else float("nan")
    hi = cfg.std_upper_factor * cfg.s0 if cfg.s0 else float("nan")
    return (
        f"min district population {int(totals.min())} (floor {cfg.min_population}); "
        f"population std {s:.3f} (allowed [{lo:.3f}, {hi:.3f}])"
    )
