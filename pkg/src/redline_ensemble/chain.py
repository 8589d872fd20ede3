"""Markov chain runner: burn-in, thinning, validation loop, multi-chain ensembles."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from .errors import ContractError, StuckChainError
from .geo import AdjacencyGraph
from .metrics import GroupSchema, Weighting, entropy_from_tallies, region_entropy
from .partition import DistrictMap
from .proposal import ProposalConfig, propose
from .validators import ValidatorConfig, describe, validate_lower_bound, validate_std

if TYPE_CHECKING:
    from .config import EngineConfig

log = logging.getLogger(__name__)

THREADS_ENV = "ENSEMBLE_THREADS"


@dataclass(frozen=True)
class ChainConfig:
    steps: int = 10_000
    burn_in_fraction: float = 0.10
    thinning: int = 5
    n_chains: int = 100
    base_seed: int = 0
    max_consecutive_rejects: int = 10_000

    def __post_init__(self):
        if self.steps < 1 or self.thinning < 1 or self.n_chains < 1 or self.max_consecutive_rejects < 1:
            raise ValueError("steps, thinning, n_chains and max_consecutive_rejects must be positive")
        if not 0 <= self.burn_in_fraction < 1:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be an unsigned 64-bit integer")
        if self.n_retained < 2:
            raise ValueError(
                f"steps={self.steps}, burn_in={self.burn_in_fraction}, thinning={self.thinning} "
                "retain fewer than two samples"
            )

    @property
    def burn_in_steps(self) -> int:
        # round first so 0.1 * 10_000 style products cannot land one below the integer
        return int(np.floor(round(self.steps * self.burn_in_fraction, 9)))

    @property
    def n_retained(self) -> int:
        return (self.steps - self.burn_in_steps) // self.thinning

    def is_retained(self, t: int) -> bool:
        b = self.burn_in_steps
        return t > b and (t - b) % self.thinning == 0


@dataclass
class EntropyTrace:
    chain_id: int
    seed: int
    values: list[float]
    steps: list[int]
    accept_count: int = 0
    reject_count: int = 0
    total_steps: int = 0
    final_assignment: Optional[dict] = None
    maps: Optional[list] = None
    reject_reasons: dict = field(default_factory=lambda: {"lower_bound": 0, "std": 0})

    @property
    def acceptance_rate(self) -> float:
        n = self.accept_count + self.reject_count
        return self.accept_count / n if n else 0.0

    def to_json(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "seed": self.seed,
            "values": self.values,
            "steps": self.steps,
            "accept_count": self.accept_count,
            "reject_count": self.reject_count,
            "total_steps": self.total_steps,
            "reject_reasons": dict(self.reject_reasons),
        }


def derive_seed(base_seed: int, *path: int) -> int:
    """Split ``base_seed`` into an independent 64-bit child seed for ``path``.

    Uses numpy's SeedSequence spawn keys, so children of one base seed do not
    share correlated streams the way ``base_seed + i`` would.
    """
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


class Chain:
    """A single chain that can be advanced in pieces and snapshotted.

    ``run_chain`` is the one-shot wrapper. Step ``t`` runs one proposal; a
    rejected proposal keeps the current map but still consumes the step.
    """

    def __init__(
        self,
        seed_map: DistrictMap,
        graph: AdjacencyGraph,
        proposal_cfg: ProposalConfig,
        validator_cfg: ValidatorConfig,
        chain_cfg: ChainConfig,
        chain_id: int = 0,
        weighting=Weighting.POPULATION_WEIGHTED,
        seed: Optional[int] = None,
        keep_maps: bool = False,
    ):
        if validator_cfg.s0 is None:
            validator_cfg = validator_cfg.calibrated(seed_map)
        if not (validate_lower_bound(seed_map, validator_cfg) and validate_std(seed_map, validator_cfg)):
            raise ContractError("seed map fails validation: " + describe(seed_map, validator_cfg))
        self.seed_map = seed_map
        self.graph = graph
        self.proposal_cfg = proposal_cfg
        self.validator_cfg = validator_cfg
        self.chain_cfg = chain_cfg
        self.chain_id = chain_id
        self.weighting = Weighting(weighting)
        self.seed = derive_seed(chain_cfg.base_seed, chain_id) if seed is None else int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.keep_maps = keep_maps

        self.state = seed_map.with_step(0)
        self.t = 0
        self.accepts = 0
        self.rejects = 0
        self.accepts_after_burn_in = 0
        self.consecutive_rejects = 0
        self.reject_reasons = {"lower_bound": 0, "std": 0}
        self.values: list[float] = []
        self.kept_steps: list[int] = []
        self.maps: list[dict] = []

    @property
    def done(self) -> bool:
        return self.t >= self.chain_cfg.steps

    def step(self) -> None:
        candidate = propose(self.state, self.graph, self.proposal_cfg, self.rng)
        self.t += 1
        lower_ok = validate_lower_bound(candidate, self.validator_cfg)
        std_ok = lower_ok and validate_std(candidate, self.validator_cfg)
        if std_ok:
            self.state = candidate
            self.accepts += 1
            self.consecutive_rejects = 0
            if self.t > self.chain_cfg.burn_in_steps:
                self.accepts_after_burn_in += 1
        else:
            self.state = self.state.with_step(self.t)
            self.rejects += 1
            self.consecutive_rejects += 1
            self.reject_reasons["lower_bound" if not lower_ok else "std"] += 1
            if self.consecutive_rejects >= self.chain_cfg.max_consecutive_rejects:
                raise StuckChainError(
                    f"chain {self.chain_id} rejected {self.consecutive_rejects} proposals in a row "
                    f"at step {self.t}; rejects by validator {self.reject_reasons}; "
                    f"last candidate: {describe(candidate, self.validator_cfg)}"
                )
        if self.chain_cfg.is_retained(self.t):
            self.values.append(entropy_from_tallies(self.state.tally_table(), self.weighting).H)
            self.kept_steps.append(self.t)
            if self.keep_maps:
                self.maps.append(dict(self.state.assignment))

    def advance(self, n_steps: Optional[int] = None) -> "Chain":
        stop = self.chain_cfg.steps if n_steps is None else min(self.chain_cfg.steps, self.t + n_steps)
        while self.t < stop:
            self.step()
        return self

    def trace(self) -> EntropyTrace:
        if self.done and self.chain_cfg.steps > self.chain_cfg.burn_in_steps and self.accepts_after_burn_in == 0:
            raise StuckChainError(
                f"chain {self.chain_id} accepted nothing after burn-in; rejects by validator "
                f"{self.reject_reasons}"
            )
        log.debug("chain %d acceptance rate %.3f", self.chain_id, self.accepts / max(self.t, 1))
        return EntropyTrace(
            chain_id=self.chain_id,
            seed=self.seed,
            values=list(self.values),
            steps=list(self.kept_steps),
            accept_count=self.accepts,
            reject_count=self.rejects,
            total_steps=self.t,
            final_assignment=dict(self.state.assignment),
            maps=list(self.maps) if self.keep_maps else None,
            reject_reasons=dict(self.reject_reasons),
        )

    def snapshot(self) -> dict:
        """JSON-serializable state, including the RNG, for exact resumption."""
        return {
            "chain_id": self.chain_id,
            "seed": self.seed,
            "t": self.t,
            "assignment": dict(self.state.assignment),
            "rng_state": self.rng.bit_generator.state,
            "accepts": self.accepts,
            "rejects": self.rejects,
            "accepts_after_burn_in": self.accepts_after_burn_in,
            "consecutive_rejects": self.consecutive_rejects,
            "reject_reasons": dict(self.reject_reasons),
            "values": list(self.values),
            "kept_steps": list(self.kept_steps),
            "maps": list(self.maps),
        }

    @classmethod
    def resume(cls, snapshot: dict, seed_map, graph, proposal_cfg, validator_cfg, chain_cfg, weighting=Weighting.POPULATION_WEIGHTED, keep_maps=False) -> "Chain":
        chain = cls(
            seed_map, graph, proposal_cfg, validator_cfg, chain_cfg,
            chain_id=snapshot["chain_id"], weighting=weighting, seed=snapshot["seed"], keep_maps=keep_maps,
        )
        counts = {n: seed_map.unit_counts(n) for n in graph.nodes}
        chain.state = DistrictMap(graph, snapshot["assignment"], counts, seed_map.groups, seed_map.labels, snapshot["t"])
        chain.rng.bit_generator.state = snapshot["rng_state"]
        chain.t = snapshot["t"]
        chain.accepts = snapshot["accepts"]
        chain.rejects = snapshot["rejects"]
        chain.accepts_after_burn_in = snapshot["accepts_after_burn_in"]
        chain.consecutive_rejects = snapshot["consecutive_rejects"]
        chain.reject_reasons = dict(snapshot["reject_reasons"])
        chain.values = list(snapshot["values"])
        chain.kept_steps = list(snapshot["kept_steps"])
        chain.maps = list(snapshot["maps"])
        return chain


def run_chain(
    seed_map: DistrictMap,
    graph: AdjacencyGraph,
    proposal_cfg: ProposalConfig,
    validator_cfg: ValidatorConfig,
    chain_cfg: ChainConfig,
    chain_id: int = 0,
    weighting=Weighting.POPULATION_WEIGHTED,
    seed: Optional[int] = None,
    keep_maps: bool = False,
) -> EntropyTrace:
    """Run one full chain and return its retained entropy values."""
    chain = Chain(seed_map, graph, proposal_cfg, validator_cfg, chain_cfg, chain_id, weighting, seed, keep_maps)
    return chain.advance().trace()


def baseline_entropy(seed_map: DistrictMap, schema: Optional[GroupSchema] = None, weighting=Weighting.POPULATION_WEIGHTED) -> float:
    return region_entropy(seed_map, schema, weighting).H


def worker_count(n_tasks: int, requested: Optional[int] = None) -> int:
    cap = requested
    if cap is None:
        env = os.environ.get(THREADS_ENV)
        cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _run_job(args):
    return run_chain(*args)


def run_jobs(jobs: list[tuple], on_trace: Optional[Callable] = None, workers: Optional[int] = None) -> list[EntropyTrace]:
    """Run ``run_chain`` argument tuples, returning traces in job order.

    ``on_trace`` is called with each trace as soon as it finishes, so callers
    can persist results before a later chain fails. On failure the first error
    is re-raised with the finished traces attached as ``.partial``.
    """
    n = worker_count(len(jobs), workers)
    results: dict[int, EntropyTrace] = {}
    error = None
    if n == 1:
        for i, job in enumerate(jobs):
            try:
                results[i] = _run_job(job)
            except Exception as exc:
                error = exc
                break
            if on_trace:
                on_trace(results[i])
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            futures = {pool.submit(_run_job, job): i for i, job in enumerate(jobs)}
            for fut in as_completed(futures):
                try:
                    trace = fut.result()
                except Exception as exc:
                    if error is None:
                        error = exc
                        for f in futures:
                            f.cancel()
                    continue
                results[futures[fut]] = trace
                if on_trace:
                    on_trace(trace)
    if error is not None:
        error.partial = [results[i] for i in sorted(results)]
        raise error
    return [results[i] for i in range(len(jobs))]


def run_ensemble(
    seed_map: DistrictMap,
    graph: AdjacencyGraph,
    cfgs: "EngineConfig",
    on_trace: Optional[Callable] = None,
    workers: Optional[int] = None,
    keep_maps: bool = False,
) -> list[EntropyTrace]:
    """Run ``cfgs.chain.n_chains`` independent chains from one seed map.

    Chain ``i`` is seeded with ``derive_seed(base_seed, i)``; output order is
    chain order regardless of which worker finishes first.
    """
    vcfg = cfgs.validators if cfgs.validators.s0 is not None else cfgs.validators.calibrated(seed_map)
    jobs = [
        (seed_map, graph, cfgs.proposal, vcfg, cfgs.chain, i, cfgs.weighting, None, keep_maps)
        for i in range(cfgs.chain.n_chains)
    ]
    return run_jobs(jobs, on_trace, workers)
