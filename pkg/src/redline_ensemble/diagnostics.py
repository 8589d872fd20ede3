"""Convergence and significance statistics over finished traces."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ContractError, DegenerateVarianceError

# p-values below this print as "<2.2e-16" and serialize as 0.0
P_FLOOR = 2.2e-16
R_HAT_CONVERGED = 1.2


def gelman_rubin(X) -> float:
    """Gelman-Rubin ratio for an m-by-n matrix (row i = chain i).

    Returns ``V_hat / W`` without a square root, where ``W`` is the mean
    within-chain sample variance and
    ``V_hat = W (n-1)/n + sum_i (mean_i - grand_mean)^2 / (m-1)``.
    Values below 1.2 are read as converged.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ContractError("trace matrix must be 2-d")
    m, n = X.shape
    if m < 2 or n < 2:
        raise ContractError(f"need at least 2 chains and 2 draws, got {m}x{n}")
    chain_means = X.mean(axis=1)
    W = float(((X - chain_means[:, None]) ** 2).sum() / (m * (n - 1)))
    if W <= 0:
        raise DegenerateVarianceError("within-chain variance is zero")
    between = float(((chain_means - chain_means.mean()) ** 2).sum() / (m - 1))
    V_hat = W * (n - 1) / n + between
    return V_hat / W


def one_sample_t_test(values: Sequence[float], baseline: float) -> tuple[float, float]:
    """Two-sided one-sample t-test of ``mean(values)`` against ``baseline``.

    ``t = (mean - baseline) / (s / sqrt(N))`` with the N-1 sample standard
    deviation; ``p`` is the two-sided Student-t tail with N-1 degrees of
    freedom.
    """
    x = np.asarray(values, dtype=float)
    N = x.size
    if N < 2:
        raise ContractError("t-test needs at least two values")
    s = float(x.std(ddof=1))
    # a constant sample can leave rounding residue in std, so test the values
    if s == 0 or np.all(x == x[0]):
        raise DegenerateVarianceError("sample has zero variance")
    t = (float(x.mean()) - baseline) / (s / math.sqrt(N))
    p = float(2 * stats.t.sf(abs(t), N - 1))
    return t, min(p, 1.0)


def format_p(p: float) -> str:
    return "<2.2e-16" if p < P_FLOOR else f"{p:.3g}"


def machine_p(p: float) -> float:
    return 0.0 if p < P_FLOOR else p


@dataclass
class CompactnessSummary:
    seed_min: float
    seed_mean: float
    end_min: float
    end_mean: float
    passed: bool


@dataclass
class EnsembleReport:
    baseline: float
    ensemble_mean: float
    abs_difference: float
    t_value: float
    p_value: float
    r_hat: Optional[float]
    sqrt_r_hat: Optional[float]
    n_samples: int
    n_chains: int
    steps_per_chain: int
    per_chain_means: list[float] = field(default_factory=list)
    compactness: Optional[CompactnessSummary] = None
    region: str = ""

    @property
    def converged(self) -> Optional[bool]:
        return None if self.r_hat is None else self.r_hat < R_HAT_CONVERGED

    @property
    def total_steps(self) -> int:
        return self.n_chains * self.steps_per_chain

    def to_json(self) -> dict:
        d = asdict(self)
        d["p_value"] = machine_p(self.p_value)
        d["p_value_display"] = format_p(self.p_value)
        d["converged"] = self.converged
        d["total_steps"] = self.total_steps
        return d

    # summary-table column order
    CSV_COLUMNS = ("region", "baseline", "mean", "abs_difference", "t_value", "p_value", "r_hat")

    def csv_row(self) -> list:
        return [
            self.region,
            f"{self.baseline:.6f}",
            f"{self.ensemble_mean:.6f}",
            f"{self.abs_difference:.6f}",
            f"{self.t_value:.4f}",
            repr(machine_p(self.p_value)),
            "" if self.r_hat is None else f"{self.r_hat:.6f}",
        ]

    def table_line(self) -> str:
        r = "n/a" if self.r_hat is None else f"{self.r_hat:.3f}"
        return (
            f"{self.region or 'region'}: baseline {self.baseline:.3f}  mean {self.ensemble_mean:.3f}  "
            f"AD {self.abs_difference:.3f}  t {self.t_value:.1f}  p {format_p(self.p_value)}  R {r}"
        )


def summarize(traces, baseline: float, compactness: Optional[CompactnessSummary] = None, region: str = "") -> EnsembleReport:
    """Pool every chain's retained values and test them against ``baseline``."""
    traces = list(traces)
    if not traces:
        raise ContractError("no traces to summarize")
    pooled = np.concatenate([np.asarray(t.values, dtype=float) for t in traces])
    mean = float(pooled.mean())
    t_value, p_value = one_sample_t_test(pooled, baseline)
    r_hat = None
    if len(traces) < 2:
        warnings.warn("single chain: Gelman-Rubin statistic omitted", RuntimeWarning, stacklevel=2)
    else:
        r_hat = gelman_rubin(np.array([t.values for t in traces], dtype=float))
    return EnsembleReport(
        baseline=baseline,
        ensemble_mean=mean,
        abs_difference=abs(baseline - mean),
        t_value=t_value,
        p_value=p_value,
        r_hat=r_hat,
        sqrt_r_hat=None if r_hat is None else math.sqrt(r_hat),
        n_samples=int(pooled.size),
        n_chains=len(traces),
        steps_per_chain=max(t.total_steps for t in traces),
        per_chain_means=[float(np.mean(t.values)) for t in traces],
        compactness=compactness,
        region=region,
    )
