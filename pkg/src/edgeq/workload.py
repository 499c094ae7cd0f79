"""Seeded arrival- and service-process generators.

Every generator is a pure function of its parameters and a SeededStream;
identical (seed, stream_id) pairs reproduce identical draws bit for bit.
Substreams are built on numpy's Philox counter-based generator keyed
through SeedSequence(seed, spawn_key=(stream_id,)), which guarantees
statistically independent streams for distinct stream ids.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, UnreachableScv
from .specs import SinusoidProfile

RENEWAL_FAMILIES = ("exponential", "hyperexponential2", "erlang", "deterministic", "lognormal")


@dataclass(frozen=True)
class SeededStream:
    """Independent random substream selector: (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, offset: int) -> "SeededStream":
        """Stream with the id shifted by offset; used for replications."""
        return SeededStream(self.seed, self.stream_id + offset)


@dataclass(frozen=True)
class RenewalSpec:
    """Inter-arrival or service time distribution with a target squared CoV."""

    mean: float
    scv: float = 1.0
    family: str = "exponential"

    def __post_init__(self):
        if self.mean <= 0:
            raise DomainError("mean must be positive")
        if self.scv < 0 or not math.isfinite(self.scv):
            raise DomainError("scv must be finite and non-negative")
        if self.family not in RENEWAL_FAMILIES:
            raise DomainError(f"unknown family {self.family!r}; use one of {RENEWAL_FAMILIES}")
        if self.family == "exponential" and abs(self.scv - 1.0) > 1e-9:
            raise UnreachableScv("exponential fixes scv = 1")
        if self.family == "deterministic" and self.scv > 1e-9:
            raise UnreachableScv("deterministic fixes scv = 0")
        if self.family == "hyperexponential2" and self.scv <= 1.0:
            raise UnreachableScv("hyperexponential2 requires scv > 1")
        if self.family == "lognormal" and self.scv <= 0.0:
            raise UnreachableScv("lognormal requires scv > 0")
        if self.family == "erlang":
            if self.scv <= 0 or self.scv > 1.0:
                raise UnreachableScv("erlang requires scv in (0, 1] (scv = 1/n)")

    @property
    def erlang_stages(self) -> int:
        return max(1, round(1.0 / self.scv))

    @property
    def effective_scv(self) -> float:
        """The scv actually realized (erlang snaps to the nearest 1/n)."""
        if self.family == "deterministic":
            return 0.0
        if self.family == "erlang":
            return 1.0 / self.erlang_stages
        return 1.0 if self.family == "exponential" else self.scv

    @property
    def hyper2_params(self) -> tuple[float, float, float]:
        """Balanced-means fit: branch probability p and the two branch rates."""
        c2 = self.scv
        p = 0.5 * (1.0 + math.sqrt((c2 - 1.0) / (c2 + 1.0)))
        return p, 2.0 * p / self.mean, 2.0 * (1.0 - p) / self.mean


def renewal_times(spec: RenewalSpec, count: int, stream: SeededStream) -> np.ndarray:
    """Draw `count` iid samples with the spec's mean and squared CoV."""
    if count < 0:
        raise DomainError("count must be non-negative")
    rng = stream.generator()
    if spec.family == "exponential":
        return rng.exponential(spec.mean, count)
    if spec.family == "deterministic":
        return np.full(count, spec.mean)
    if spec.family == "hyperexponential2":
        p, r1, r2 = spec.hyper2_params
        branch = rng.uniform(size=count) < p
        return np.where(branch, rng.exponential(1.0 / r1, count), rng.exponential(1.0 / r2, count))
    if spec.family == "erlang":
        n = spec.erlang_stages
        if abs(1.0 / n - spec.scv) > 1e-9:
            warnings.warn(
                f"erlang cannot hit scv = {spec.scv:.6g}; using n = {n} stages (scv = {1.0 / n:.6g})",
                stacklevel=2,
            )
        return rng.gamma(n, spec.mean / n, count)
    # lognormal: sigma^2 = ln(1 + c^2), mu = ln(mean) - sigma^2/2
    sigma2 = math.log1p(spec.scv)
    return rng.lognormal(math.log(spec.mean) - 0.5 * sigma2, math.sqrt(sigma2), count)


def poisson_arrivals(lam: float, horizon: float, stream: SeededStream) -> np.ndarray:
    """Poisson arrival instants on [0, horizon), sorted ascending."""
    if lam <= 0:
        raise DomainError("rate must be positive")
    if horizon < 0:
        raise DomainError("horizon must be non-negative")
    if horizon == 0:
        return np.empty(0)
    rng = stream.generator()
    n = rng.poisson(lam * horizon)
    return np.sort(rng.uniform(0.0, horizon, n))


def poisson_interarrival_times(lam: float, count: int, stream: SeededStream) -> np.ndarray:
    """Arrival instants of exactly `count` Poisson arrivals (cumulative Exp draws)."""
    if lam <= 0:
        raise DomainError("rate must be positive")
    rng = stream.generator()
    return np.cumsum(rng.exponential(1.0 / lam, count))


def nhpp_sinusoidal(profile: SinusoidProfile, horizon: float, stream: SeededStream) -> np.ndarray:
    """Nonhomogeneous Poisson arrivals for a sinusoidal rate, by thinning.

    Candidates are drawn at the constant envelope lambda_bar*(1+A) and
    kept with probability lam(t)/envelope, which is exact for any phase.
    """
    if horizon < 0:
        raise DomainError("horizon must be non-negative")
    if horizon == 0:
        return np.empty(0)
    rng = stream.generator()
    lam_max = profile.peak_rate
    n = rng.poisson(lam_max * horizon)
    t = np.sort(rng.uniform(0.0, horizon, n))
    keep = rng.uniform(0.0, 1.0, n) * lam_max < profile.rate(t)
    return t[keep]


def phase_shifted_sites(
    k: int,
    base: SinusoidProfile,
    phase_law: str | Sequence[float],
    stream: SeededStream,
) -> list[SinusoidProfile]:
    """k copies of `base` with phases drawn from the law.

    phase_law is either "uniform" (iid on [0, 2*pi)) or an explicit list
    of k phases.
    """
    if k < 1:
        raise DomainError("site count k must be >= 1")
    if isinstance(phase_law, str):
        if phase_law != "uniform":
            raise DomainError(f"unknown phase law {phase_law!r}")
        phases = stream.generator().uniform(0.0, 2.0 * math.pi, k)
    else:
        phases = list(phase_law)
        if len(phases) != k:
            raise DomainError(f"fixed phase list has {len(phases)} entries, expected {k}")
    return [
        SinusoidProfile(base.lambda_bar, base.amplitude, base.gamma, float(ph)) for ph in phases
    ]
