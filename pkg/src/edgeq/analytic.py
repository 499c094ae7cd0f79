"""Closed-form waiting-time, capacity and trade-off formulas.

Steady-state models
    mm1_two_phase_wait, destination_wait, migration_service_time,
    mmk_qed_wait, erlang_c_wait, delta_t_bound_mmk
GI/G approximations
    service_scv, gg1_two_phase_wait, ggk_cloud_wait, delta_t_bound_ggk,
    max_edge_arrival_scv
Time-varying arrivals
    effective_service_rate, sinusoidal_offered_load, offered_load_lag,
    sinusoidal_wait_profile, excess_wait_sinusoidal, overload_window,
    fluid_backlog, rush_hour_wait, psa_cloud_wait, aggregate_cloud_profile
Provisioning rules
    empirical_rule_capacities

All functions are pure and re-entrant; none keeps mutable state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, IncompatiblePeriods, OverloadedInstant, UnstableQueue
from .specs import (
    STABILITY_GUARD,
    CloudSpec,
    PhaseMoments,
    QueueSpec,
    SinusoidProfile,
    VariabilitySpec,
)

# ---------------------------------------------------------------------------
# Steady-state edge and cloud models


def mm1_source_wait(spec: QueueSpec) -> float:
    """Waiting time at the source queue whose server runs both service phases.

    This is the M/M/1-with-second-optional-service result: the server is
    occupied for Exp(mu1) per request plus, with probability r, Exp(mu2)
    of migration work.
    """
    spec.check_stable()
    lam, mu1, inv2 = spec.lam, spec.mu1, spec.inv_mu2
    num = lam * (1.0 / mu1**2 + spec.r * inv2**2 + spec.r * inv2 / mu1)
    den = 1.0 - lam / mu1 - spec.r * lam * inv2
    return num / den


def destination_wait(lam: float, mu1: float, r: float) -> float:
    """Queueing delay a migrated request sees at its destination site.

    The destination is an ordinary edge site: an M/M/1 serving at mu1,
    fed only by the migrated stream (rate r*lam, no re-migration), so
    the wait is r*lam / (mu1 * (mu1 - r*lam)). Writing mu2 here instead
    of mu1 is a common slip; mu2 is the migration-transfer rate, not the
    destination's processing rate.
    """
    if not 0.0 <= r <= 1.0:
        raise DomainError("migration probability must lie in [0, 1]")
    if mu1 <= 0:
        raise DomainError("mu1 must be positive")
    if r * lam >= mu1 * STABILITY_GUARD:
        raise UnstableQueue(f"destination load r*lam = {r * lam:.6g} >= mu1 = {mu1:.6g}")
    return r * lam / (mu1 * (mu1 - r * lam))


def mm1_two_phase_wait(spec: QueueSpec) -> float:
    """Total expected edge waiting time: source queue plus destination queue.

    The destination term is the per-migrant queueing delay; the total is
    the waiting a request accumulates along its path through the system.
    """
    return mm1_source_wait(spec) + destination_wait(spec.lam, spec.mu1, spec.r)


def migration_service_time(r: float, mu2: float) -> float:
    """Expected migration work per request, averaged over all requests: r/mu2."""
    if not 0.0 <= r <= 1.0:
        raise DomainError("migration probability must lie in [0, 1]")
    if mu2 <= 0:
        raise DomainError("mu2 must be positive (math.inf allowed)")
    return 0.0 if math.isinf(mu2) else r / mu2


def mmk_qed_wait(cloud: CloudSpec) -> float:
    """Heavy-traffic conditional wait of a k-server pool: 1/(mu*(1-rho)*sqrt(k)).

    This is the conditional expectation given that the request waits at
    all, so it upper-bounds the unconditional wait and yields a
    conservative trade-off threshold. For k = 1 it coincides with the
    exact M/M/1 conditional wait; compare erlang_c_wait for the exact
    unconditional value.
    """
    cloud.check_stable()
    return 1.0 / (cloud.mu_cloud * (1.0 - cloud.rho_cloud) * math.sqrt(cloud.k))


def erlang_c_delay_probability(cloud: CloudSpec) -> float:
    """Exact M/M/k probability that an arriving request must wait."""
    cloud.check_stable()
    k, rho = cloud.k, cloud.rho_cloud
    if rho == 0.0:
        return 0.0
    a = k * rho  # offered load in Erlangs
    # sum a^n/n! for n<k, plus the boosted k-th term, in log space for big k
    log_terms = [n * math.log(a) - math.lgamma(n + 1) for n in range(k)]
    log_top = k * math.log(a) - math.lgamma(k + 1) - math.log(1.0 - rho)
    m = max(max(log_terms), log_top)
    denom = sum(math.exp(t - m) for t in log_terms) + math.exp(log_top - m)
    return math.exp(log_top - m) / denom


def erlang_c_wait(cloud: CloudSpec) -> float:
    """Exact unconditional M/M/k mean wait: P(wait) / (k*mu*(1-rho))."""
    pw = erlang_c_delay_probability(cloud)
    return pw / (cloud.k * cloud.mu_cloud * (1.0 - cloud.rho_cloud))


def delta_t_bound_mmk(edge: QueueSpec, cloud: CloudSpec) -> float:
    """RTT-difference threshold above which the edge wins (Markovian models).

    The edge offers the lower response time whenever
    t_cloud - t_edge > w_edge + s_migration - w_cloud.
    """
    return (
        mm1_two_phase_wait(edge)
        + migration_service_time(edge.r, edge.mu2)
        - mmk_qed_wait(cloud)
    )


# ---------------------------------------------------------------------------
# GI/G approximations (Allen-Cunneen style corrections)


def service_scv(m: PhaseMoments) -> float:
    """Squared CoV of the total two-phase service time.

    With S = v1 plus (with probability r) an independent v2, the law of
    total variance gives
        (var1 + r*var2 + r*(1-r)*mean2^2) / (mean1 + r*mean2)^2.
    """
    mean = m.mean1 + m.r * m.mean2
    var = m.var1 + m.r * m.var2 + m.r * (1.0 - m.r) * m.mean2**2
    return var / mean**2


def gg1_two_phase_wait(spec: QueueSpec, var: VariabilitySpec) -> float:
    """Edge waiting time with general inter-arrival and service variability.

    Scales the Markovian two-phase wait (source bracket plus destination
    term) by (ca2 + cs2)/2, assuming the variability is similar on source
    and destination sites. ca2 = cs2 = 1 recovers mm1_two_phase_wait.
    """
    bracket = mm1_source_wait(spec) + destination_wait(spec.lam, spec.mu1, spec.r)
    return bracket * var.correction


def ggk_wait_probability(k: int, rho: float) -> float:
    """Approximate probability of waiting in a k-server pool.

    (rho^k + rho)/2 in heavy traffic (rho >= 0.7), rho^((k+1)/2) below.
    The boundary itself takes the heavy-traffic branch.
    """
    if not 0.0 <= rho < 1.0:
        raise DomainError("rho must lie in [0, 1)")
    if rho >= 0.7:
        return 0.5 * (rho**k + rho)
    return rho ** ((k + 1) / 2.0)


def ggk_cloud_wait(cloud: CloudSpec, var: VariabilitySpec) -> float:
    """Approximate GI/G/k cloud wait: P_w/(mu*(1-rho)) * (ca2+cs2)/(2k)."""
    cloud.check_stable()
    pw = ggk_wait_probability(cloud.k, cloud.rho_cloud)
    return pw / (cloud.mu_cloud * (1.0 - cloud.rho_cloud)) * (var.ca2 + var.cs2) / (2.0 * cloud.k)


def delta_t_bound_ggk(
    edge: QueueSpec,
    edge_var: VariabilitySpec,
    cloud: CloudSpec,
    cloud_var: VariabilitySpec,
) -> float:
    """RTT-difference threshold for the edge to win under general variability."""
    return (
        gg1_two_phase_wait(edge, edge_var)
        + migration_service_time(edge.r, edge.mu2)
        - ggk_cloud_wait(cloud, cloud_var)
    )


def max_edge_arrival_scv(
    delta_t: float,
    spec: QueueSpec,
    s_mig: float,
    w_cloud: float,
    cs2: float,
) -> float:
    """Largest arrival-variability ca2 the edge can carry and still win.

    Returns
        2*(delta_t - s_mig + w_cloud)*(1 - lam/mu1 - r*lam/mu2)
          / (lam*(1/mu1^2 + r/mu2^2 + r/(mu1*mu2)))  -  cs2.

    A negative result means no arrival process keeps the edge competitive
    at these parameters.
    """
    spec.check_stable()
    lam, mu1, inv2 = spec.lam, spec.mu1, spec.inv_mu2
    slack = 1.0 - lam / mu1 - spec.r * lam * inv2
    denom = lam * (1.0 / mu1**2 + spec.r * inv2**2 + spec.r * inv2 / mu1)
    return 2.0 * (delta_t - s_mig + w_cloud) * slack / denom - cs2


# ---------------------------------------------------------------------------
# Time-varying (sinusoidal) arrivals


def effective_service_rate(mu1: float, mu2: float, r: float) -> float:
    """Single-rate equivalent of the two-phase server: (1/mu1 + r/mu2)^-1."""
    if mu1 <= 0 or mu2 <= 0:
        raise DomainError("service rates must be positive")
    if not 0.0 <= r <= 1.0:
        raise DomainError("migration probability must lie in [0, 1]")
    inv2 = 0.0 if math.isinf(mu2) else 1.0 / mu2
    return 1.0 / (1.0 / mu1 + r * inv2)


def sinusoidal_offered_load(t, profile: SinusoidProfile, mu_eff: float):
    """Mean offered load m(t) of a sinusoidally driven server.

    m(t) = (lambda_bar/mu_eff) * [1 + A/(1+beta^2) * (sin(g*t+phi)
           - beta*cos(g*t+phi))], beta = gamma/mu_eff. The infinite-server
    form; it tracks instantaneous utilization well whenever m(t) < 1.
    Accepts scalar or array t.
    """
    if mu_eff <= 0:
        raise DomainError("mu_eff must be positive")
    beta = profile.gamma / mu_eff
    x = profile.gamma * np.asarray(t, dtype=float) + profile.phase
    f = np.sin(x) - beta * np.cos(x)
    m = (profile.lambda_bar / mu_eff) * (1.0 + profile.amplitude / (1.0 + beta**2) * f)
    return m if m.ndim else float(m)


def offered_load_lag(gamma: float) -> float:
    """Time by which the offered load trails the driving rate: arccot(1/gamma)/gamma."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    return math.atan(gamma) / gamma


def sinusoidal_wait_profile(t, profile: SinusoidProfile, mu_eff: float):
    """Instantaneous wait w(t) = m(t) / (mu_eff * (1 - m(t))).

    Raises OverloadedInstant if m(t) >= 1 anywhere in t.
    """
    m = np.asarray(sinusoidal_offered_load(t, profile, mu_eff))
    if np.any(m >= 1.0):
        raise OverloadedInstant("offered load m(t) >= 1 at the queried time")
    w = m / (mu_eff * (1.0 - m))
    return w if w.ndim else float(w)


def excess_wait_sinusoidal(rho: float, amplitude: float, gamma: float, mu_eff: float) -> float:
    """Second-order extra wait caused by a sinusoidal load swing.

    rho^2 A^2 / (2 mu_eff (1-rho)^3 (1 + (gamma/mu_eff)^2)). Only the
    quadratic term of the expansion, so it under-reads the simulated
    excess, increasingly so once the instantaneous rate nears capacity.
    """
    if not 0.0 <= amplitude <= 1.0:
        raise DomainError("amplitude must lie in [0, 1]")
    if mu_eff <= 0 or gamma <= 0:
        raise DomainError("mu_eff and gamma must be positive")
    if rho >= STABILITY_GUARD or rho < 0:
        raise UnstableQueue(f"rho = {rho:.6g} must lie in [0, 1)")
    beta = gamma / mu_eff
    return rho**2 * amplitude**2 / (2.0 * mu_eff * (1.0 - rho) ** 3 * (1.0 + beta**2))


@dataclass(frozen=True)
class OverloadWindow:
    """Portion of one cycle where the arrival rate exceeds service capacity."""

    t1: float
    t2: float
    theta: float

    @property
    def duration(self) -> float:
        return self.t2 - self.t1


def overload_window(profile: SinusoidProfile, mu_eff: float) -> Optional[OverloadWindow]:
    """Overload window of one cycle, or None when the peak rate fits.

    theta = arcsin(mu_eff/lambda_bar - 1); t1 = theta/gamma and
    t2 = (pi-theta)/gamma, shifted by -phase/gamma into the first cycle.
    The tangent case (peak rate exactly mu_eff) is treated as no overload.
    For mu_eff < lambda_bar the arcsin argument goes negative and the
    window extends past the half-cycle; that analytic extension is
    provided but should be considered experimental.
    """
    if mu_eff <= 0:
        raise DomainError("mu_eff must be positive")
    if profile.peak_rate <= mu_eff:
        return None
    arg = mu_eff / profile.lambda_bar - 1.0
    if not -1.0 <= arg <= 1.0:
        raise DomainError(f"mu_eff/lambda_bar - 1 = {arg:.6g} outside [-1, 1]")
    theta = math.asin(arg)
    period = profile.period
    t1 = ((theta - profile.phase) / profile.gamma) % period
    t2 = ((math.pi - theta - profile.phase) / profile.gamma) % period
    if t2 < t1:
        t2 += period
    return OverloadWindow(t1, t2, theta)


def fluid_backlog(profile: SinusoidProfile, mu_eff: float) -> float:
    """Net fluid input over the overload window, in jobs.

    (1/gamma) * [(lambda_bar - mu_eff)*(pi - 2*theta)
                 + 2*lambda_bar*A*cos(theta)], i.e. the integral of
    lam(t) - mu_eff across [t1, t2]. Returns 0.0 when no window exists.
    Near the overload threshold the signed net input can be slightly
    negative because the window brackets some sub-capacity time.
    """
    win = overload_window(profile, mu_eff)
    if win is None:
        return 0.0
    lb, a = profile.lambda_bar, profile.amplitude
    return (
        (lb - mu_eff) * (math.pi - 2.0 * win.theta)
        + 2.0 * lb * a * math.cos(win.theta)
    ) / profile.gamma


def rush_hour_wait(profile: SinusoidProfile, mu_eff: float) -> float:
    """Time to drain the rush-hour backlog: max(fluid_backlog, 0) / mu_eff.

    Estimates the wait faced at the end of the overload window, a lower
    bound on the simulated peak congestion; 0 when there is no overload.
    """
    return max(fluid_backlog(profile, mu_eff), 0.0) / mu_eff


def psa_cloud_wait(rho_t: float, cloud: CloudSpec) -> float:
    """Pointwise-stationary wait at instantaneous utilization rho(t).

    Freezes the pool at rho(t) and applies the conditional multiserver
    form, 1/(sqrt(k)*mu*(1-rho(t))); an upper bound on the true
    time-average delay since a real queue cannot re-equilibrate instantly.
    """
    if rho_t >= STABILITY_GUARD:
        raise OverloadedInstant(f"instantaneous utilization {rho_t:.6g} >= 1")
    if rho_t < 0:
        raise DomainError("rho(t) must be non-negative")
    return 1.0 / (math.sqrt(cloud.k) * cloud.mu_cloud * (1.0 - rho_t))


class AggregateProfile:
    """Sum of sinusoidal site profiles, sampled as a rate function."""

    def __init__(self, sites: Sequence[SinusoidProfile]):
        if not sites:
            raise DomainError("site list must be non-empty")
        self.sites = tuple(sites)
        self.mean = sum(p.lambda_bar for p in self.sites)
        gammas = {p.gamma for p in self.sites}
        self.common_period = self.sites[0].period if len(gammas) == 1 else None

    def rate(self, t):
        """Aggregate arrival rate; accepts scalar or array t."""
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t)
        for p in self.sites:
            total = total + p.rate(t)
        return total if total.ndim else float(total)

    def relative_amplitude(self, n_samples: int = 4096, horizon: Optional[float] = None) -> float:
        """Empirical (max - mean)/mean of the aggregate over one common period.

        Sites with differing frequencies have no single period; pass an
        explicit horizon to average over, otherwise IncompatiblePeriods.
        """
        if horizon is None:
            if self.common_period is None:
                raise IncompatiblePeriods(
                    "sites use different gamma; supply an explicit horizon"
                )
            horizon = self.common_period
        t = np.linspace(0.0, horizon, n_samples, endpoint=False)
        rates = self.rate(t)
        mean = float(np.mean(rates))
        return (float(np.max(rates)) - mean) / mean


def aggregate_cloud_profile(sites: Sequence[SinusoidProfile]) -> AggregateProfile:
    """Aggregate arrival profile a cloud sees from many edge sites."""
    return AggregateProfile(sites)


# ---------------------------------------------------------------------------
# Provisioning rules


def empirical_rule_capacities(lambda_site: float, k: int) -> tuple[float, float]:
    """Two-sigma peak capacities: C_edge = k*(lam + 2*sqrt(lam)),
    C_cloud = k*lam + 2*sqrt(k*lam).

    Pooling k independent Poisson sites shrinks the fluctuation term, so
    C_cloud < C_edge for every k >= 2 and they agree at k = 1.
    """
    if lambda_site <= 0:
        raise DomainError("arrival rate must be positive")
    if k < 1 or int(k) != k:
        raise DomainError("site count k must be an integer >= 1")
    c_edge = k * (lambda_site + 2.0 * math.sqrt(lambda_site))
    c_cloud = k * lambda_site + 2.0 * math.sqrt(k * lambda_site)
    return c_edge, c_cloud
