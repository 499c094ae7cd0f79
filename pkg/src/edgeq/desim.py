"""Deterministic discrete-event simulation of the validation queues.

Three models:

* ``two_phase_edge`` / ``gg1_edge`` -- tandem pair: a source queue whose
  single server performs the mandatory phase and, for migrating requests,
  the migration phase back to back, feeding a destination queue that
  serves only the migrated stream.
* ``mtm1_sinusoidal`` -- single server driven by a sinusoidal
  nonhomogeneous Poisson process.
* ``mmk_cloud`` -- one FCFS queue in front of k identical servers.

Single-server waiting times are computed with the vectorized Lindley
recursion (reflected random walk), so one run handles millions of
requests in milliseconds and is bit-reproducible for a fixed stream.

Metric conventions for the tandem model: ``mean_wait`` composes the
source-queue wait over all requests with the destination-queue wait per
migrating request, which is the quantity the closed-form total predicts;
``mean_response`` is RTT + mean_wait + mean source occupancy (phase 1
plus migration work). Per-request sojourns, including the destination
visit, feed ``p95_response`` and the event log.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analytic import effective_service_rate, overload_window
from .errors import ConfigError, InstabilityDetected
from .specs import CloudSpec, NetworkSpec, QueueSpec, SinusoidProfile
from .workload import RenewalSpec, SeededStream

MODELS = ("two_phase_edge", "gg1_edge", "mtm1_sinusoidal", "mmk_cloud")
RUSH_STATS = ("peak_bin", "arrivals", "served")


@dataclass(frozen=True)
class SimConfig:
    """One simulation run description; see module docstring for models."""

    model: str
    queue: Optional[QueueSpec] = None
    cloud: Optional[CloudSpec] = None
    profile: Optional[SinusoidProfile] = None
    arrivals: Optional[RenewalSpec] = None     # gg1_edge inter-arrival law
    service1: Optional[RenewalSpec] = None     # gg1_edge phase-1 law
    service2: Optional[RenewalSpec] = None     # gg1_edge phase-2 law
    horizon_requests: Optional[int] = None
    horizon_s: Optional[float] = None
    warmup: float = 0.1
    network: Optional[NetworkSpec] = None
    dest_rate: Optional[float] = None          # destination service rate, default mu2
    dest_home_load: float = 0.0                # extra Poisson rate offered to queue 2
    two_stage_service: bool = False            # mtm1: explicit phase-1 + phase-2 stages
    bins_per_period: int = 100
    rush_stat: str = "peak_bin"
    allow_unstable: bool = False
    max_in_system: Optional[int] = None        # instability heuristic cap
    event_log: Optional[str] = None

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if not 0.0 <= self.warmup < 1.0:
            raise ConfigError("warmup fraction must lie in [0, 1)")
        if self.rush_stat not in RUSH_STATS:
            raise ConfigError(f"rush_stat must be one of {RUSH_STATS}")
        if self.model in ("two_phase_edge", "gg1_edge"):
            if self.queue is None:
                raise ConfigError(f"{self.model} requires a QueueSpec")
            if self.horizon_requests is None and self.horizon_s is None:
                raise ConfigError("set horizon_requests or horizon_s")
        elif self.model == "mtm1_sinusoidal":
            if self.profile is None or self.queue is None:
                raise ConfigError("mtm1_sinusoidal requires a SinusoidProfile and a QueueSpec")
            if self.horizon_s is None:
                raise ConfigError("mtm1_sinusoidal requires horizon_s")
            if self.bins_per_period < 1:
                raise ConfigError("bins_per_period must be >= 1")
        elif self.model == "mmk_cloud":
            if self.cloud is None:
                raise ConfigError("mmk_cloud requires a CloudSpec")
            if self.horizon_requests is None and self.horizon_s is None:
                raise ConfigError("set horizon_requests or horizon_s")


@dataclass
class SimMetrics:
    """Post-warmup summary of one run (or field-wise mean across runs)."""

    mean_wait: float = 0.0
    mean_response: float = 0.0
    p95_response: float = 0.0
    utilization_observed: float = 0.0
    count_served: float = 0
    count_migrated: float = 0
    little_l: float = 0.0
    mean_sojourn: float = 0.0
    mean_wait_conditional: float = 0.0   # mmk_cloud: wait averaged over delayed requests
    window_duration: float = 0.0

    FIELDS = (
        "mean_wait", "mean_response", "p95_response", "utilization_observed",
        "count_served", "count_migrated", "little_l", "mean_sojourn",
        "mean_wait_conditional", "window_duration",
    )


@dataclass
class RushStats:
    """Waiting-time accumulators scoped to the analytic overload window."""

    t1: float
    t2: float
    arrivals_sum: float = 0.0
    arrivals_count: int = 0
    served_sum: float = 0.0
    served_count: int = 0


@dataclass
class TimeSeriesMetrics:
    """Per-cycle binned waits and rates, plus optional rush-window stats.

    Accumulators are kept raw (sums and counts) so replications pool
    exactly; ``bins`` and ``rush_window`` expose the spec-level view.
    """

    period: float
    bin_wait_sum: np.ndarray
    bin_count: np.ndarray
    bin_exposure: np.ndarray
    rush: Optional[RushStats] = None
    rush_stat: str = "peak_bin"

    @property
    def n_bins(self) -> int:
        return len(self.bin_count)

    @property
    def bin_centers(self) -> np.ndarray:
        w = self.period / self.n_bins
        return (np.arange(self.n_bins) + 0.5) * w

    @property
    def bins(self) -> list[tuple[float, float, float]]:
        """(t_center, mean_wait, mean_rate) per bin."""
        counts = np.maximum(self.bin_count, 1)
        waits = self.bin_wait_sum / counts
        rates = np.divide(
            self.bin_count, self.bin_exposure,
            out=np.zeros_like(self.bin_wait_sum), where=self.bin_exposure > 0,
        )
        return [
            (float(c), float(w), float(r))
            for c, w, r in zip(self.bin_centers, waits, rates)
        ]

    def rush_window(self) -> Optional[tuple[float, float, float]]:
        """(t1, t2, mean_wait_in_window) under the configured statistic.

        ``peak_bin`` reports the worst binned mean wait whose bin center
        falls inside the window -- the congestion peak the fluid drain
        estimate lower-bounds; ``arrivals``/``served`` average over the
        requests arriving (resp. finishing) inside the window.
        """
        if self.rush is None:
            return None
        r = self.rush
        if self.rush_stat == "arrivals":
            val = r.arrivals_sum / r.arrivals_count if r.arrivals_count else 0.0
        elif self.rush_stat == "served":
            val = r.served_sum / r.served_count if r.served_count else 0.0
        else:
            centers = self.bin_centers
            dur = r.t2 - r.t1
            inside = np.mod(centers - r.t1, self.period) <= dur
            inside &= self.bin_count > 0
            if not inside.any():
                val = 0.0
            else:
                val = float(np.max(self.bin_wait_sum[inside] / self.bin_count[inside]))
        return (r.t1, r.t2, val)

    def pooled_with(self, other: "TimeSeriesMetrics") -> "TimeSeriesMetrics":
        if self.n_bins != other.n_bins or self.period != other.period:
            raise ConfigError("cannot pool time series with different binning")
        rush = None
        if self.rush is not None and other.rush is not None:
            rush = RushStats(
                self.rush.t1, self.rush.t2,
                self.rush.arrivals_sum + other.rush.arrivals_sum,
                self.rush.arrivals_count + other.rush.arrivals_count,
                self.rush.served_sum + other.rush.served_sum,
                self.rush.served_count + other.rush.served_count,
            )
        return TimeSeriesMetrics(
            self.period,
            self.bin_wait_sum + other.bin_wait_sum,
            self.bin_count + other.bin_count,
            self.bin_exposure + other.bin_exposure,
            rush,
            self.rush_stat,
        )


# ---------------------------------------------------------------------------
# Queue cores


def lindley_waits(arrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """FCFS single-server waits, starting empty.

    W_1 = 0 and W_{n+1} = max(0, W_n + S_n - A_{n+1}), evaluated as the
    reflected random walk so the whole run vectorizes.
    """
    n = len(arrivals)
    if n == 0:
        return np.empty(0)
    steps = services[:-1] - np.diff(arrivals)
    walk = np.concatenate(([0.0], np.cumsum(steps)))
    return walk - np.minimum.accumulate(walk)


def multiserver_waits(arrivals: np.ndarray, services: np.ndarray, k: int) -> np.ndarray:
    """FCFS waits in front of k identical servers (next-free-server discipline)."""
    if k == 1:
        return lindley_waits(arrivals, services)
    free = [0.0] * k  # earliest availability per server
    heapq.heapify(free)
    waits = np.empty(len(arrivals))
    for i, (t, s) in enumerate(zip(arrivals, services)):
        soonest = free[0]
        w = soonest - t if soonest > t else 0.0
        waits[i] = w
        heapq.heapreplace(free, t + w + s)
    return waits


def _time_average_in_system(
    arrivals: np.ndarray, departures: np.ndarray, t0: float, t1: float
) -> float:
    """Exact time average of the number in system over [t0, t1]."""
    if t1 <= t0:
        return 0.0
    times = np.concatenate([arrivals, departures])
    deltas = np.concatenate([np.ones(len(arrivals)), -np.ones(len(departures))])
    order = np.argsort(times, kind="stable")
    times, deltas = times[order], deltas[order]
    levels = np.cumsum(deltas)
    seg_a = np.clip(times[:-1], t0, t1)
    seg_b = np.clip(times[1:], t0, t1)
    area = float(np.sum(levels[:-1] * (seg_b - seg_a)))
    return area / (t1 - t0)


def _max_in_system(arrivals: np.ndarray, departures: np.ndarray) -> int:
    times = np.concatenate([arrivals, departures])
    deltas = np.concatenate([np.ones(len(arrivals)), -np.ones(len(departures))])
    order = np.argsort(times, kind="stable")
    return int(np.max(np.cumsum(deltas[order]), initial=0))


def _check_instability(config: SimConfig, arrivals, departures) -> None:
    if config.max_in_system is None:
        return
    peak = _max_in_system(arrivals, departures)
    if peak > config.max_in_system:
        raise InstabilityDetected(
            f"in-system count reached {peak} > cap {config.max_in_system}"
        )


def _bin_exposure(t0: float, t1: float, period: float, n_bins: int) -> np.ndarray:
    """Seconds of [t0, t1] mapped into each of n_bins cycle-phase bins."""
    width = period / n_bins
    exposure = np.full(n_bins, math.floor((t1 - t0) / period) * width)
    # remaining partial period [a, b) in phase coordinates
    a = t0 % period
    b = a + (t1 - t0) % period
    edges = np.arange(n_bins + 1) * width
    lo = np.clip(b - edges[:-1], 0.0, width) - np.clip(a - edges[:-1], 0.0, width)
    hi = np.clip(b - period - edges[:-1], 0.0, width)  # wrap-around part
    return exposure + lo + hi


def _write_event_log(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_time", "event_type", "request_id", "queue_id"])
        for row in sorted(rows):
            writer.writerow([f"{row[0]:.9g}", row[1], row[2], row[3]])


def _event_rows(queue_id, ids, arrivals, starts, departures):
    rows = []
    for i, t, s, d in zip(ids, arrivals, starts, departures):
        rows.append((float(t), "arrival", int(i), queue_id))
        rows.append((float(s), "service_start", int(i), queue_id))
        rows.append((float(d), "departure", int(i), queue_id))
    return rows


# ---------------------------------------------------------------------------
# Model runners


def _draw_arrivals(config: SimConfig, rng) -> np.ndarray:
    q = config.queue
    if config.model == "gg1_edge" and config.arrivals is not None:
        spec = config.arrivals
    else:
        spec = RenewalSpec(1.0 / q.lam)
    if config.horizon_requests is not None:
        n = int(config.horizon_requests)
        inter = _renewal_draws(spec, n, rng)
        return np.cumsum(inter)
    # horizon in seconds: draw in chunks until past the horizon
    out = []
    total = 0.0
    chunk = max(1024, int(config.horizon_s / spec.mean * 1.2))
    while total < config.horizon_s:
        inter = _renewal_draws(spec, chunk, rng)
        t = total + np.cumsum(inter)
        out.append(t)
        total = float(t[-1])
    t = np.concatenate(out)
    return t[t < config.horizon_s]


def _renewal_draws(spec: RenewalSpec, count: int, rng) -> np.ndarray:
    """renewal_times against an existing generator (keeps one stream per run)."""
    if spec.family == "exponential":
        return rng.exponential(spec.mean, count)
    if spec.family == "deterministic":
        return np.full(count, spec.mean)
    if spec.family == "hyperexponential2":
        p, r1, r2 = spec.hyper2_params
        pick = rng.uniform(size=count) < p
        return np.where(pick, rng.exponential(1.0 / r1, count), rng.exponential(1.0 / r2, count))
    if spec.family == "erlang":
        n = spec.erlang_stages
        return rng.gamma(n, spec.mean / n, count)
    sigma2 = math.log1p(spec.scv)
    return rng.lognormal(math.log(spec.mean) - 0.5 * sigma2, math.sqrt(sigma2), count)


def run_two_phase_sim(config: SimConfig, stream: SeededStream) -> SimMetrics:
    """Tandem edge simulation; see module docstring for the metric contract."""
    config.validate()
    if config.model not in ("two_phase_edge", "gg1_edge"):
        raise ConfigError(f"run_two_phase_sim cannot run model {config.model!r}")
    q = config.queue
    if not config.allow_unstable:
        q.check_stable()
    rng = stream.generator()

    t = _draw_arrivals(config, rng)
    n = len(t)
    if n == 0:
        return SimMetrics()
    migrate = rng.uniform(size=n) < q.r
    if config.service1 is not None:
        x1 = _renewal_draws(config.service1, n, rng)
    else:
        x1 = rng.exponential(1.0 / q.mu1, n)
    if math.isinf(q.mu2):
        x2 = np.zeros(n)
    elif config.service2 is not None:
        x2 = _renewal_draws(config.service2, n, rng)
    else:
        x2 = rng.exponential(1.0 / q.mu2, n)
    s1 = x1 + np.where(migrate, x2, 0.0)

    w1 = lindley_waits(t, s1)
    dep1 = t + w1 + s1
    if __debug__:
        # tolerance covers float cancellation in the reflected-walk form
        assert np.all(np.diff(dep1) >= -1e-9), "FCFS departures left order"

    # destination queue: migrated stream, optionally plus a home load
    dest_rate = config.dest_rate if config.dest_rate is not None else q.mu2
    t_mig = dep1[migrate]
    n_home = 0
    if config.dest_home_load > 0 and len(dep1):
        span = float(dep1[-1])
        home = np.sort(rng.uniform(0.0, span, rng.poisson(config.dest_home_load * span)))
        n_home = len(home)
        q2_t = np.concatenate([t_mig, home])
        from_mig = np.concatenate([np.ones(len(t_mig), bool), np.zeros(n_home, bool)])
        order = np.argsort(q2_t, kind="stable")
        q2_t, from_mig = q2_t[order], from_mig[order]
    else:
        q2_t, from_mig = t_mig, np.ones(len(t_mig), bool)
    if math.isinf(dest_rate):
        s2 = np.zeros(len(q2_t))
    else:
        s2 = rng.exponential(1.0 / dest_rate, len(q2_t))
    w2_all = lindley_waits(q2_t, s2)
    dep2_all = q2_t + w2_all + s2
    w2 = w2_all[from_mig]
    s2_mig = s2[from_mig]
    dep2 = dep2_all[from_mig]

    # per-request totals in arrival order
    wait2 = np.zeros(n)
    wait2[migrate] = w2
    svc2 = np.zeros(n)
    svc2[migrate] = s2_mig
    done = np.where(migrate, 0.0, dep1)
    done[migrate] = dep2

    cut = int(n * config.warmup)
    counted = np.arange(n) >= cut
    n_counted = int(counted.sum())
    if n_counted == 0:
        return SimMetrics()
    rtt = config.network.t_edge if config.network is not None else 0.0

    cnt_mig = counted & migrate
    mean_w1 = float(np.mean(w1[counted]))
    mean_w2 = float(np.mean(wait2[cnt_mig])) if cnt_mig.any() else 0.0
    mean_wait = mean_w1 + mean_w2
    mean_src_service = float(np.mean(s1[counted]))
    sojourn = w1 + s1 + wait2 + svc2
    resp = rtt + sojourn

    t0 = float(t[cut])
    t_end = float(max(dep1[-1], dep2[-1] if len(dep2) else 0.0))
    window = t_end - t0
    util = float(np.sum(s1[counted])) / window if window > 0 else 0.0
    little = _time_average_in_system(t, done, t0, t_end)
    _check_instability(config, t, done)

    if config.event_log:
        rows = _event_rows("edge", np.arange(n), t, t + w1, dep1)
        rows += _event_rows("dest", np.flatnonzero(migrate), t_mig, t_mig + w2, dep2)
        _write_event_log(config.event_log, rows)

    return SimMetrics(
        mean_wait=mean_wait,
        mean_response=rtt + mean_wait + mean_src_service,
        p95_response=float(np.percentile(resp[counted], 95)),
        utilization_observed=util,
        count_served=n_counted,
        count_migrated=int(cnt_mig.sum()),
        little_l=little,
        mean_sojourn=float(np.mean(sojourn[counted])),
        window_duration=window,
    )


def run_mtm1_sim(config: SimConfig, stream: SeededStream) -> tuple[SimMetrics, TimeSeriesMetrics]:
    """Sinusoidally driven single-server run with per-cycle binned waits."""
    config.validate()
    if config.model != "mtm1_sinusoidal":
        raise ConfigError(f"run_mtm1_sim cannot run model {config.model!r}")
    prof, q = config.profile, config.queue
    mu_eff = effective_service_rate(q.mu1, q.mu2, q.r)
    rng = stream.generator()

    t = _nhpp_with_rng(prof, config.horizon_s, rng)
    n = len(t)
    period = prof.period
    n_bins = config.bins_per_period
    win = overload_window(prof, mu_eff)
    rush = RushStats(win.t1, win.t2) if win is not None else None
    ts_empty = TimeSeriesMetrics(
        period, np.zeros(n_bins), np.zeros(n_bins), np.zeros(n_bins), rush, config.rush_stat
    )
    if n == 0:
        return SimMetrics(), ts_empty

    migrate = np.zeros(n, bool)
    if config.two_stage_service:
        migrate = rng.uniform(size=n) < q.r
        s = rng.exponential(1.0 / q.mu1, n)
        if not math.isinf(q.mu2):
            s = s + np.where(migrate, rng.exponential(1.0 / q.mu2, n), 0.0)
    else:
        s = rng.exponential(1.0 / mu_eff, n)
    w = lindley_waits(t, s)
    dep = t + w + s

    cut = int(n * config.warmup)
    tc, wc, sc, depc = t[cut:], w[cut:], s[cut:], dep[cut:]
    rtt = config.network.t_edge if config.network is not None else 0.0

    phase = np.mod(tc, period)
    idx = np.minimum((phase / period * n_bins).astype(int), n_bins - 1)
    ts = TimeSeriesMetrics(
        period,
        np.bincount(idx, weights=wc, minlength=n_bins),
        np.bincount(idx, minlength=n_bins).astype(float),
        _bin_exposure(float(tc[0]), float(tc[-1]), period, n_bins),
        rush,
        config.rush_stat,
    )
    if rush is not None:
        dur = rush.t2 - rush.t1
        in_arr = np.mod(tc - rush.t1, period) <= dur
        in_srv = np.mod(depc - rush.t1, period) <= dur
        rush.arrivals_sum = float(np.sum(wc[in_arr]))
        rush.arrivals_count = int(np.sum(in_arr))
        rush.served_sum = float(np.sum(wc[in_srv]))
        rush.served_count = int(np.sum(in_srv))

    t0, t_end = float(tc[0]), float(dep[-1])
    window = t_end - t0
    sojourn = wc + sc
    metrics = SimMetrics(
        mean_wait=float(np.mean(wc)),
        mean_response=rtt + float(np.mean(wc)) + float(np.mean(sc)),
        p95_response=float(np.percentile(rtt + sojourn, 95)),
        utilization_observed=float(np.sum(sc)) / window if window > 0 else 0.0,
        count_served=len(tc),
        count_migrated=int(np.sum(migrate[cut:])),
        little_l=_time_average_in_system(t, dep, t0, t_end),
        mean_sojourn=float(np.mean(sojourn)),
        window_duration=window,
    )
    if config.event_log:
        _write_event_log(config.event_log, _event_rows("edge", np.arange(n), t, t + w, dep))
    return metrics, ts


def _nhpp_with_rng(profile: SinusoidProfile, horizon: float, rng) -> np.ndarray:
    lam_max = profile.peak_rate
    n = rng.poisson(lam_max * horizon)
    t = np.sort(rng.uniform(0.0, horizon, n))
    keep = rng.uniform(0.0, 1.0, n) * lam_max < profile.rate(t)
    return t[keep]


def run_mmk_sim(config: SimConfig, stream: SeededStream) -> SimMetrics:
    """M/M/k pool run; also reports the wait conditioned on being delayed."""
    config.validate()
    if config.model != "mmk_cloud":
        raise ConfigError(f"run_mmk_sim cannot run model {config.model!r}")
    cloud = config.cloud
    if not config.allow_unstable:
        cloud.check_stable()
    lam = cloud.arrival_rate
    rng = stream.generator()

    if lam == 0.0:
        return SimMetrics()
    if config.horizon_requests is not None:
        t = np.cumsum(rng.exponential(1.0 / lam, int(config.horizon_requests)))
    else:
        n = rng.poisson(lam * config.horizon_s)
        t = np.sort(rng.uniform(0.0, config.horizon_s, n))
    n = len(t)
    if n == 0:
        return SimMetrics()
    s = rng.exponential(1.0 / cloud.mu_cloud, n)
    w = multiserver_waits(t, s, cloud.k)
    dep = t + w + s

    cut = int(n * config.warmup)
    tc, wc, sc = t[cut:], w[cut:], s[cut:]
    if len(tc) == 0:
        return SimMetrics()
    rtt = config.network.t_cloud if config.network is not None else 0.0
    delayed = wc[wc > 0.0]

    t0, t_end = float(tc[0]), float(np.max(dep))
    window = t_end - t0
    sojourn = wc + sc
    _check_instability(config, t, dep)
    if config.event_log:
        _write_event_log(config.event_log, _event_rows("cloud", np.arange(n), t, t + w, dep))
    return SimMetrics(
        mean_wait=float(np.mean(wc)),
        mean_response=rtt + float(np.mean(wc)) + float(np.mean(sc)),
        p95_response=float(np.percentile(rtt + sojourn, 95)),
        utilization_observed=float(np.sum(sc)) / (cloud.k * window) if window > 0 else 0.0,
        count_served=len(tc),
        count_migrated=0,
        little_l=_time_average_in_system(t, dep, t0, t_end),
        mean_sojourn=float(np.mean(sojourn)),
        mean_wait_conditional=float(np.mean(delayed)) if len(delayed) else 0.0,
        window_duration=window,
    )


def run_model(config: SimConfig, stream: SeededStream):
    """Dispatch on config.model; mtm1 returns (SimMetrics, TimeSeriesMetrics)."""
    if config.model in ("two_phase_edge", "gg1_edge"):
        return run_two_phase_sim(config, stream)
    if config.model == "mtm1_sinusoidal":
        return run_mtm1_sim(config, stream)
    return run_mmk_sim(config, stream)


# ---------------------------------------------------------------------------
# Replication


@dataclass
class Aggregate:
    """Across-run mean, standard error and normal 95% CI per metric."""

    n_runs: int
    mean: SimMetrics
    stderr: dict[str, float] = field(default_factory=dict)
    ci95: dict[str, float] = field(default_factory=dict)
    timeseries: Optional[TimeSeriesMetrics] = None

    def metric(self, name: str) -> tuple[float, float, float]:
        return getattr(self.mean, name), self.stderr[name], self.ci95[name]


def replicate(config: SimConfig, n_runs: int, base_stream: SeededStream) -> Aggregate:
    """Run n_runs independent replications on substreams child(0..n-1).

    Aggregation uses compensated summation in run order, so a fixed base
    stream reproduces the aggregate bit for bit. With a single run the
    stderr and CI are reported as 0.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    values: dict[str, list[float]] = {f: [] for f in SimMetrics.FIELDS}
    ts_pool: Optional[TimeSeriesMetrics] = None
    for i in range(n_runs):
        result = run_model(config, base_stream.child(i))
        if isinstance(result, tuple):
            metrics, ts = result
            ts_pool = ts if ts_pool is None else ts_pool.pooled_with(ts)
        else:
            metrics = result
        for f in SimMetrics.FIELDS:
            values[f].append(float(getattr(metrics, f)))

    means, stderr, ci95 = {}, {}, {}
    for f, vals in values.items():
        m = math.fsum(vals) / n_runs
        means[f] = m
        if n_runs > 1:
            var = math.fsum((v - m) ** 2 for v in vals) / (n_runs - 1)
            stderr[f] = math.sqrt(var / n_runs)
        else:
            stderr[f] = 0.0
        ci95[f] = 1.96 * stderr[f]
    return Aggregate(n_runs, SimMetrics(**means), stderr, ci95, ts_pool)
