"""Edge-vs-cloud capacity equivalence and trace-driven VM packing.

The closed forms relate the server capacity a distributed edge needs to
match a centralized pool handling the same geographically pinned VM
workload; the packing simulator replays a trace against both layouts to
measure the over-provisioning empirically.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, EmptyTrace, OversizedVm, ParseError, UnstableQueue
from .specs import DtrpSpec
from .workload import SeededStream

# ---------------------------------------------------------------------------
# Closed forms


def edge_overprovision_factor(q: float) -> float:
    """Capacity factor the edge needs over the cloud at equal utilization: 1 + 1/q."""
    if q <= 0:
        raise DomainError("packing factor q must be positive")
    return 1.0 + 1.0 / q


def cloud_capacity_equivalent(
    c_edge: float, rho_edge: float, tau_edge: float, q: float, rho_cloud: float
) -> float:
    """Cloud capacity delivering the same packing response time as C_edge.

    C_cloud = C_edge * (1 - rho_edge - tau_edge/C_edge)
              / ((1 + 1/q) * (1 - rho_cloud)).
    """
    if c_edge <= 0:
        raise DomainError("edge capacity must be positive")
    if q <= 0:
        raise DomainError("packing factor q must be positive")
    if tau_edge < 0:
        raise DomainError("upload time tau must be non-negative")
    slack = rho_edge + tau_edge / c_edge
    if not 0.0 <= slack < 1.0:
        raise UnstableQueue(f"rho_edge + tau/C = {slack:.6g} must lie in [0, 1)")
    if not 0.0 <= rho_cloud < 1.0:
        raise UnstableQueue(f"rho_cloud = {rho_cloud:.6g} must lie in [0, 1)")
    return c_edge * (1.0 - slack) / (edge_overprovision_factor(q) * (1.0 - rho_cloud))


def dtrp_response_time(spec: DtrpSpec, lam: float, cloud: bool = False) -> float:
    """Spatial-queue response time, up to the shared proportionality constant.

    gos^2 * lam * area * (1 + 1/q)^2 / (C^2 * v^2 * (1 - rho - tau/C)^2).
    In cloud mode the pool is large enough that 1/q and tau/C vanish.
    """
    if lam <= 0:
        raise DomainError("arrival rate must be positive")
    if cloud:
        pack = 1.0
        slack = 1.0 - spec.rho
    else:
        pack = edge_overprovision_factor(spec.q) ** 2
        slack = 1.0 - spec.rho - spec.tau / spec.capacity
    if slack <= 0:
        raise UnstableQueue("no spare capacity; response time diverges")
    return (
        spec.gos**2 * lam * spec.area * pack
        / (spec.capacity**2 * spec.velocity**2 * slack**2)
    )


# ---------------------------------------------------------------------------
# Traces


@dataclass(frozen=True)
class VmRequest:
    id: str
    arrival: float
    lifetime: float
    cores: int
    site_hint: Optional[int] = None

    def __post_init__(self):
        if self.lifetime <= 0:
            raise DomainError(f"VM {self.id}: lifetime must be positive")
        if self.cores < 1 or int(self.cores) != self.cores:
            raise DomainError(f"VM {self.id}: cores must be an integer >= 1")


TRACE_HEADER = ["vm_id", "arrival_s", "lifetime_s", "cores"]


def load_vm_trace(path: str) -> list[VmRequest]:
    """Read a `vm_id,arrival_s,lifetime_s,cores` CSV, sorted by arrival."""
    requests = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTrace(f"{path}: file is empty") from None
        if [h.strip() for h in header] != TRACE_HEADER:
            raise ParseError(f"{path}:1: header must be {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                requests.append(
                    VmRequest(row[0].strip(), float(row[1]), float(row[2]), int(row[3]))
                )
            except (ValueError, DomainError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not requests:
        raise EmptyTrace(f"{path}: no VM requests")
    return sorted(requests, key=lambda r: r.arrival)


def save_vm_trace(path: str, requests: Sequence[VmRequest]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for r in requests:
            writer.writerow([r.id, f"{r.arrival:.9g}", f"{r.lifetime:.9g}", r.cores])


def trace_summary(requests: Sequence[VmRequest]) -> dict[str, float]:
    cores = np.array([r.cores for r in requests])
    return {
        "count": len(requests),
        "mean_cores": float(cores.mean()),
        "min_cores": int(cores.min()),
        "max_cores": int(cores.max()),
        "span_s": float(requests[-1].arrival - requests[0].arrival),
    }


# Discrete VM-size mix with mean exactly 4.75 cores, smallest 2, largest 20
# (the headline statistics of Azure's public 2019 VM trace).
VM_SIZES = np.array([2, 4, 6, 8, 12, 16, 20])
VM_SIZE_PROBS = np.array(
    [0.4255555555555556, 0.27, 0.12, 0.09, 0.05, 0.0275, 0.016944444444444444]
)


def synthetic_vm_trace(
    rate: float,
    mean_lifetime: float,
    horizon: float,
    stream: SeededStream,
    k_sites: Optional[int] = None,
) -> list[VmRequest]:
    """Poisson VM arrivals with exponential lifetimes and Azure-like sizes.

    When k_sites is given, each VM carries a uniform site hint so edge and
    cloud runs see the identical assignment.
    """
    if rate <= 0 or mean_lifetime <= 0 or horizon <= 0:
        raise DomainError("rate, mean_lifetime and horizon must be positive")
    rng = stream.generator()
    n = rng.poisson(rate * horizon)
    arrivals = np.sort(rng.uniform(0.0, horizon, n))
    lifetimes = rng.exponential(mean_lifetime, n)
    cores = rng.choice(VM_SIZES, size=n, p=VM_SIZE_PROBS)
    hints = rng.integers(0, k_sites, n) if k_sites else [None] * n
    return [
        VmRequest(f"vm{i}", float(a), float(lf), int(c), None if h is None else int(h))
        for i, (a, lf, c, h) in enumerate(zip(arrivals, lifetimes, cores, hints))
    ]


# ---------------------------------------------------------------------------
# Packing simulator


@dataclass(frozen=True)
class Topology:
    """Server layout: cloud mode is a single pooled site."""

    mode: str
    k_sites: int
    servers_per_site: int
    cores_per_server: int

    def __post_init__(self):
        if self.mode not in ("edge", "cloud"):
            raise DomainError("mode must be 'edge' or 'cloud'")
        if self.mode == "cloud" and self.k_sites != 1:
            raise DomainError("cloud mode pools everything into one site")
        if min(self.k_sites, self.servers_per_site, self.cores_per_server) < 1:
            raise DomainError("all topology counts must be >= 1")


@dataclass
class PackingReport:
    """Outcome of replaying one trace against one topology."""

    peak_servers_used: int                  # concurrent busy servers, system-wide
    peak_servers_per_site: list[int]        # per-site concurrent busy-server peaks
    peak_used_cores_per_site: list[int]     # per-site concurrent occupied-core peaks
    site_capacity_cores: int                # sum of per-site occupied-core peaks
    rejected_or_queued: int                 # peak FIFO backlog, system-wide
    placed: int
    completed: int
    utilization_timeline: list[tuple[float, float]] = field(default_factory=list)
    relative_error_vs_cloud: Optional[float] = None


class _Site:
    __slots__ = ("cap", "max_servers", "free", "queue", "busy", "used", "peak_busy", "peak_used")

    def __init__(self, cap: int, max_servers: int):
        self.cap = cap
        self.max_servers = max_servers
        self.free: list[int] = []     # residual cores of opened servers
        self.queue: list[tuple[float, int]] = []  # FIFO of (lifetime, cores)
        self.busy = 0
        self.used = 0
        self.peak_busy = 0
        self.peak_used = 0

    def try_place(self, cores: int, policy: str) -> Optional[int]:
        """Return the server index the VM lands on, or None when full."""
        if policy == "best_fit":
            best, best_res = None, None
            for i, f in enumerate(self.free):
                if f >= cores and (best_res is None or f < best_res):
                    best, best_res = i, f
            if best is not None:
                self._occupy(best, cores)
                return best
        else:  # first_fit and the batch variant place the same way
            for i, f in enumerate(self.free):
                if f >= cores:
                    self._occupy(i, cores)
                    return i
        if len(self.free) < self.max_servers:
            self.free.append(self.cap - cores)
            self.busy += 1
            self.used += cores
            self._bump()
            return len(self.free) - 1
        return None

    def _occupy(self, idx: int, cores: int) -> None:
        if self.free[idx] == self.cap:
            self.busy += 1
        self.free[idx] -= cores
        self.used += cores
        self._bump()

    def release(self, idx: int, cores: int) -> None:
        self.free[idx] += cores
        self.used -= cores
        if self.free[idx] == self.cap:
            self.busy -= 1

    def _bump(self) -> None:
        if self.busy > self.peak_busy:
            self.peak_busy = self.busy
        if self.used > self.peak_used:
            self.peak_used = self.used


def simulate_packing(
    trace: Sequence[VmRequest],
    topology: Topology,
    policy: str = "first_fit",
    site_assign: str = "uniform",
    stream: Optional[SeededStream] = None,
    timeline_samples: int = 200,
) -> PackingReport:
    """Replay a VM trace against a topology.

    Each VM is pinned to its site (uniform draw or the trace's hint; edge
    sites never borrow from each other). A VM that fits nowhere on its
    site waits in FIFO order until releases free enough cores. Verifies
    conservation and never oversubscribes a server.
    """
    if policy not in ("first_fit", "best_fit", "first_fit_decreasing_batch"):
        raise DomainError(f"unknown policy {policy!r}")
    if site_assign not in ("uniform", "hint"):
        raise DomainError(f"unknown site_assign {site_assign!r}")
    if not trace:
        raise EmptyTrace("trace contains no VM requests")
    cap = topology.cores_per_server
    oversized = next((r for r in trace if r.cores > cap), None)
    if oversized is not None:
        raise OversizedVm(
            f"VM {oversized.id} wants {oversized.cores} cores > server size {cap}"
        )

    n_sites = topology.k_sites if topology.mode == "edge" else 1
    if topology.mode == "cloud":
        site_of = np.zeros(len(trace), dtype=int)
    elif site_assign == "hint":
        if any(r.site_hint is None for r in trace):
            raise DomainError("site_assign='hint' requires every VM to carry a hint")
        site_of = np.array([r.site_hint % n_sites for r in trace])
    else:
        if stream is None:
            raise DomainError("site_assign='uniform' requires a SeededStream")
        site_of = stream.generator().integers(0, n_sites, len(trace))

    sites = [_Site(cap, topology.servers_per_site) for _ in range(n_sites)]
    releases: list[tuple[float, int, int, int]] = []  # (time, site, server, cores)
    placed = completed = 0
    queued_now = 0
    peak_queue = 0
    busy_total = 0
    peak_busy_total = 0
    starts, ends, sizes = [], [], []

    def place(site_idx: int, cores: int) -> Optional[int]:
        nonlocal busy_total, peak_busy_total
        site = sites[site_idx]
        before = site.busy
        idx = site.try_place(cores, policy)
        if idx is not None:
            busy_total += site.busy - before
            if busy_total > peak_busy_total:
                peak_busy_total = busy_total
        return idx

    def drain(site_idx: int, now: float) -> None:
        nonlocal placed, queued_now
        site = sites[site_idx]
        while site.queue:
            lifetime, cores = site.queue[0]
            idx = place(site_idx, cores)
            if idx is None:
                return
            site.queue.pop(0)
            queued_now -= 1
            placed += 1
            heapq.heappush(releases, (now + lifetime, site_idx, idx, cores))
            starts.append(now), ends.append(now + lifetime), sizes.append(cores)

    def release_until(now: float) -> None:
        nonlocal completed, busy_total
        while releases and releases[0][0] <= now:
            rt, s_idx, srv, cores = heapq.heappop(releases)
            site = sites[s_idx]
            before = site.busy
            site.release(srv, cores)
            busy_total += site.busy - before
            completed += 1
            drain(s_idx, rt)

    i = 0
    n = len(trace)
    while i < n:
        # same-timestamp batch; the decreasing variant packs big VMs first
        j = i + 1
        while j < n and trace[j].arrival == trace[i].arrival:
            j += 1
        batch = list(range(i, j))
        if policy == "first_fit_decreasing_batch" and len(batch) > 1:
            batch.sort(key=lambda b: -trace[b].cores)
        release_until(trace[i].arrival)
        for b in batch:
            req = trace[b]
            site = sites[site_of[b]]
            if site.queue:
                idx = None  # preserve FIFO order behind waiting requests
            else:
                idx = place(int(site_of[b]), req.cores)
            if idx is None:
                site.queue.append((req.lifetime, req.cores))
                queued_now += 1
                peak_queue = max(peak_queue, queued_now)
            else:
                placed += 1
                heapq.heappush(releases, (req.arrival + req.lifetime, int(site_of[b]), idx, req.cores))
                starts.append(req.arrival), ends.append(req.arrival + req.lifetime), sizes.append(req.cores)
        i = j
    release_until(math.inf)

    assert placed == n and completed == n, "conservation violated"
    assert all(min(s.free, default=cap) >= 0 for s in sites), "server oversubscribed"
    assert queued_now == 0

    total_cores = n_sites * topology.servers_per_site * cap
    timeline = _utilization_timeline(starts, ends, sizes, total_cores, timeline_samples)
    return PackingReport(
        peak_servers_used=peak_busy_total,
        peak_servers_per_site=[s.peak_busy for s in sites],
        peak_used_cores_per_site=[s.peak_used for s in sites],
        site_capacity_cores=sum(s.peak_used for s in sites),
        rejected_or_queued=peak_queue,
        placed=placed,
        completed=completed,
        utilization_timeline=timeline,
    )


def _utilization_timeline(starts, ends, sizes, total_cores, n_samples):
    if not starts or n_samples <= 0:
        return []
    starts = np.array(starts)
    ends = np.array(ends)
    sizes = np.array(sizes, dtype=float)
    t = np.linspace(float(starts.min()), float(ends.max()), n_samples)
    order_s = np.argsort(starts)
    order_e = np.argsort(ends)
    add = np.cumsum(sizes[order_s])
    sub = np.cumsum(sizes[order_e])
    si = np.searchsorted(starts[order_s], t, side="right")
    ei = np.searchsorted(ends[order_e], t, side="right")
    used = np.where(si > 0, add[np.maximum(si - 1, 0)], 0.0) - np.where(ei > 0, sub[np.maximum(ei - 1, 0)], 0.0)
    return [(float(a), float(u) / total_cores) for a, u in zip(t, used)]


def packing_relative_error(edge_capacity: float, cloud_capacity: float, q: float) -> float:
    """|C_edge_peak - C_cloud_peak*(1+1/q)| / (C_cloud_peak*(1+1/q))."""
    target = cloud_capacity * edge_overprovision_factor(q)
    if target <= 0:
        raise DomainError("cloud peak capacity must be positive")
    return abs(edge_capacity - target) / target


@dataclass
class SweepPoint:
    cores_per_site: int
    edge_capacity: int
    relative_error: float
    peak_queue: int


def capacity_sweep(
    trace: Sequence[VmRequest],
    k_sites: int,
    core_grid: Sequence[int],
    q: float,
    policy: str = "first_fit",
) -> tuple[list[SweepPoint], int, float]:
    """Edge-site-size sweep against the pooled-cloud baseline.

    Returns the per-size points, the cloud peak used cores, and the
    model-predicted edge size cloud_peak*(1+1/q)/k_sites. Peak capacity
    is measured as concurrent occupied cores (summed per-site peaks for
    the edge), so the comparison is insensitive to server granularity.
    Site hints must be present so every size sees the same assignment.
    """
    cloud_top = Topology("cloud", 1, len(trace), max(int(r.cores) for r in trace))
    cloud = simulate_packing(trace, cloud_top, policy="first_fit", site_assign="hint")
    cloud_peak = cloud.site_capacity_cores
    model_size = cloud_peak * edge_overprovision_factor(q) / k_sites
    points = []
    for cores in core_grid:
        top = Topology("edge", k_sites, 1, int(cores))
        rep = simulate_packing(trace, top, policy=policy, site_assign="hint")
        err = packing_relative_error(rep.site_capacity_cores, cloud_peak, q)
        rep.relative_error_vs_cloud = err
        points.append(SweepPoint(int(cores), rep.site_capacity_cores, err, rep.rejected_or_queued))
    return points, cloud_peak, model_size
