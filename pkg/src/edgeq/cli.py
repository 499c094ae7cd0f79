"""Command-line interface.

Subcommands: ``analytic`` (closed-form evaluation), ``simulate`` (run the
discrete-event models from a JSON config), ``validate`` (scenario sweeps
pairing formulas with simulation), and ``capacity`` (planning formulas
and the trace-driven packing simulator).

Exit codes: 0 success, 2 validation/config error, 3 runtime instability.
``EDGEQ_SEED`` provides the default seed when none is given. All numbers
print with 9 significant digits so regression files stay stable. Rates
are per second, times in seconds; sinusoid frequency may be given as
``gamma_rad_s`` or ``period_s`` (exactly one) and is stored as rad/s.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

from . import analytic, capacity
from .desim import MODELS, SimConfig, replicate
from .errors import EdgeqError, InstabilityDetected
from .harness import load_scenario, run_scenario
from .specs import CloudSpec, NetworkSpec, QueueSpec, SinusoidProfile, VariabilitySpec
from .workload import RenewalSpec, SeededStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3


def _g(x: float) -> str:
    return f"{x:.9g}"


def _default_seed(value) -> int:
    if value is not None:
        return int(value)
    return int(os.environ.get("EDGEQ_SEED", "0"))


def _rate(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


# ---------------------------------------------------------------------------
# Config file handling

_SCHEMA = {
    "model": None,
    "edge": {"lambda", "mu1", "mu2", "r"},
    "cloud": {"k", "mu", "rho"},
    "network": {"t_edge_s", "t_cloud_s"},
    "workload": {"profile", "arrivals", "service1", "service2"},
    "simulation": {
        "horizon_requests", "horizon_s", "warmup", "bins_per_period", "rush_stat",
        "two_stage_service", "dest_rate", "dest_home_load", "allow_unstable",
        "max_in_system", "seed", "reps", "event_log",
    },
    "capacity": {"trace", "synthetic", "topology", "policy", "q", "site_assign"},
    "output": {"dir", "formats", "deterministic_names", "name"},
}
_PROFILE_KEYS = {"lambda_bar", "amplitude", "gamma_rad_s", "period_s", "phase"}
_RENEWAL_KEYS = {"mean", "scv", "family"}


def _reject_unknown(mapping: dict, allowed, where: str) -> None:
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise EdgeqError(f"{where}: unknown keys {sorted(unknown)}")


def normalize_config(raw: dict) -> dict:
    """Validate keys, resolve period_s -> gamma_rad_s, fill defaults.

    Idempotent: normalizing a normalized config returns it unchanged.
    """
    _reject_unknown(raw, _SCHEMA, "config")
    if "model" not in raw:
        raise EdgeqError("config: missing 'model'")
    if raw["model"] not in MODELS:
        raise EdgeqError(f"config: unknown model {raw['model']!r}; expected one of {MODELS}")
    out = {"model": raw["model"]}
    for section, allowed in _SCHEMA.items():
        if section == "model" or section not in raw:
            continue
        body = dict(raw[section])
        _reject_unknown(body, allowed, f"config.{section}")
        out[section] = body
    profile = out.get("workload", {}).get("profile")
    if profile is not None:
        _reject_unknown(profile, _PROFILE_KEYS, "config.workload.profile")
        has_gamma, has_period = "gamma_rad_s" in profile, "period_s" in profile
        if has_gamma == has_period:
            raise EdgeqError("config.workload.profile: give exactly one of gamma_rad_s, period_s")
        if has_period:
            profile["gamma_rad_s"] = 2.0 * math.pi / float(profile.pop("period_s"))
        profile.setdefault("phase", 0.0)
    for key in ("arrivals", "service1", "service2"):
        spec = out.get("workload", {}).get(key)
        if spec is not None:
            _reject_unknown(spec, _RENEWAL_KEYS, f"config.workload.{key}")
            spec.setdefault("scv", 1.0)
            spec.setdefault("family", "exponential")
    sim = out.setdefault("simulation", {})
    sim.setdefault("warmup", 0.1)
    sim.setdefault("reps", 1)
    output = out.setdefault("output", {})
    output.setdefault("dir", ".")
    output.setdefault("formats", ["json"])
    output.setdefault("deterministic_names", False)
    return out


def _renewal_from(body: dict) -> RenewalSpec:
    return RenewalSpec(float(body["mean"]), float(body.get("scv", 1.0)), body.get("family", "exponential"))


def sim_config_from_dict(raw: dict) -> tuple[SimConfig, dict]:
    """Build a SimConfig from a normalized config dict; returns (config, normalized)."""
    cfg = normalize_config(raw)
    model = cfg["model"]
    queue = cloud = profile = None
    if "edge" in cfg:
        e = cfg["edge"]
        queue = QueueSpec(float(e["lambda"]), float(e["mu1"]), _rate(str(e["mu2"])), float(e.get("r", 0.0)))
    if "cloud" in cfg:
        c = cfg["cloud"]
        cloud = CloudSpec(int(c["k"]), float(c["mu"]), float(c["rho"]))
    net = None
    if "network" in cfg:
        n = cfg["network"]
        net = NetworkSpec(float(n.get("t_edge_s", 0.0)), float(n.get("t_cloud_s", 0.0)))
    wl = cfg.get("workload", {})
    if wl.get("profile") is not None:
        p = wl["profile"]
        profile = SinusoidProfile(
            float(p["lambda_bar"]), float(p["amplitude"]),
            float(p["gamma_rad_s"]), float(p.get("phase", 0.0)),
        )
        if queue is None and model == "mtm1_sinusoidal":
            raise EdgeqError("config: mtm1_sinusoidal needs an edge section for service rates")
    sim = cfg["simulation"]
    config = SimConfig(
        model=model,
        queue=queue,
        cloud=cloud,
        profile=profile,
        arrivals=_renewal_from(wl["arrivals"]) if wl.get("arrivals") else None,
        service1=_renewal_from(wl["service1"]) if wl.get("service1") else None,
        service2=_renewal_from(wl["service2"]) if wl.get("service2") else None,
        horizon_requests=(int(sim["horizon_requests"]) if sim.get("horizon_requests") else None),
        horizon_s=(float(sim["horizon_s"]) if sim.get("horizon_s") else None),
        warmup=float(sim.get("warmup", 0.1)),
        network=net,
        dest_rate=(float(sim["dest_rate"]) if sim.get("dest_rate") else None),
        dest_home_load=float(sim.get("dest_home_load", 0.0)),
        two_stage_service=bool(sim.get("two_stage_service", False)),
        bins_per_period=int(sim.get("bins_per_period", 100)),
        rush_stat=str(sim.get("rush_stat", "peak_bin")),
        allow_unstable=bool(sim.get("allow_unstable", False)),
        max_in_system=(int(sim["max_in_system"]) if sim.get("max_in_system") else None),
        event_log=sim.get("event_log"),
    )
    config.validate()
    return config, cfg


# ---------------------------------------------------------------------------
# analytic subcommand


def _cmd_analytic_wait(args) -> int:
    spec = QueueSpec(args.lam, args.mu1, args.mu2, args.r)
    source = analytic.mm1_source_wait(spec)
    dest = analytic.destination_wait(args.lam, args.mu1, args.r)
    total = source + dest
    s_mig = analytic.migration_service_time(args.r, args.mu2)
    record = {
        "lambda": args.lam, "mu1": args.mu1, "mu2": args.mu2, "r": args.r,
        "source_wait_s": source, "destination_wait_s": dest,
        "total_wait_s": total, "migration_service_s": s_mig,
    }
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(f"lambda={_g(args.lam)} mu1={_g(args.mu1)} mu2={_g(args.mu2)} r={_g(args.r)}")
        print(f"source_wait_s      {_g(source)}")
        print(f"destination_wait_s {_g(dest)}")
        print(f"total_wait_s       {_g(total)}")
        print(f"migration_service_s {_g(s_mig)}")
    return EXIT_OK


def _cmd_analytic_deltat(args) -> int:
    edge = QueueSpec(args.lam, args.mu1, args.mu2, args.r)
    cloud = CloudSpec(args.k, args.mu_cloud, args.rho_cloud)
    if args.mode == "mmk":
        bound = analytic.delta_t_bound_mmk(edge, cloud)
    else:
        bound = analytic.delta_t_bound_ggk(
            edge, VariabilitySpec(args.ca2, args.cs2),
            cloud, VariabilitySpec(args.ca2_cloud, args.cs2_cloud),
        )
    record = {
        "mode": args.mode, "lambda": args.lam, "mu1": args.mu1, "mu2": args.mu2,
        "r": args.r, "k": args.k, "mu_cloud": args.mu_cloud, "rho_cloud": args.rho_cloud,
        "delta_t_bound_s": bound,
    }
    if args.mode == "ggk":
        record.update(ca2=args.ca2, cs2=args.cs2, ca2_cloud=args.ca2_cloud, cs2_cloud=args.cs2_cloud)
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        echo = " ".join(f"{k}={_g(v) if isinstance(v, float) else v}" for k, v in record.items() if k != "delta_t_bound_s")
        print(echo)
        print(f"delta_t_bound_s {_g(bound)}")
    return EXIT_OK


def _cmd_analytic_factor(args) -> int:
    f = capacity.edge_overprovision_factor(args.q)
    if args.json:
        print(json.dumps({"q": args.q, "overprovision_factor": f}, sort_keys=True))
    else:
        print(f"q={_g(args.q)}")
        print(f"overprovision_factor {_g(f)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate subcommand


def _cmd_simulate(args) -> int:
    path = Path(args.config)
    if not path.exists():
        print(f"config file not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    raw = json.loads(path.read_text())
    config, cfg = sim_config_from_dict(raw)
    sim = cfg["simulation"]
    seed = _default_seed(args.seed if args.seed is not None else sim.get("seed"))
    reps = args.reps if args.reps is not None else int(sim.get("reps", 1))

    agg = replicate(config, reps, SeededStream(seed))

    out = cfg["output"]
    out_dir = Path(args.out if args.out is not None else out["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    deterministic = bool(out.get("deterministic_names", False)) or args.deterministic_names
    stem = out.get("name") or path.stem
    if not deterministic:
        import time as _time

        stem = f"{stem}_{_time.strftime('%Y%m%dT%H%M%SZ', _time.gmtime())}"

    payload = {
        "config": cfg,
        "seed": seed,
        "replications": reps,
        "metrics_mean": {f: getattr(agg.mean, f) for f in agg.mean.FIELDS},
        "metrics_stderr": agg.stderr,
        "metrics_ci95": agg.ci95,
    }
    metrics_path = out_dir / f"{stem}.metrics.json"
    metrics_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    written = [metrics_path]

    if agg.timeseries is not None:
        ts_path = out_dir / f"{stem}.timeseries.csv"
        with open(ts_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_center_s", "mean_wait_s", "mean_rate_per_s"])
            for center, wait, rate in agg.timeseries.bins:
                writer.writerow([_g(center), _g(wait), _g(rate)])
            rush = agg.timeseries.rush_window()
            if rush is not None:
                writer.writerow([])
                writer.writerow(["rush_t1_s", "rush_t2_s", "rush_mean_wait_s"])
                writer.writerow([_g(rush[0]), _g(rush[1]), _g(rush[2])])
        written.append(ts_path)

    print(f"mean_wait_s {_g(agg.mean.mean_wait)}")
    print(f"mean_response_s {_g(agg.mean.mean_response)}")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate subcommand


def _cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        from dataclasses import replace

        scenario = replace(scenario, seed=int(args.seed))
    rows, summary, written = run_scenario(
        scenario, out_dir=args.out, deterministic_names=args.deterministic_names,
        workers=args.workers,
    )
    for row in rows:
        pieces = [f"{k}={_g(v) if isinstance(v, float) else v}" for k, v in row.parameters.items()]
        pieces.append(f"analytic={_g(row.analytic_value)}")
        pieces.append(f"sim={_g(row.sim_value)}")
        pieces.append(f"rel_err={_g(row.rel_err)}")
        if row.status != "ok":
            pieces.append(row.status)
        print("  ".join(pieces))
    if summary:
        print(json.dumps(summary, sort_keys=True, default=str))
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# capacity subcommand


def _cmd_capacity_equivalent(args) -> int:
    if args.rho_equal:
        rho_edge = rho_cloud = args.rho
    else:
        rho_edge, rho_cloud = args.rho_edge, args.rho_cloud
    c = capacity.cloud_capacity_equivalent(args.c_edge, rho_edge, args.tau, args.q, rho_cloud)
    if args.json:
        print(json.dumps({"c_edge": args.c_edge, "q": args.q, "rho_edge": rho_edge,
                          "rho_cloud": rho_cloud, "tau": args.tau, "c_cloud": c}, sort_keys=True))
    else:
        print(f"c_edge={_g(args.c_edge)} q={_g(args.q)} rho_edge={_g(rho_edge)} "
              f"rho_cloud={_g(rho_cloud)} tau={_g(args.tau)}")
        print(f"c_cloud {_g(c)}")
    return EXIT_OK


def _cmd_capacity_rule(args) -> int:
    c_edge, c_cloud = analytic.empirical_rule_capacities(args.lam, args.k)
    if args.json:
        print(json.dumps({"lambda": args.lam, "k": args.k, "c_edge": c_edge,
                          "c_cloud": c_cloud}, sort_keys=True))
    else:
        print(f"lambda={_g(args.lam)} k={args.k}")
        print(f"c_edge {_g(c_edge)}")
        print(f"c_cloud {_g(c_cloud)}")
    return EXIT_OK


def _parse_topology(text: str) -> capacity.Topology:
    mode, _, rest = text.partition(":")
    fields = {"k": 1, "servers": 1, "cores": 64}
    if rest:
        for part in rest.split(","):
            key, _, value = part.partition("=")
            if key not in fields or not value:
                raise EdgeqError(f"bad topology element {part!r}; use mode:k=..,cores=..,servers=..")
            fields[key] = int(value)
    if mode == "cloud":
        fields["k"] = 1
    return capacity.Topology(mode, fields["k"], fields["servers"], fields["cores"])


def _cmd_capacity_pack(args) -> int:
    trace = capacity.load_vm_trace(args.trace)
    topology = _parse_topology(args.topology)
    report = capacity.simulate_packing(
        trace, topology, policy=args.policy, site_assign=args.site_assign,
        stream=SeededStream(_default_seed(args.seed)),
    )
    summary = capacity.trace_summary(trace)
    record = {
        "trace": args.trace,
        "topology": args.topology,
        "policy": args.policy,
        "trace_summary": summary,
        "peak_servers_used": report.peak_servers_used,
        "peak_servers_per_site": report.peak_servers_per_site,
        "site_capacity_cores": report.site_capacity_cores,
        "rejected_or_queued": report.rejected_or_queued,
        "placed": report.placed,
        "completed": report.completed,
    }
    text = json.dumps(record, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeq",
        description="Edge-vs-cloud queueing trade-off calculator and simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analytic", help="evaluate closed-form formulas")
    an_sub = p_an.add_subparsers(dest="subcommand", required=True)

    p_wait = an_sub.add_parser("wait", help="two-phase edge waiting time")
    p_wait.add_argument("--lambda", dest="lam", type=float, required=True, help="arrival rate /s")
    p_wait.add_argument("--mu1", type=float, required=True, help="phase-1 service rate /s")
    p_wait.add_argument("--mu2", type=_rate, required=True, help="phase-2 rate /s, or 'inf'")
    p_wait.add_argument("--r", type=float, default=0.0, help="migration probability")
    p_wait.add_argument("--json", action="store_true")
    p_wait.set_defaults(func=_cmd_analytic_wait)

    p_dt = an_sub.add_parser("deltat", help="RTT-difference threshold for the edge to win")
    p_dt.add_argument("--mode", choices=("mmk", "ggk"), default="mmk")
    p_dt.add_argument("--lambda", dest="lam", type=float, required=True)
    p_dt.add_argument("--mu1", type=float, required=True)
    p_dt.add_argument("--mu2", type=_rate, required=True)
    p_dt.add_argument("--r", type=float, default=0.0)
    p_dt.add_argument("--k", type=int, required=True, help="cloud server count")
    p_dt.add_argument("--mu-cloud", dest="mu_cloud", type=float, required=True)
    p_dt.add_argument("--rho-cloud", dest="rho_cloud", type=float, required=True)
    p_dt.add_argument("--ca2", type=float, default=1.0, help="edge inter-arrival scv (ggk)")
    p_dt.add_argument("--cs2", type=float, default=1.0, help="edge service scv (ggk)")
    p_dt.add_argument("--ca2-cloud", dest="ca2_cloud", type=float, default=1.0)
    p_dt.add_argument("--cs2-cloud", dest="cs2_cloud", type=float, default=1.0)
    p_dt.add_argument("--json", action="store_true")
    p_dt.set_defaults(func=_cmd_analytic_deltat)

    p_f = an_sub.add_parser("factor", help="edge over-provisioning factor 1 + 1/q")
    p_f.add_argument("--q", type=float, required=True, help="VM packing factor")
    p_f.add_argument("--json", action="store_true")
    p_f.set_defaults(func=_cmd_analytic_factor)

    p_sim = sub.add_parser("simulate", help="run a simulation described by a JSON config")
    p_sim.add_argument("config", help="config file path")
    p_sim.add_argument("--seed", type=int, default=None, help="override seed (default EDGEQ_SEED)")
    p_sim.add_argument("--reps", type=int, default=None, help="override replication count")
    p_sim.add_argument("--out", default=None, help="output directory override")
    p_sim.add_argument("--deterministic-names", action="store_true")
    p_sim.set_defaults(func=_cmd_simulate)

    p_val = sub.add_parser("validate", help="run a comparison scenario")
    p_val.add_argument("scenario", help="scenario file or bundled name (fig4.scenario, ...)")
    p_val.add_argument("--out", default=".", help="output directory")
    p_val.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_val.add_argument("--workers", type=int, default=1, help="bounded worker pool size")
    p_val.add_argument("--deterministic-names", action="store_true")
    p_val.set_defaults(func=_cmd_validate)

    p_cap = sub.add_parser("capacity", help="capacity planning tools")
    cap_sub = p_cap.add_subparsers(dest="subcommand", required=True)

    p_eq = cap_sub.add_parser("equivalent", help="cloud capacity equivalent to an edge build")
    p_eq.add_argument("--c-edge", dest="c_edge", type=float, required=True)
    p_eq.add_argument("--q", type=float, required=True)
    p_eq.add_argument("--rho-equal", dest="rho_equal", action="store_true",
                      help="use the same utilization on both sides")
    p_eq.add_argument("--rho", type=float, default=0.5, help="shared utilization for --rho-equal")
    p_eq.add_argument("--rho-edge", dest="rho_edge", type=float, default=0.5)
    p_eq.add_argument("--rho-cloud", dest="rho_cloud", type=float, default=0.5)
    p_eq.add_argument("--tau", type=float, default=0.0, help="total expected upload time")
    p_eq.add_argument("--json", action="store_true")
    p_eq.set_defaults(func=_cmd_capacity_equivalent)

    p_rule = cap_sub.add_parser("rule", help="two-sigma peak capacities")
    p_rule.add_argument("--lambda", dest="lam", type=float, required=True)
    p_rule.add_argument("--k", type=int, required=True)
    p_rule.add_argument("--json", action="store_true")
    p_rule.set_defaults(func=_cmd_capacity_rule)

    p_pack = cap_sub.add_parser("pack", help="replay a VM trace against a topology")
    p_pack.add_argument("--trace", required=True, help="CSV: vm_id,arrival_s,lifetime_s,cores")
    p_pack.add_argument("--topology", required=True, help="edge:k=4,cores=96[,servers=1] or cloud:cores=64")
    p_pack.add_argument("--policy", default="first_fit",
                        choices=("first_fit", "best_fit", "first_fit_decreasing_batch"))
    p_pack.add_argument("--site-assign", dest="site_assign", default="uniform",
                        choices=("uniform", "hint"))
    p_pack.add_argument("--seed", type=int, default=None)
    p_pack.add_argument("--out", default=None, help="write the JSON report here too")
    p_pack.set_defaults(func=_cmd_capacity_pack)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InstabilityDetected as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (EdgeqError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
