"""Command-line harness: generate, solve, policies, cycles, relaxations, benchmarks.

Exit codes: 0 ok, 1 usage error, 2 input error, 3 a solver limit was hit.
Results go to stdout as one JSON object (or CSV rows for bench); timing is
kept out of stdout so outputs are reproducible byte for byte given the same
seed and flags (the benchmark CSV carries a wall-time column, which is the
one documented exception).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bnb, cutplane, cyclic, modelir, policies
from .core import (
    ConstraintSpec,
    GenConfig,
    Instance,
    InstanceError,
    Plan,
    generate_instance,
    load_instance,
    plan_revenue,
    save_instance,
    save_plan,
)

__all__ = ["main", "metric_hhi", "BenchRecord", "BENCH_COLUMNS"]


def metric_hhi(plan: Plan) -> float:
    """Herfindahl-Hirschman index of offer counts; 1 = one product only."""
    counts = plan.offers.sum(axis=0).astype(float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("HHI undefined for an empty plan")
    shares = counts / total
    return float((shares ** 2).sum())


BENCH_COLUMNS = [
    "instance", "method", "status", "R_IP", "R_U", "R_Rlx",
    "G_end", "G_root", "RO_gap", "LOSPO_gap", "HHI", "wall_s",
]


@dataclass
class BenchRecord:
    instance: str
    method: str
    status: str
    r_ip: Optional[float]
    r_u: Optional[float]
    r_rlx: Optional[float]
    hhi: Optional[float]
    wall_s: float
    ro_gap: Optional[float] = None
    lospo_gap: Optional[float] = None

    @property
    def g_end(self) -> Optional[float]:
        if self.r_ip is None or self.r_u is None or self.r_ip == 0:
            return None
        return 100.0 * (self.r_u - self.r_ip) / self.r_ip

    @property
    def g_root(self) -> Optional[float]:
        if self.r_ip is None or self.r_rlx is None or self.r_ip == 0:
            return None
        return 100.0 * (self.r_rlx - self.r_ip) / self.r_ip

    def row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            return format(v, ".10g")

        return [self.instance, self.method, self.status, fmt(self.r_ip), fmt(self.r_u),
                fmt(self.r_rlx), fmt(self.g_end), fmt(self.g_root), fmt(self.ro_gap),
                fmt(self.lospo_gap), fmt(self.hhi), format(self.wall_s, ".3f")]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


FORMS = ("env", "conic", "ml", "cycle", "base", "bf")
POLICIES = ("brute", "seqro", "lospo", "karp", "mplus1")


def _build_model(inst: Instance, form: str, L: Optional[int]) -> modelir.Model:
    if form == "env":
        return modelir.build_env_milp(inst)
    if form == "conic":
        return modelir.build_conic(inst)
    if form == "ml":
        return modelir.build_multilinear(inst)
    if form == "cycle":
        if not L:
            raise InstanceError("--form cycle requires --L")
        return modelir.build_cycle_conic(inst, L)
    if form == "base":
        return modelir.build_mplus1_base(inst)
    if form == "bf":
        return modelir.build_bound_free(inst)
    raise InstanceError(f"unknown form {form!r}")


def _params(args) -> bnb.SolveParams:
    return bnb.SolveParams(
        rel_gap_tol=args.gap,
        abs_gap_tol=getattr(args, "abs_gap", 1e-6),
        time_limit=args.time_limit,
    )


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")


def _cmd_generate(args) -> int:
    spec = ConstraintSpec(cardinality_cap=args.card, offer_cap=args.offer_cap,
                          non_overlapping=args.non_overlap)
    cfg = GenConfig(args.n, args.t, args.m, regime=args.regime, theta=args.theta,
                    constraints=spec)
    inst = generate_instance(cfg, args.seed)
    save_instance(inst, args.out)
    _emit({"instance": args.out, "n": args.n, "t": args.t, "m": args.m, "seed": args.seed})
    return 0


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    model = _build_model(inst, args.form, args.L)
    if args.form == "bf" and args.cuts:
        _, stats, report = cutplane.bf_k_driver(inst, args.cuts, params=_params(args))
    else:
        report = bnb.solve_mip(model, _params(args))
    doc = {
        "form": args.form, "status": report.status, "value": report.objective,
        "bound": report.bound, "gap_pct": None if report.objective in (None, 0)
        else 100.0 * (report.bound - report.objective) / report.objective,
        "nodes": report.nodes, "cuts": report.cuts,
    }
    if report.plan is not None:
        doc["check_revenue"] = plan_revenue(inst, report.plan)
        if args.out:
            save_plan(report.plan, args.out)
    _emit(doc)
    print(f"wall {report.seconds:.3f}s", file=sys.stderr)
    return 3 if report.status in ("time_limit", "node_limit") else 0


def _cmd_policy(args) -> int:
    inst = load_instance(args.instance)
    if args.policy == "brute":
        plan, value = policies.brute_force(inst)
    elif args.policy == "seqro":
        plan = policies.sequential_ro(inst)
        value = plan_revenue(inst, plan)
    elif args.policy == "lospo":
        plan = policies.sequential_lospo(inst)
        value = plan_revenue(inst, plan)
    elif args.policy == "karp":
        res = cyclic.max_mean_cycle(cyclic.build_assortment_graph(inst))
        plan, value = res.plan, res.mean
    elif args.policy == "mplus1":
        plan, value = cyclic.solve_mplus1_nonoverlap(inst, use_bound_free=args.bound_free,
                                                     cut_rounds=args.cuts or 1)
    else:
        raise InstanceError(f"unknown policy {args.policy!r}")
    if args.out:
        save_plan(plan, args.out)
    _emit({"policy": args.policy, "value": value, "cyclic": plan.is_cycle,
           "periods": plan.n_periods})
    return 0


def _cmd_cycle(args) -> int:
    inst = load_instance(args.instance)
    plan, value = cyclic.solve_l_cyclic(inst, args.L, params=_params(args))
    if args.out:
        save_plan(plan, args.out)
    _emit({"L": args.L, "value": value})
    return 0


def _cmd_relax(args) -> int:
    inst = load_instance(args.instance)
    model = _build_model(inst, args.form, args.L)
    value = bnb.relax_value(model)
    _emit({"form": args.form, "relaxation": value})
    return 0


def _cmd_export(args) -> int:
    inst = load_instance(args.instance)
    model = _build_model(inst, args.form, args.L)
    cuts = None
    if model.convex_rows:
        if not args.cuts:
            raise InstanceError(f"form {args.form!r} has convex rows; pass --cuts K to linearize")
        res = bnb.relax_solution(model, max_rounds=args.cuts)
        cuts = res.cuts
    modelir.export_lp(model, args.out, cuts=cuts)
    _emit({"out": args.out, "rows": len(model.rows) + len(cuts or ()),
           "vars": model.n_vars})
    return 0


def _bench_one(payload) -> list[BenchRecord]:
    import time

    (cfg_kwargs, seed, forms, gap, time_limit) = payload
    cfg = GenConfig(**cfg_kwargs)
    inst = generate_instance(cfg, seed)
    name = f"seed{seed}"
    records: list[BenchRecord] = []
    plans = {}
    t0 = time.perf_counter()
    ro_plan = policies.sequential_ro(inst)
    ro_val = plan_revenue(inst, ro_plan)
    ro_wall = time.perf_counter() - t0
    t0 = time.perf_counter()
    lospo_plan = policies.sequential_lospo(inst)
    lospo_val = plan_revenue(inst, lospo_plan)
    lospo_wall = time.perf_counter() - t0
    env_val = None
    for form in forms:
        model = _build_model(inst, form, None)
        t0 = time.perf_counter()
        report = bnb.solve_mip(model, bnb.SolveParams(rel_gap_tol=gap, time_limit=time_limit))
        wall = time.perf_counter() - t0
        rlx = bnb.relax_value(model)
        hhi = None
        if report.plan is not None and report.plan.offers.sum() > 0:
            hhi = metric_hhi(report.plan)
        rec = BenchRecord(name, form, report.status, report.objective, report.bound,
                          rlx, hhi, wall)
        if form == "env" and report.objective:
            env_val = report.objective
            rec.ro_gap = 100.0 * (env_val - ro_val) / env_val
            rec.lospo_gap = 100.0 * (env_val - lospo_val) / env_val
        records.append(rec)
    for mname, plan, val, wall in (("seqro", ro_plan, ro_val, ro_wall),
                                   ("lospo", lospo_plan, lospo_val, lospo_wall)):
        hhi = metric_hhi(plan) if plan.offers.sum() > 0 else None
        records.append(BenchRecord(name, mname, "heuristic", val, None, None, hhi, wall))
    return records


def _cmd_bench(args) -> int:
    forms = [f.strip() for f in args.forms.split(",") if f.strip()]
    for f in forms:
        if f not in ("env", "conic", "ml"):
            raise InstanceError(f"bench supports forms env, conic, ml (got {f!r})")
    cfg_kwargs = dict(n_products=args.n, horizon=args.t, memory=args.m,
                      regime=args.regime, theta=args.theta)
    payloads = [(cfg_kwargs, args.seed + k, forms, args.gap, args.time_limit)
                for k in range(args.instances)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            per_instance = list(ex.map(_bench_one, payloads))
    else:
        per_instance = [_bench_one(p) for p in payloads]
    limited = False
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_COLUMNS)
        for records in per_instance:
            for rec in records:
                writer.writerow(rec.row())
                limited = limited or rec.status in ("time_limit", "node_limit")
    _emit({"out": args.out, "instances": args.instances, "forms": forms})
    return 3 if limited else 0


def _make_parser() -> _Parser:
    p = _Parser(prog="histassort", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common_solve(sp):
        sp.add_argument("--instance", required=True)
        sp.add_argument("--gap", type=float, default=0.005)
        sp.add_argument("--time-limit", type=float, default=3600.0)
        sp.add_argument("--out")

    g = sub.add_parser("generate", help="draw a random instance to JSON")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--t", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--regime", choices=("weak", "strong", "mixed"), default="weak")
    g.add_argument("--theta", type=float, default=0.0)
    g.add_argument("--card", type=int, default=None)
    g.add_argument("--offer-cap", type=int, default=None)
    g.add_argument("--non-overlap", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("solve", help="exact solve with a chosen formulation")
    add_common_solve(s)
    s.add_argument("--form", choices=FORMS, required=True)
    s.add_argument("--L", type=int)
    s.add_argument("--cuts", type=int, default=0, help="projected-cut rounds for --form bf")
    s.set_defaults(func=_cmd_solve)

    pol = sub.add_parser("policy", help="run a policy or the brute-force oracle")
    pol.add_argument("--instance", required=True)
    pol.add_argument("--policy", choices=POLICIES, required=True)
    pol.add_argument("--bound-free", action="store_true")
    pol.add_argument("--cuts", type=int, default=1)
    pol.add_argument("--out")
    pol.set_defaults(func=_cmd_policy)

    cyc = sub.add_parser("cycle", help="best cyclic plan of a given length")
    add_common_solve(cyc)
    cyc.add_argument("--L", type=int, required=True)
    cyc.set_defaults(func=_cmd_cycle)

    rlx = sub.add_parser("relax", help="outer-approximated continuous relaxation value")
    rlx.add_argument("--instance", required=True)
    rlx.add_argument("--form", choices=FORMS, required=True)
    rlx.add_argument("--L", type=int)
    rlx.set_defaults(func=_cmd_relax)

    b = sub.add_parser("bench", help="benchmark formulations vs heuristics to CSV")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--t", type=int, required=True)
    b.add_argument("--m", type=int, required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--instances", type=int, default=5)
    b.add_argument("--regime", choices=("weak", "strong", "mixed"), default="weak")
    b.add_argument("--theta", type=float, default=0.0)
    b.add_argument("--forms", default="env")
    b.add_argument("--gap", type=float, default=0.005)
    b.add_argument("--time-limit", type=float, default=3600.0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_bench)

    e = sub.add_parser("export", help="write a formulation as an LP text file")
    e.add_argument("--instance", required=True)
    e.add_argument("--form", choices=FORMS, required=True)
    e.add_argument("--L", type=int)
    e.add_argument("--cuts", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_export)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (InstanceError, FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
