"""Command-line front door.

Exit codes: 0 success, 1 usage or input error, 2 certified infeasibility or
failed verification. Every command can write a JSON run report that carries
everything needed to replay it (``replay --report``).
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from . import io as jio
from .bipartite import extract_regular, perfect_matching, randomized_matching
from .errors import CertifiedFailure, CliqueFactoryError, InvalidArgument
from .factor import (ClusterGraph, CliqueFactor, find_factor, frac_str, lemma_count, parse_frac,
                     verify_factor)
from .generators import (blowup, complete_cluster_graph, near_threshold_instance,
                         random_cluster_graph)
from .kernels import BACKEND_NAME
from .oracle import (exact_clique_factor, exact_perfect_matching, exact_regular_subgraph,
                     exhaustive_matching_threshold, exhaustive_regular_feasibility)
from .graph import MultipartiteGraph
from .regularity import (BipartitePair, grow, halve, irregularity_witness_search, random_growth,
                         random_split, trim_to_super_regular)
from .stage_two import run_pipeline
from .thresholds import ThresholdTable

EXIT_OK, EXIT_USAGE, EXIT_CERTIFIED = 0, 1, 2


@dataclass
class Outcome:
    code: int
    result: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    failure: dict | None = None
    timings_ms: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)      # large objects written by the handler


class _Clock:
    def __init__(self, out: Outcome, name: str):
        self.out, self.name = out, name

    def __enter__(self):
        self.t = time.perf_counter()

    def __exit__(self, *exc):
        self.out.timings_ms[self.name] = round((time.perf_counter() - self.t) * 1000, 3)
        return False


# --------------------------------------------------------------------------
# pure cores: spec dict in, Outcome out; replay calls these directly

def _make_instance(spec: dict) -> ClusterGraph:
    kind = spec["kind"]
    q, ell, seed = int(spec["q"]), int(spec["ell"]), int(spec.get("seed", 0))
    if kind == "complete":
        return complete_cluster_graph(q, ell)
    if kind == "random-threshold":
        delta = spec.get("delta")
        return random_cluster_graph(q, ell, parse_frac(delta) if delta else None, seed)
    if kind == "near-threshold":
        return near_threshold_instance(q, ell, parse_frac(spec.get("margin", "0")), seed)
    raise InvalidArgument(f"unknown instance kind {kind!r}")


def core_gen(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    with _Clock(out, "generate"):
        if spec["kind"] == "blowup":
            base = dict(spec, kind="random-threshold")
            C = _make_instance(base)
            bi = blowup(C, int(spec["m"]), parse_frac(spec["d"]), int(spec.get("seed", 0)),
                        spec.get("eps"))
            data = bi.graph.to_json()
            data.update(generator=bi.spec.to_json(), cluster_of=bi.cluster_of.tolist(),
                        clusters=C.to_json(), patched_edges=bi.patched_edges, pair_edges=bi.pair_edges)
            out.result = {"vertices": bi.graph.n_vertices, "edges": bi.graph.n_edges,
                          "patch_fraction": bi.patch_fraction}
        else:
            C = _make_instance(spec)
            data = C.to_json()
            from .graph import proportional_min_degree
            out.result = {"clusters": C.graph.n_vertices, "edges": C.graph.n_edges,
                          "delta": frac_str(proportional_min_degree(C.graph))}
    out.digests["instance"] = jio.digest(data)
    out.artifacts["instance"] = data
    return out


def core_solve(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    C = ClusterGraph.from_json(spec["instance"])
    try:
        with _Clock(out, "find_factor"):
            res = find_factor(C, q=spec.get("q"), seed=int(spec.get("seed", 0)),
                              enforce_threshold=not spec.get("no_threshold", False))
        with _Clock(out, "verify"):
            cert = verify_factor(C, res.factor)
    except CertifiedFailure as exc:
        out.code = EXIT_CERTIFIED
        out.failure = exc.to_dict()
        return out
    out.result = {"cliques": res.factor.n_cliques, "sizes": list(res.factor.sizes),
                  "participation": cert.participation, "lemma_count": lemma_count(res.factor.sizes),
                  "weight": frac_str(cert.weight) if cert.weight is not None else None,
                  "levels": [lv.to_json() for lv in res.levels]}
    out.digests["factor"] = cert.digest
    out.violations = list(cert.violations)
    if not cert.ok:
        out.code = EXIT_CERTIFIED
    out.artifacts["factor"] = res.factor
    return out


def core_verify(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    C = ClusterGraph.from_json(spec["instance"])
    F = CliqueFactor.from_json(spec["factor"])
    with _Clock(out, "verify"):
        cert = verify_factor(C, F)
    out.result = cert.to_json()
    out.digests["factor"] = cert.digest
    out.violations = list(cert.violations)
    out.code = EXIT_OK if cert.ok else EXIT_CERTIFIED
    return out


def core_pipeline(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    with _Clock(out, "pipeline"):
        report, result = run_pipeline(int(spec["q"]), int(spec["ell"]), int(spec["m"]), spec["d"],
                                      int(spec.get("seed", 0)), spec.get("eps"), spec.get("delta"))
    out.result = report.to_json()
    out.timings_ms.update(report.timings_ms)
    out.digests.update(report.digests)
    if not report.ok:
        out.code = EXIT_CERTIFIED
        out.failure = report.failure
    if result is not None:
        out.artifacts["embedding"] = result
    return out


def core_constants(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    table = ThresholdTable.build(int(spec["q"]), spec.get("ell"), spec.get("variant", "proof"),
                                 spec.get("eps"), spec.get("d"))
    out.result = table.to_json()
    out.digests["constants"] = jio.digest(out.result)
    return out


def core_oracle(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    what = spec["what"]
    with _Clock(out, what):
        if what == "factor":
            C = MultipartiteGraph.from_json(spec["instance"])
            res = exact_clique_factor(C, spec.get("q"))
            out.result = res.to_json()
            out.code = EXIT_OK if res.feasible else EXIT_CERTIFIED
        elif what == "matching" and spec.get("pair") is not None:
            res = exact_perfect_matching(BipartitePair.from_json(spec["pair"]).matrix)
            out.result = res.to_json()
            out.code = EXIT_OK if res.feasible else EXIT_CERTIFIED
        elif what == "matching":
            rep = exhaustive_matching_threshold(int(spec["n"]), spec.get("canonical"))
            out.result = rep.to_json()
            out.code = EXIT_OK if rep.all_matchable else EXIT_CERTIFIED
        elif what == "regular" and spec.get("pair") is not None:
            res = exact_regular_subgraph(BipartitePair.from_json(spec["pair"]).matrix, int(spec["r"]))
            out.result = res.to_json()
            out.code = EXIT_OK if res.feasible else EXIT_CERTIFIED
        elif what == "regular":
            rep = exhaustive_regular_feasibility(int(spec["n"]), spec.get("canonical"))
            out.result = rep.to_json()
            out.code = EXIT_OK if rep.all_feasible else EXIT_CERTIFIED
        else:
            raise InvalidArgument(f"unknown oracle {what!r}")
    out.digests["oracle"] = jio.digest(out.result)
    return out


def _pair_from_spec(spec: dict) -> BipartitePair:
    if spec.get("pair") is not None:
        return BipartitePair.from_json(spec["pair"])
    a, b, d = spec["random"]
    return BipartitePair.random(int(a), int(b), float(parse_frac(str(d))), int(spec.get("seed", 0)))


def core_reglab(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    op = spec["op"]
    pair = _pair_from_spec(spec)
    seed = int(spec.get("seed", 0))
    eps = spec.get("eps")
    samples = spec.get("samples")
    with _Clock(out, op):
        if op == "probe":
            rep = irregularity_witness_search(pair, float(eps if eps is not None else 0.1), samples, seed)
            out.result = rep.to_json()
        elif op == "trim":
            sr = trim_to_super_regular(pair, float(eps if eps is not None else 0.1),
                                       parse_frac(spec["d"]) if spec.get("d") else None)
            fa, fb = sr.discard_fractions(pair.a, pair.b)
            out.result = {"kept_a": list(sr.kept_a), "kept_b": list(sr.kept_b), "discard": [fa, fb],
                          "within_bound": sr.within_bound, "degrees_ok": sr.check_degrees()}
        elif op == "split":
            res = random_split(pair, int(spec.get("k", 2)), seed, eps, samples)
            out.result = {"max_epsilon_hat": res.max_epsilon_hat, "min_density": res.min_density,
                          "min_degree_proportion": res.min_degree_proportion,
                          "parts_a": [list(p) for p in res.parts_a], "parts_b": [list(p) for p in res.parts_b]}
        elif op == "halve":
            res = halve(pair, seed, eps, samples)
            out.result = {"rows": [list(r) for r in res.rows], "cols": [list(c) for c in res.cols],
                          "epsilon_hat": [r.epsilon_hat if r else None for r in res.reports],
                          "density": [float(res.first.density), float(res.second.density)]}
        elif op == "grow":
            rows, cols = random_growth(pair, int(spec.get("count", 1)), seed, spec.get("mode", "random"))
            res = grow(pair, rows, cols, float(eps if eps is not None else 0.1), seed, samples)
            out.result = {"added": list(res.added), "within_budget": res.within_budget,
                          "budget": res.budget, "report": res.report.to_json()}
        else:
            raise InvalidArgument(f"unknown reglab operation {op!r}")
    out.digests["reglab"] = jio.digest(out.result)
    return out


def core_match(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    pair = BipartitePair.from_json(spec["pair"])
    with _Clock(out, "match"):
        if spec.get("psi") is not None:
            try:
                rm = randomized_matching(pair.matrix, float(spec["psi"]), int(spec.get("seed", 0)))
            except CertifiedFailure as exc:
                out.code = EXIT_CERTIFIED
                out.failure = exc.to_dict()
                return out
            out.result = {"perfect": True, "pairs": [list(p) for p in rm.matching.pairs],
                          "attempts": rm.attempts}
        else:
            res = perfect_matching(pair.matrix)
            if hasattr(res, "pairs"):
                out.result = {"perfect": True, "pairs": [list(p) for p in res.pairs]}
            else:
                out.result = {"perfect": False, "hall_violator": res.to_dict()}
                out.code = EXIT_CERTIFIED
    out.digests["match"] = jio.digest(out.result)
    return out


def core_regularize(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    pair = BipartitePair.from_json(spec["pair"])
    r = spec.get("r")
    if r is None:
        from .bipartite import max_regular_degree
        r = max_regular_degree(pair.matrix)
    with _Clock(out, "regularize"):
        try:
            sub = extract_regular(pair.matrix, int(r))
        except CertifiedFailure as exc:
            out.code = EXIT_CERTIFIED
            out.failure = exc.to_dict()
            return out
    out.result = {"degree": sub.degree, "edges": [list(e) for e in sub.edges()]}
    out.digests["regular"] = jio.digest(out.result)
    return out


def _bench_cell(cell: dict) -> dict:
    """One grid cell; runs in a worker process."""
    t0 = time.perf_counter()
    runs, ok, certified, invalid = 0, 0, {}, 0
    lemma_ok = 0
    reach_ok = 0
    adj_pass = []
    phase_ms: dict[str, float] = {}
    for s in range(int(cell["seeds"])):
        seed = int(cell.get("seed0", 0)) + s
        runs += 1
        if cell["mode"] == "factor":
            spec = {"kind": "near-threshold", "q": cell["q"], "ell": cell["ell"],
                    "margin": cell.get("margin", "0"), "seed": seed}
            try:
                C = _make_instance(spec)
                t = time.perf_counter()
                res = find_factor(C, seed=seed, enforce_threshold=False)
                phase_ms["find_factor"] = phase_ms.get("find_factor", 0.0) + (time.perf_counter() - t) * 1000
                cert = verify_factor(C, res.factor)
            except CertifiedFailure as exc:
                certified[exc.kind] = certified.get(exc.kind, 0) + 1
                continue
            if not cert.ok:
                invalid += 1
                continue
            ok += 1
            lemma_ok += int(cert.participation == lemma_count(res.factor.sizes))
        else:
            report, _ = run_pipeline(cell["q"], cell["ell"], cell["m"], cell["d"], seed)
            for k, v in report.timings_ms.items():
                phase_ms[k] = phase_ms.get(k, 0.0) + v
            if report.reachability:
                reach_ok += int(report.reachability["all_pairs_within_two"])
                adj_pass.append(report.adjacency.get("pass_fraction", 0.0))
            if report.ok:
                ok += 1
            elif report.failure and report.failure.get("kind") not in (None, "unverified"):
                kind = report.failure["kind"]
                certified[kind] = certified.get(kind, 0) + 1
            else:
                invalid += 1
    row = dict(cell)
    row.update(runs=runs, successes=ok, success_rate=ok / runs if runs else None,
               certified_failures=certified, invalid=invalid,
               mean_ms={k: v / runs for k, v in phase_ms.items()}, wall_ms=(time.perf_counter() - t0) * 1000)
    if cell["mode"] == "factor":
        row["lemma_exact"] = lemma_ok
    else:
        row["reachability_rate"] = reach_ok / runs if runs else None
        row["adjacency_pass_mean"] = float(np.mean(adj_pass)) if adj_pass else None
    return row


def bench_grid(qs, ells, margins, seeds, mode="factor", ms=(50,), ds=("3/5",), jobs=1) -> list[dict]:
    cells = []
    for q in qs:
        for ell in ells:
            if mode == "factor":
                for margin in margins:
                    cells.append({"mode": mode, "q": q, "ell": ell, "margin": str(margin), "seeds": seeds})
            else:
                for m in ms:
                    for d in ds:
                        cells.append({"mode": mode, "q": q, "ell": ell, "m": m, "d": str(d), "seeds": seeds})
    if not cells:
        return []
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_bench_cell, cells))
    return [_bench_cell(c) for c in cells]


def core_bench(spec: dict) -> Outcome:
    out = Outcome(EXIT_OK)
    with _Clock(out, "bench"):
        rows = bench_grid(spec.get("q", []), spec.get("ell", []), spec.get("margin", ["0"]),
                          int(spec.get("seeds", 10)), spec.get("mode", "factor"),
                          spec.get("m", [50]), spec.get("d", ["3/5"]), int(spec.get("jobs", 1)))
    out.result = {"rows": rows}
    stable = [{k: v for k, v in r.items() if k not in ("mean_ms", "wall_ms")} for r in rows]
    out.digests["table"] = jio.digest(stable)
    if any(r["invalid"] for r in rows):
        out.code = EXIT_CERTIFIED
        out.violations = [f"cell {r['q']}/{r['ell']}: {r['invalid']} unverified results" for r in rows if r["invalid"]]
    return out


CORES = {"gen": core_gen, "solve": core_solve, "verify": core_verify, "pipeline": core_pipeline,
         "constants": core_constants, "oracle": core_oracle, "reglab": core_reglab, "bench": core_bench,
         "match": core_match, "regularize": core_regularize}


# --------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    """Usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _frac_arg(text: str) -> str:
    try:
        Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None
    return text


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()] if text else []


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()] if text else []


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clique-factory", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_report(sp):
        sp.add_argument("--report", help="write a JSON run report here")
        return sp

    g = with_report(sub.add_parser("gen", help="generate an instance"))
    g.add_argument("--kind", required=True, choices=["complete", "random-threshold", "near-threshold", "blowup"])
    g.add_argument("--q", type=int, required=True)
    g.add_argument("--ell", type=int, required=True)
    g.add_argument("--delta", type=_frac_arg, help="target proportional minimum degree (default: threshold)")
    g.add_argument("--margin", type=_frac_arg, default="0")
    g.add_argument("--m", type=int, default=50)
    g.add_argument("--d", type=_frac_arg, default="3/5")
    g.add_argument("--eps", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    s = with_report(sub.add_parser("solve", help="find a clique factor of a cluster graph"))
    s.add_argument("--input", required=True)
    s.add_argument("--q", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--no-threshold", action="store_true", help="skip the minimum-degree precondition")

    v = with_report(sub.add_parser("verify", help="check a factor against its instance"))
    v.add_argument("--factor", required=True)
    v.add_argument("--instance", required=True)

    pl = with_report(sub.add_parser("pipeline", help="generate, factor, blow up and embed"))
    pl.add_argument("--q", type=int, default=3)
    pl.add_argument("--ell", type=int, default=6)
    pl.add_argument("--m", type=int, default=50)
    pl.add_argument("--d", type=_frac_arg, default="3/5")
    pl.add_argument("--eps", type=float)
    pl.add_argument("--delta", type=_frac_arg)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--out", help="write the vertex-level cliques here")

    c = with_report(sub.add_parser("constants", help="threshold constants for q"))
    c.add_argument("--q", type=int, required=True)
    c.add_argument("--ell", type=int)
    c.add_argument("--variant", choices=["proof", "conservative"], default="proof")
    c.add_argument("--eps", type=float)
    c.add_argument("--d", type=float)

    o = sub.add_parser("oracle", help="exact brute-force answers for small inputs")
    osub = o.add_subparsers(dest="what", required=True, parser_class=_Parser)
    of = with_report(osub.add_parser("factor"))
    of.add_argument("--instance", required=True)
    of.add_argument("--q", type=int)
    om = with_report(osub.add_parser("matching"))
    om.add_argument("--n", type=int)
    om.add_argument("--pair")
    om.add_argument("--canonical", action=argparse.BooleanOptionalAction, default=None)
    orr = with_report(osub.add_parser("regular"))
    orr.add_argument("--n", type=int)
    orr.add_argument("--pair")
    orr.add_argument("--r", type=int)
    orr.add_argument("--canonical", action=argparse.BooleanOptionalAction, default=None)

    r = sub.add_parser("reglab", help="regularity experiments on one bipartite pair")
    rsub = r.add_subparsers(dest="op", required=True, parser_class=_Parser)
    for name in ("probe", "trim", "split", "halve", "grow"):
        rp = with_report(rsub.add_parser(name))
        src = rp.add_mutually_exclusive_group(required=True)
        src.add_argument("--pair", help="pair JSON {a, b, edges}")
        src.add_argument("--random", nargs=3, metavar=("A", "B", "D"), help="random pair of density D")
        rp.add_argument("--eps", type=float)
        rp.add_argument("--seed", type=int, default=0)
        rp.add_argument("--samples", type=int)
        if name == "trim":
            rp.add_argument("--d", type=_frac_arg)
        if name == "split":
            rp.add_argument("--k", type=int, default=2)
        if name == "grow":
            rp.add_argument("--count", type=int, default=1)
            rp.add_argument("--mode", choices=["random", "empty", "full"], default="random")

    b = with_report(sub.add_parser("bench", help="sweep a parameter grid"))
    b.add_argument("--mode", choices=["factor", "pipeline"], default="factor")
    b.add_argument("--q", type=_int_list, default=[3])
    b.add_argument("--ell", type=_int_list, default=[13])
    b.add_argument("--margin", type=_str_list, default=["0"])
    b.add_argument("--m", type=_int_list, default=[50])
    b.add_argument("--d", type=_str_list, default=["3/5"])
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--jobs", type=int, default=int(os.environ.get("CLIQUE_FACTORY_JOBS", "1") or 1))
    b.add_argument("--csv")
    b.add_argument("--json")

    mt = with_report(sub.add_parser("match", help="perfect matching or Hall violator"))
    mt.add_argument("--pair", required=True)
    mt.add_argument("--psi", type=float, help="use the randomised matching with this margin")
    mt.add_argument("--seed", type=int, default=0)

    rg = with_report(sub.add_parser("regularize", help="regular spanning subgraph or cut certificate"))
    rg.add_argument("--pair", required=True)
    rg.add_argument("--r", type=int, help="target degree (default: largest guaranteed)")

    rp = sub.add_parser("replay", help="rerun a report and compare digests")
    rp.add_argument("--report", required=True, dest="replay_report")
    return p


def spec_from_args(args) -> dict:
    cmd = args.command
    if cmd == "gen":
        spec = {"kind": args.kind, "q": args.q, "ell": args.ell, "seed": args.seed, "margin": args.margin}
        if args.delta:
            spec["delta"] = args.delta
        if args.kind == "blowup":
            spec.update(m=args.m, d=args.d, eps=args.eps)
        return spec
    if cmd == "solve":
        return {"instance": jio.read_json(args.input), "q": args.q, "seed": args.seed,
                "no_threshold": args.no_threshold}
    if cmd == "verify":
        return {"instance": jio.read_json(args.instance), "factor": jio.read_json(args.factor)}
    if cmd == "pipeline":
        return {"q": args.q, "ell": args.ell, "m": args.m, "d": args.d, "seed": args.seed,
                "eps": args.eps, "delta": args.delta}
    if cmd == "constants":
        return {"q": args.q, "ell": args.ell, "variant": args.variant, "eps": args.eps, "d": args.d}
    if cmd == "oracle":
        spec = {"what": args.what}
        if args.what == "factor":
            spec.update(instance=jio.read_json(args.instance), q=args.q)
        else:
            if args.pair is None and args.n is None:
                raise InvalidArgument("give --n for an exhaustive sweep or --pair for one graph")
            spec.update(n=args.n, canonical=args.canonical,
                        pair=jio.read_json(args.pair) if args.pair else None)
            if args.what == "regular":
                if args.pair and args.r is None:
                    raise InvalidArgument("--pair needs --r")
                spec["r"] = args.r
        return spec
    if cmd == "reglab":
        spec = {"op": args.op, "seed": args.seed, "eps": args.eps, "samples": args.samples,
                "pair": jio.read_json(args.pair) if args.pair else None, "random": args.random}
        for key in ("d", "k", "count", "mode"):
            if hasattr(args, key):
                spec[key] = getattr(args, key)
        return spec
    if cmd == "bench":
        return {"mode": args.mode, "q": args.q, "ell": args.ell, "margin": args.margin, "m": args.m,
                "d": args.d, "seeds": args.seeds, "jobs": max(1, args.jobs)}
    if cmd == "match":
        return {"pair": jio.read_json(args.pair), "psi": args.psi, "seed": args.seed}
    if cmd == "regularize":
        return {"pair": jio.read_json(args.pair), "r": args.r}
    raise InvalidArgument(f"unknown command {cmd!r}")


def make_report(command: str, spec: dict, out: Outcome) -> dict:
    return {"command": command, "version": __version__, "backend": BACKEND_NAME,
            "seed": spec.get("seed"), "spec": spec, "exit_code": out.code, "timings_ms": out.timings_ms,
            "outcome": out.result, "digests": out.digests, "violations": out.violations,
            "failure": out.failure}


def _write_outputs(args, out: Outcome) -> None:
    if args.command == "gen":
        jio.write_json(args.out, out.artifacts["instance"])
    elif args.command == "solve" and args.out and "factor" in out.artifacts:
        jio.write_json(args.out, out.artifacts["factor"].to_json())
    elif args.command == "pipeline" and args.out and "embedding" in out.artifacts:
        jio.write_json(args.out, {"cliques": out.artifacts["embedding"].cliques.tolist(),
                                  "digest": out.digests.get("embedding")})
    elif args.command == "bench":
        rows = out.result["rows"]
        if args.json:
            jio.write_json(args.json, rows, indent=2)
        if args.csv:
            write_csv(args.csv, rows)


def write_csv(path, rows: list[dict]) -> None:
    keys = sorted({k for r in rows for k in r})
    buf = _stdio.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys)
    w.writeheader()
    for r in rows:
        w.writerow({k: jio.dumps(v) if isinstance(v, (dict, list)) else v for k, v in r.items()})
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def replay(path) -> tuple[int, dict]:
    """Rerun the recorded command and compare every recorded digest."""
    old = jio.read_json(path)
    core = CORES.get(old.get("command"))
    if core is None:
        raise InvalidArgument(f"report has unknown command {old.get('command')!r}")
    out = core(old["spec"])
    diffs = {k: {"recorded": v, "replayed": out.digests.get(k)}
             for k, v in old.get("digests", {}).items() if out.digests.get(k) != v}
    result = {"command": old["command"], "recorded_version": old.get("version"), "version": __version__,
              "identical": not diffs and out.code == old.get("exit_code"), "differences": diffs,
              "exit_code": out.code, "recorded_exit_code": old.get("exit_code")}
    return (EXIT_OK if result["identical"] else EXIT_CERTIFIED), result


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            code, result = replay(args.replay_report)
            print(jio.dumps(result, indent=2))
            return code
        spec = spec_from_args(args)
        out = CORES[args.command](spec)
        _write_outputs(args, out)
    except FileNotFoundError as exc:
        print(f"clique-factory: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CertifiedFailure as exc:
        print(jio.dumps({"failure": exc.to_dict()}, indent=2))
        return EXIT_CERTIFIED
    except (CliqueFactoryError, ValueError, KeyError) as exc:
        print(f"clique-factory: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = make_report(args.command, spec, out)
    if getattr(args, "report", None):
        jio.write_json(args.report, report)
    summary = {"exit_code": out.code, "digests": out.digests, "outcome": out.result}
    if out.failure:
        summary["failure"] = out.failure
    if out.violations:
        summary["violations"] = out.violations[:20]
    if args.command == "bench":
        summary["outcome"] = {"cells": len(out.result["rows"]),
                              "success_rates": [r["success_rate"] for r in out.result["rows"]]}
    print(jio.dumps(summary, indent=2))
    return out.code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
