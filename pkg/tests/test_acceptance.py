"""Acceptance suite: one test per headline criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` to see the lines; the
``n = 5`` exhaustive sweep additionally needs ``--run-slow``.
"""
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from clique_factory import cli
from clique_factory.errors import RegularSubgraphInfeasible
from clique_factory.bipartite import Matching, extract_regular, perfect_matching
from clique_factory.factor import find_factor, lemma_count, verify_factor
from clique_factory.generators import random_cluster_graph
from clique_factory.oracle import (enumerate_bipartite, exact_perfect_matching, exact_regular_subgraph,
                                   min_degree, regular_degree_for)
from clique_factory.regularity import (BipartitePair, grow, halve, irregularity_witness_search,
                                       random_growth, random_split, trim_to_super_regular)
from clique_factory.stage_two import run_pipeline
from clique_factory.thresholds import check_induction, delta_of_q, k_of_q, recursed_delta, rho


@pytest.fixture
def say(capsys):
    def emit(name: str, passed: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return emit


def test_constants_chain(say):
    t = time.perf_counter()
    k3, d3 = k_of_q(3), delta_of_q(3)
    checks = [abs(rho(0.68) - 0.64) <= 1e-12,
              abs(recursed_delta(0.68) - 0.5) <= 1e-12,
              k3 == Fraction(9, 4),
              d3 == Fraction(9, 13),
              Fraction(68, 100) < d3,
              k3 / (k3 + 1) - Fraction(68, 100) > Fraction(1, 100)]
    elapsed = time.perf_counter() - t
    passed = all(checks) and elapsed < 1
    say("constants chain", passed, f"rho(0.68)={rho(0.68)!r} recursed={recursed_delta(0.68)!r} "
        f"k_3={k3} delta_3={d3} in {elapsed:.3f}s")
    assert passed


def test_threshold_induction_sweep(say):
    t = time.perf_counter()
    margins = {q: check_induction(q) for q in range(3, 65)}
    steps = all(k_of_q(q) - k_of_q(q - 1) == 1 + Fraction(1, 2 * q - 2) for q in range(3, 65))
    elapsed = time.perf_counter() - t
    worst = min(margins, key=margins.get)
    passed = min(margins.values()) > 1e-9 and steps and elapsed < 1
    say("induction sweep q=3..64", passed,
        f"smallest margin {margins[worst]:.3e} at q={worst}, recurrence exact={steps}, {elapsed:.3f}s")
    assert passed


def _exhaustive(n: int) -> tuple[int, int]:
    """Graphs checked and disagreements, over all graphs with minimum degree at least ceil(n/2)."""
    graphs = bad = 0
    for m in enumerate_bipartite(n, math.ceil(n / 2), canonical=n >= 5):
        graphs += 1
        r = regular_degree_for(n, min_degree(m))
        om, orr = exact_perfect_matching(m), exact_regular_subgraph(m, r)
        sm = perfect_matching(m)
        try:
            # degree 0 is met by the empty subgraph; the solver only accepts r >= 1
            sr = r == 0 or extract_regular(m, r).is_regular()
        except RegularSubgraphInfeasible:
            sr = False
        bad += not (om.feasible and orr.feasible and isinstance(sm, Matching) and sm.perfect and sr)
    return graphs, bad


@pytest.mark.parametrize("n", [1, 2, 3, 4, pytest.param(5, marks=pytest.mark.slow)])
def test_exhaustive_matching_and_regular(n, say):
    graphs, bad = _exhaustive(n)
    say(f"exhaustive n={n}", bad == 0 and graphs > 0, f"{graphs} graphs, {bad} disagreements")
    assert graphs > 0 and bad == 0


def test_factor_finder_sweep(say):
    failures = []
    runs = 0
    for q in (3, 4, 5):
        for ell in (13, 26, 52):
            for seed in range(100):
                C = random_cluster_graph(q, ell, delta_of_q(q), seed=seed)
                F = find_factor(C, seed=seed).factor
                cert = verify_factor(C, F)
                runs += 1
                if not (cert.ok and cert.participation == lemma_count(F.sizes)):
                    failures.append((q, ell, seed))
    say("factor finder 100 seeds x q{3,4,5} x ell{13,26,52}", not failures,
        f"{runs - len(failures)}/{runs} runs verified with exact weights and participation")
    assert not failures


@pytest.fixture(scope="module")
def pipeline_runs():
    return [run_pipeline(q=3, ell=6, m=50, d="3/5", seed=s)[0] for s in range(50)]


def test_end_to_end_pipeline(pipeline_runs, say):
    ok = sum(r.ok for r in pipeline_runs)
    unverified = [r.params["seed"] for r in pipeline_runs
                  if not r.ok and (r.failure is None or r.failure.get("kind") == "unverified")]
    passed = ok / len(pipeline_runs) >= 0.95 and not unverified
    say("pipeline q=3 ell=6 m=50 d=3/5", passed,
        f"{ok}/{len(pipeline_runs)} verified embeddings, {len(unverified)} uncertified failures")
    assert passed


def test_reachability_and_adjacency(pipeline_runs, say):
    reach = [r.reachability.get("all_pairs_within_two", False) for r in pipeline_runs]
    pairs = sum(r.adjacency.get("pairs", 0) for r in pipeline_runs)
    passed_pairs = sum(r.adjacency.get("pass_fraction", 0) * r.adjacency.get("pairs", 0) for r in pipeline_runs)
    reach_rate = sum(reach) / len(reach)
    adj_rate = passed_pairs / pairs if pairs else 0.0
    passed = reach_rate >= 0.9 and adj_rate >= 0.9
    say("reachability and adjacent cliques", passed,
        f"all pairs within two steps in {reach_rate:.0%} of seeds, adjacency bound met on {adj_rate:.1%} of pairs")
    assert passed


REG_SEEDS = 20


def _regularity_rates(m: int) -> dict[str, float]:
    ok = {"halve": 0, "split": 0, "grow": 0, "trim": 0}
    for s in range(REG_SEEDS):
        p = BipartitePair.random(m, m, 0.5, s)
        e_in = irregularity_witness_search(p, 0.1, seed=s).epsilon_hat
        h = halve(p, seed=s, eps=0.1)
        ok["halve"] += min(h.first.density, h.second.density) >= float(p.density) - e_in - 0.02
        sp = random_split(p, m // 100, seed=s, eps=0.15)
        ok["split"] += sp.min_degree_proportion >= p.min_degree_proportion() - 0.15 and sp.max_epsilon_hat <= 0.3
        rows, cols = random_growth(p, m // 100, seed=s, mode="empty")
        g = grow(p, rows, cols, 0.1, seed=s)
        ok["grow"] += g.report.epsilon_hat <= 2 * math.sqrt(e_in) + 0.02 and g.within_budget
        t = trim_to_super_regular(BipartitePair.random(m, m, 0.6, s), 0.1, "3/5")
        fa, fb = t.discard_fractions(m, m)
        ok["trim"] += fa <= 0.2 and fb <= 0.2 and t.check_degrees()
    return {k: v / REG_SEEDS for k, v in ok.items()}


@pytest.mark.parametrize("m", [200, 400])
def test_regularity_suite(m, say):
    rates = _regularity_rates(m)
    passed = all(v >= 0.95 for v in rates.values())
    say(f"regularity suite m={m}", passed, ", ".join(f"{k} {v:.0%}" for k, v in rates.items()))
    assert passed


def test_replay_is_byte_identical(tmp_path, say, capsys):
    inst = tmp_path / "instance.json"
    pair = tmp_path / "pair.json"
    rng = np.random.default_rng(0)
    pair.write_text(json.dumps({"a": 8, "b": 8, "edges": [[a, b] for a in range(8) for b in range(8)
                                                          if rng.random() < 0.7 or a == b]}))
    commands = {
        "gen": ["gen", "--kind", "random-threshold", "--q", 3, "--ell", 13, "--seed", 4, "--out", inst],
        "solve": ["solve", "--input", inst, "--seed", 4],
        "pipeline": ["pipeline", "--seed", 3],
        "constants": ["constants", "--q", 5],
        "split": ["reglab", "split", "--random", 40, 40, 0.5, "--k", 2, "--seed", 1, "--samples", 100],
        "match": ["match", "--pair", pair],
        "bench": ["bench", "--q", 3, "--ell", 13, "--seeds", 3],
    }
    results = {}
    for name, argv in commands.items():
        rep = tmp_path / f"{name}.json"
        cli.run([str(a) for a in argv] + ["--report", str(rep)])
        capsys.readouterr()
        recorded = json.loads(rep.read_text())
        _, outcome = cli.replay(rep)
        results[name] = bool(recorded["digests"]) and outcome["identical"]
    passed = all(results.values())
    say("replay determinism", passed, ", ".join(f"{k}={'same' if v else 'DIFFERENT'}" for k, v in results.items()))
    assert passed
