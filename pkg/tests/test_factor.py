from fractions import Fraction

import numpy as np
import pytest

from clique_factory.errors import ThresholdViolation
from clique_factory.factor import (ClusterGraph, CliqueFactor, clique_participation_count, find_factor,
                                   lemma_count, sigma_assign, verify_factor)
from clique_factory.generators import complete_cluster_graph, near_threshold_instance, random_cluster_graph
from clique_factory.graph import proportional_min_degree
from clique_factory.thresholds import floor_rho_times


def test_complete_three_partite():
    C = complete_cluster_graph(3, 4)
    F = find_factor(C, seed=0).factor
    cert = verify_factor(C, F)
    assert cert.ok and cert.violations == ()
    assert cert.participation == lemma_count(F.sizes)


def test_q3_ell13_clique_count():
    C = random_cluster_graph(3, 13, Fraction(9, 13), seed=1)
    fr = find_factor(C, seed=2)
    F = fr.factor
    assert verify_factor(C, F).ok
    s2 = F.sizes[1]
    assert F.n_cliques == 13 * s2
    # the regular degree is rho of the measured degree, or one less after a retry
    guaranteed = floor_rho_times(proportional_min_degree(C.graph), 13)
    assert s2 in (guaranteed, guaranteed - 1) if fr.levels[0].retried else s2 == guaranteed


def test_q2_is_a_perfect_matching():
    for seed in range(10):
        C = random_cluster_graph(2, 8, Fraction(1, 2), seed=seed)
        F = find_factor(C, seed=seed).factor
        cert = verify_factor(C, F)
        assert cert.ok and F.n_cliques == 8 and cert.participation == 1


def test_sigma_examples():
    r = np.eye(5, dtype=bool)[[2, 0, 4, 1, 3]]
    sig = sigma_assign([r], 1, seed=0)
    assert sig.targets[0][:, 0].tolist() == [int(np.flatnonzero(r[:, u])[0]) for u in range(5)]
    full = sigma_assign([np.ones((6, 6), dtype=bool)], 6, seed=3)
    assert (full.fibre_sizes(0, 6) == 6).all()
    assert all(sorted(row) == list(range(6)) for row in full.targets[0].tolist())


def test_sigma_fibres_on_realized_run():
    C = random_cluster_graph(3, 13, seed=5)
    fr = find_factor(C, seed=5, keep_regular=True)
    mu = fr.factor.sizes[1]
    sig = sigma_assign(fr.regular_subgraphs, mu, seed=1)
    for i in range(len(fr.regular_subgraphs)):
        assert (sig.fibre_sizes(i, 13) == mu).all()


def test_participation_q3_q4():
    C = random_cluster_graph(3, 13, seed=7)
    F = find_factor(C, seed=7).factor
    assert {clique_participation_count(F, U, C.n_clusters) for U in range(C.n_clusters)} == {F.sizes[1]}
    C = random_cluster_graph(4, 40, seed=8)
    F = find_factor(C, seed=8).factor
    counts = F.participation(C.n_clusters)
    assert (counts == F.sizes[1] * F.sizes[2]).all() and len(counts) == 160
    assert verify_factor(C, F).ok


def test_participation_q2():
    C = random_cluster_graph(2, 6, seed=0)
    F = find_factor(C, seed=0).factor
    assert all(clique_participation_count(F, U, 12) == 1 for U in range(12))


def _with(F: CliqueFactor, **changes) -> CliqueFactor:
    fields = dict(q=F.q, cliques=F.cliques, weight_unit=F.weight_unit, weight_mult=F.weight_mult,
                  class_order=F.class_order, blocks=F.blocks, sizes=F.sizes, provenance=F.provenance)
    fields.update(changes)
    return CliqueFactor(**fields)


def test_doubled_weight_is_reported():
    C = random_cluster_graph(3, 13, seed=3)
    F = find_factor(C, seed=3).factor
    mult = F.weight_mult.copy()
    mult[4] = 2
    cert = verify_factor(C, _with(F, weight_mult=mult))
    assert not cert.ok
    weight = [v for v in cert.violations if v.startswith("weight")]
    named = {f"cluster {int(u)} " for u in F.cliques[4]}
    assert weight and all(any(n in v for n in named) for v in weight)


def test_non_adjacent_pair_is_reported():
    C = random_cluster_graph(3, 13, seed=4, superset_p=0.0)
    F = find_factor(C, seed=4).factor
    cl = F.cliques.copy()
    a = int(cl[0, 0])
    non = [int(u) for u in C.graph.classes[1] if not C.graph.adj[a, u]]
    assert non
    cl[0, 1] = non[0]
    cert = verify_factor(C, _with(F, cliques=cl))
    assert any(v.startswith("adjacency") and f"{a} and {non[0]}" in v for v in cert.violations)


def test_threshold_enforced():
    C = near_threshold_instance(3, 13, margin=0.2, seed=1, superset_p=0.0)
    with pytest.raises(ThresholdViolation) as exc:
        find_factor(C, seed=0)
    assert exc.value.certificate["q"] == 3


def test_failures_below_threshold_are_certified():
    from clique_factory.errors import CertifiedFailure
    for seed in range(10):
        C = near_threshold_instance(3, 13, margin=0.2, seed=seed, superset_p=0.0)
        try:
            F = find_factor(C, seed=seed, enforce_threshold=False).factor
        except CertifiedFailure as exc:
            assert exc.certificate
        else:
            assert verify_factor(C, F).ok


def test_json_round_trip():
    C = random_cluster_graph(3, 13, seed=9)
    F = find_factor(C, seed=9).factor
    C2 = ClusterGraph.from_json(C.to_json())
    F2 = CliqueFactor.from_json(F.to_json())
    assert C2.graph == C.graph
    assert F2.digest() == F.digest() and verify_factor(C2, F2).ok


def test_deterministic_digest():
    C = random_cluster_graph(4, 26, seed=11)
    assert find_factor(C, seed=1).factor.digest() == find_factor(C, seed=1).factor.digest()
