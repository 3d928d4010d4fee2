from fractions import Fraction

import numpy as np
import pytest

from clique_factory.bipartite import Matching, perfect_matching
from clique_factory.errors import InvalidArgument
from clique_factory.factor import ClusterGraph, find_factor, verify_factor
from clique_factory.generators import (GeneratorSpec, blowup, complete_cluster_graph, complete_multipartite,
                                       near_threshold_instance, random_cluster_graph)
from clique_factory.graph import MultipartiteGraph, proportional_min_degree
from clique_factory.regularity import BipartitePair, irregularity_witness_search
from clique_factory.thresholds import delta_of_q, gamma_of_q


def test_complete_multipartite_examples():
    assert complete_multipartite(3, 2).n_edges == 12
    assert complete_multipartite(2, 1).n_edges == 1
    for q, n in [(2, 3), (4, 2), (5, 1)]:
        assert proportional_min_degree(complete_multipartite(q, n)) == 1


def test_delta_one_gives_complete_graph():
    assert random_cluster_graph(3, 5, 1, seed=4).graph == complete_multipartite(3, 5)


def test_threshold_instance_measures_above_target():
    for seed in range(20):
        C = random_cluster_graph(3, 13, Fraction(9, 13), seed=seed, superset_p=0.0)
        assert proportional_min_degree(C.graph) >= Fraction(9, 13)
        assert C.graph.balanced


def test_bipartite_threshold_instances_have_perfect_matchings():
    for seed in range(100):
        C = random_cluster_graph(2, 4, Fraction(1, 2), seed=seed, superset_p=0.0)
        g = C.graph
        block = g.adj[np.ix_(g.classes[0], g.classes[1])]
        assert isinstance(perfect_matching(block), Matching)


def test_target_domain():
    with pytest.raises(InvalidArgument):
        random_cluster_graph(3, 5, Fraction(1, 3))


def test_same_seed_same_instance():
    a = random_cluster_graph(4, 10, seed=3)
    b = random_cluster_graph(4, 10, seed=3)
    assert a.graph == b.graph and a.to_json() == b.to_json()
    assert random_cluster_graph(4, 10, seed=4).graph != a.graph


def test_spec_travels_with_instance():
    C = random_cluster_graph(3, 7, seed=2)
    back = ClusterGraph.from_json(C.to_json())
    assert back.spec == C.spec
    assert GeneratorSpec.from_json(C.spec.to_json()) == C.spec


def test_near_threshold_margins():
    C = near_threshold_instance(3, 13, 0, seed=1)
    assert C.spec.delta_target == "9/13"
    g = gamma_of_q(3)
    for seed in range(10):
        C = near_threshold_instance(3, 13, Fraction(g).limit_denominator(10 ** 6), seed=seed, superset_p=0.0)
        assert proportional_min_degree(C.graph) >= delta_of_q(3) - Fraction(g).limit_denominator(10 ** 6)
        assert verify_factor(C, find_factor(C, seed=seed).factor).ok


def test_blowup_complete_pairs():
    C = complete_cluster_graph(3, 2)
    bi = blowup(C, 4, 1, seed=0)
    assert bi.graph == complete_multipartite(3, 8)
    assert bi.patched_edges == 0


def test_blowup_single_edge():
    g = MultipartiteGraph.from_edges([[0], [1]], [(0, 1)])
    bi = blowup(ClusterGraph(g), 3, 1, seed=0)
    assert bi.graph == complete_multipartite(2, 3)


def test_blowup_degree_floor_and_empty_non_edges():
    C = random_cluster_graph(3, 6, seed=1)
    m = 40
    bi = blowup(C, m, "3/5", seed=1)
    adj = bi.graph.adj
    floor = np.ceil(0.9 * 0.6 * m - 1e-9)
    for U in range(C.n_clusters):
        for V in range(C.n_clusters):
            blk = adj[U * m:(U + 1) * m, V * m:(V + 1) * m]
            if C.graph.adj[U, V]:
                assert blk.sum(axis=1).min() >= floor
            else:
                assert not blk.any()


def test_blowup_deterministic():
    C = random_cluster_graph(3, 6, seed=5)
    assert blowup(C, 20, "3/5", seed=2).graph == blowup(C, 20, "3/5", seed=2).graph


@pytest.mark.parametrize("m,d", [(100, "3/5"), (200, "1/2"), (200, "3/5")])
def test_blowup_patch_fraction_small(m, d):
    for seed in range(5):
        bi = blowup(random_cluster_graph(3, 6, seed=seed), m, d, seed=seed)
        assert bi.patch_fraction <= 0.01


@pytest.mark.xfail(strict=True, reason="at m < 100 the degree floor forces more than 1% patched edges")
@pytest.mark.parametrize("m,d", [(30, "1/2"), (50, "1/2"), (30, "3/5"), (50, "3/5")])
def test_blowup_patch_fraction_small_clusters(m, d):
    for seed in range(5):
        bi = blowup(random_cluster_graph(3, 6, seed=seed), m, d, seed=seed)
        assert bi.patch_fraction <= 0.01


@pytest.mark.xfail(strict=True, reason="the sampling tester finds deviations near 0.2 on 50 x 50 pairs")
def test_blowup_pairs_look_regular():
    m, seeds, failures = 50, 20, 0
    for seed in range(seeds):
        bi = blowup(random_cluster_graph(3, 6, seed=seed), m, "3/5", seed=seed)
        adj = bi.graph.adj
        worst = max(irregularity_witness_search(
            BipartitePair(adj[U * m:(U + 1) * m, V * m:(V + 1) * m]), 0.15, seed=U * 97 + V).epsilon_hat
            for U, V in bi.clusters.graph.edges())
        failures += worst >= 0.15
        if failures > 0.05 * seeds:
            break
    assert failures <= 0.05 * seeds
