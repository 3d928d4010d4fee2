import itertools

import numpy as np
import pytest

from clique_factory import oracle
from clique_factory.errors import TooLarge
from clique_factory.factor import find_factor
from clique_factory.generators import complete_multipartite, random_cluster_graph
from clique_factory.graph import MultipartiteGraph


def k222_minus_a1b1():
    # a1=0 a2=1 | b1=2 b2=3 | c1=4 c2=5
    g = complete_multipartite(3, 2)
    adj = g.adj.copy()
    adj[0, 2] = adj[2, 0] = False
    return MultipartiteGraph(g.classes, adj)


def is_factor(g, witness):
    used = sorted(int(v) for row in witness for v in row)
    if used != list(range(g.n_vertices)):
        return False
    return all(g.adj[a, b] for row in witness for a, b in itertools.combinations(row, 2))


def test_octahedron():
    g = complete_multipartite(3, 2)
    res = oracle.exact_clique_factor(g)
    assert res.feasible and len(res.witness) == 2 and is_factor(g, res.witness)


def test_octahedron_minus_edge():
    g = k222_minus_a1b1()
    res = oracle.exact_clique_factor(g)
    assert res.feasible and is_factor(g, res.witness)
    assert {tuple(sorted(r)) for r in res.witness.tolist()} == {(0, 3, 4), (1, 2, 5)} or \
        {tuple(sorted(r)) for r in res.witness.tolist()} == {(0, 3, 5), (1, 2, 4)}


def test_isolated_vertex_is_infeasible():
    g = complete_multipartite(3, 3)
    adj = g.adj.copy()
    adj[4, :] = adj[:, 4] = False
    assert not oracle.exact_clique_factor(MultipartiteGraph(g.classes, adj)).feasible


def test_size_cap():
    with pytest.raises(TooLarge):
        oracle.exact_clique_factor(complete_multipartite(4, 8))
    with pytest.raises(TooLarge):
        oracle.exhaustive_matching_threshold(6)


def test_solver_successes_are_oracle_feasible():
    for seed in range(10):
        C = random_cluster_graph(3, 8, seed=seed)
        assert oracle.exact_clique_factor(C.graph).feasible
        find_factor(C, seed=seed)


def test_matching_threshold_small_n():
    r2 = oracle.exhaustive_matching_threshold(2)
    assert r2.all_matchable and r2.counterexample is not None
    assert oracle.exhaustive_matching_threshold(3).all_matchable
    r4 = oracle.exhaustive_matching_threshold(4)
    assert r4.all_matchable and r4.counterexample is not None
    m = np.array(r4.counterexample, dtype=bool)
    assert oracle.min_degree(m) == 1 and not oracle.exact_perfect_matching(m).feasible


def test_regular_feasibility_examples():
    assert oracle.regular_degree_for(2, 1) == 0
    assert oracle.exact_regular_subgraph(np.eye(2, dtype=bool), 0).feasible
    assert oracle.regular_degree_for(4, 3) == 2
    assert oracle.regular_degree_for(4, 2) == 1
    rep = oracle.exhaustive_regular_feasibility(4)
    assert rep.all_feasible
    assert rep.by_degree[3][0] == 2 and rep.by_degree[2][0] == 1


def test_enumeration_counts():
    # all 2x2 matrices with row and column sums >= 1: 7 of 16
    assert sum(1 for _ in oracle.enumerate_bipartite(2, 1, canonical=False)) == 7
    canon = list(oracle.enumerate_bipartite(3, 0, canonical=True))
    assert len(canon) == len(list(itertools.combinations_with_replacement(range(8), 3)))


def test_exact_regular_subgraph_witness():
    m = np.ones((4, 4), dtype=bool)
    res = oracle.exact_regular_subgraph(m, 3)
    assert res.feasible
    assert (res.witness.sum(axis=0) == 3).all() and (res.witness.sum(axis=1) == 3).all()
    assert not oracle.exact_regular_subgraph(np.eye(4, dtype=bool), 2).feasible
