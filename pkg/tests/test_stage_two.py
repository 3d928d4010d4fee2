from fractions import Fraction

import numpy as np
import pytest

from clique_factory import stage_two as st2
from clique_factory.bipartite import Matching, perfect_matching
from clique_factory.errors import CertifiedFailure
from clique_factory.factor import ClusterGraph, CliqueFactor, find_factor
from clique_factory.generators import blowup, complete_cluster_graph, random_cluster_graph
from clique_factory.graph import MultipartiteGraph


def instance(C, m, d, seed=0, eps=None):
    F = find_factor(C, seed=seed).factor
    bi = blowup(C, m, d, seed=seed, eps=eps)
    return st2.split_clusters(bi, F, seed=seed, eps=eps)


def with_graph(inst, adj):
    g = MultipartiteGraph(inst.graph.classes, adj)
    return st2.BlownInstance(g, inst.clusters, inst.parent, inst.factor, inst.slot, inst.d, inst.eps, inst.w0_bound)


def single_clique(m, d, seed, eps):
    """One triangle of clusters blown up, covered by a one-clique factor."""
    g = MultipartiteGraph.from_edges([[0], [1], [2]], [(0, 1), (0, 2), (1, 2)])
    C = ClusterGraph(g)
    F = CliqueFactor(3, np.array([[0, 1, 2]], dtype=np.int32), Fraction(1), np.ones(1, dtype=np.int64),
                     (0, 1, 2), (1, 1), (1, 1))
    bi = blowup(C, m, d, seed=seed, eps=eps)
    return st2.split_clusters(bi, F, seed=seed, eps=eps)


# trimming --------------------------------------------------------------------

def test_complete_blowup_trims_nothing():
    inst = instance(complete_cluster_graph(3, 2), 8, 1, eps=0.05)
    out, rep = st2.trim_cliques(inst)
    assert rep.removed == 0 and len(out.w0) == 0


def test_planted_isolated_vertex_is_the_only_one_trimmed():
    inst = instance(complete_cluster_graph(3, 2), 10, 1, eps=0.1)
    adj = inst.graph.adj.copy()
    adj[7, :] = adj[:, 7] = False
    out, rep = st2.trim_cliques(with_graph(inst, adj))
    assert out.w0.tolist() == [7] and rep.removed == 1


def test_trim_discards_within_twice_eps():
    eps, ok, seeds = 0.05, 0, 20
    for seed in range(seeds):
        out, rep = st2.trim_cliques(single_clique(50, "3/5", seed, eps), eps=eps)
        ok += rep.discard_fraction.max() <= 2 * eps
    assert ok >= 0.95 * seeds


def test_trim_reports_weak_instances():
    inst = instance(random_cluster_graph(3, 6, seed=1), 30, "3/5", seed=1, eps=0.05)
    with pytest.raises(CertifiedFailure):
        st2.trim_cliques(inst, d="19/20")


# clique adjacency --------------------------------------------------------------

def test_clique_adjacent_examples():
    inst = instance(complete_cluster_graph(3, 2), 8, 1)
    for v in range(0, inst.graph.n_vertices, 5):
        assert all(st2.clique_adjacent(v, k, inst) for k in range(inst.K))
    adj = inst.graph.adj.copy()
    adj[3, :] = adj[:, 3] = False
    lonely = with_graph(inst, adj)
    assert not any(st2.clique_adjacent(3, k, lonely) for k in range(inst.K))


def test_clique_adjacent_boundary():
    inst = instance(complete_cluster_graph(3, 2), 8, 1)
    d = Fraction(3, 5)
    v = 0
    k = 1
    adj = inst.graph.adj.copy()
    for j in (1, 2):
        members = inst.members(k, j)
        need = -(-d.numerator * len(members) // d.denominator)
        adj[v, members] = adj[members, v] = False
        adj[v, members[:need]] = adj[members[:need], v] = True
    planted = with_graph(inst, adj)
    assert st2.clique_adjacent(v, k, planted, d)
    adj[v, inst.members(k, 1)[0]] = adj[inst.members(k, 1)[0], v] = False
    assert not st2.clique_adjacent(v, k, with_graph(inst, adj), d)


# redistribution ------------------------------------------------------------------

def test_redistribute_empty_w0_is_identity():
    inst = instance(complete_cluster_graph(3, 2), 8, 1)
    out, rep = st2.redistribute_w0(inst)
    assert rep.placed == 0 and np.array_equal(out.slot, inst.slot)


def test_single_w0_vertex_goes_to_least_loaded_cluster():
    inst = instance(complete_cluster_graph(3, 2), 8, 1)
    v = int(inst.members(2, 1)[0])
    inst.slot[v] = st2.W0
    sizes = inst.sizes()
    out, rep = st2.redistribute_w0(inst)
    k = int(out.slot[v])
    assert rep.placed == 1 and len(out.w0) == 0
    assert sizes[k, 1] == sizes[:, 1].min()
    assert out.log[-1].phase == "redistribute" and out.log[-1].dest == k


def test_w0_cap_formula():
    assert st2.w0_cap(0, 0.2, (6, 4), 24) == 0
    c = 4 * 0.2 ** 2 / (8 * 4)
    assert st2.w0_cap(30, 0.2, (6, 4), 24) == int(np.ceil(30 / (c * 24)))


# clique digraphs -------------------------------------------------------------------

def test_digraph_of_complete_cluster_graph():
    C = complete_cluster_graph(3, 3)
    F = find_factor(C, seed=0).factor
    dg = st2.build_clique_digraph(C, F)
    full = ~np.eye(F.n_cliques, dtype=bool)
    assert all(np.array_equal(dg.arcs[i], full) for i in range(3))


def test_split_copies_point_at_each_other():
    C = random_cluster_graph(3, 6, seed=3)
    F = find_factor(C, seed=3).factor
    dg = st2.build_clique_digraph(C, F)
    for i in range(3):
        col = F.cliques[:, i]
        same = (col[:, None] == col[None, :]) & ~np.eye(len(col), dtype=bool)
        assert dg.arcs[i][same].all()


def test_digraph_arc_rule():
    C = random_cluster_graph(3, 6, seed=4)
    F = find_factor(C, seed=4).factor
    dg = st2.build_clique_digraph(C, F, i=0)
    adj = C.graph.adj
    for k1 in range(0, F.n_cliques, 3):
        for k2 in range(F.n_cliques):
            if k1 != k2:
                U = F.cliques[k1, 0]
                assert dg.arcs[0][k1, k2] == all(adj[U, F.cliques[k2, j]] for j in (1, 2))


# rebalancing -------------------------------------------------------------------------

def test_balanced_instance_is_left_alone():
    inst = instance(complete_cluster_graph(3, 2), 8, 1)
    out, rep = st2.rebalance(inst)
    assert rep.moves == 0 and np.array_equal(out.slot, inst.slot)


def test_single_surplus_moves_one_vertex():
    inst = instance(complete_cluster_graph(3, 2), 8, 1)
    v = int(inst.members(0, 0)[0])
    inst.slot[v] = 1
    out, rep = st2.rebalance(inst)
    assert rep.moves == 1
    assert (out.sizes() == out.sizes()[0, 0]).all()


def test_unbalanced_split_is_repaired():
    inst = instance(random_cluster_graph(3, 6, seed=2), 50, "3/5", seed=2)
    threshold = float(inst.d) - inst.eps
    mask = inst.adjacency_mask(threshold)
    k_from = 0
    moved = 0
    for v in inst.members(k_from, 0):
        dest = [k for k in np.flatnonzero(mask[v]) if k != k_from]
        if dest and moved < 3:
            inst.slot[v] = dest[0]
            moved += 1
    assert moved == 3
    out, rep = st2.rebalance(inst)
    targets = st2.clique_targets(out)
    assert (out.sizes() == targets[:, None]).all()
    assert out.sizes().sum() == out.graph.n_vertices
    assert st2.audit_moves(out, threshold) == []
    assert rep.within_caps


# embedding ---------------------------------------------------------------------------

def test_complete_blowup_embeds():
    inst = instance(complete_cluster_graph(3, 2), 8, 1)
    res = st2.embed(inst, seed=0)
    assert st2.verify_embedding(inst.graph, res.cliques).ok
    assert max(res.attempts) == 1


def test_two_classes_reduce_to_perfect_matching():
    C = random_cluster_graph(2, 4, seed=1)
    inst = instance(C, 20, "3/5", seed=1)
    res = st2.embed(inst, seed=1)
    assert st2.verify_embedding(inst.graph, res.cliques).ok
    for k in range(inst.K):
        a, b = inst.members(k, 0), inst.members(k, 1)
        assert isinstance(perfect_matching(inst.graph.adj[np.ix_(a, b)]), Matching)


def test_pipeline_small_sample():
    ok = 0
    for seed in range(5):
        report, result = st2.run_pipeline(seed=seed)
        if report.ok:
            ok += 1
            assert result is not None and report.digests["embedding"]
            assert report.phases["audit"]["problems"] == []
        else:
            assert report.failure["kind"] != "unverified"
    assert ok >= 4


def test_pipeline_is_deterministic():
    a, _ = st2.run_pipeline(seed=3)
    b, _ = st2.run_pipeline(seed=3)
    assert a.digests == b.digests


# verification ----------------------------------------------------------------------------

def test_verify_embedding_violations():
    inst = instance(complete_cluster_graph(3, 2), 4, 1)
    res = st2.embed(inst, seed=0)
    assert st2.verify_embedding(inst.graph, res.cliques).violations == ()
    dropped = res.cliques[1:]
    cert = st2.verify_embedding(inst.graph, dropped)
    missing = sorted(int(v) for v in res.cliques[0])
    cov = [v for v in cert.violations if v.startswith("coverage")]
    assert cov and all(str(v) in cov[0] for v in missing)
    adj = inst.graph.adj.copy()
    a, b = int(res.cliques[0, 0]), int(res.cliques[0, 1])
    adj[a, b] = adj[b, a] = False
    g = MultipartiteGraph(inst.graph.classes, adj)
    cert = st2.verify_embedding(g, res.cliques)
    assert any(f"({a}, {b})" in v for v in cert.violations)
