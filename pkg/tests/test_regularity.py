import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clique_factory.errors import DegeneratePair, InvalidArgument
from clique_factory.regularity import (BipartitePair, exact_irregularity, grow, halve,
                                       irregularity_witness_search, random_growth, random_split,
                                       trim_to_super_regular)


def two_halves(m: int) -> BipartitePair:
    M = np.zeros((m, m), dtype=bool)
    h = m // 2
    M[:h, :h] = M[h:, h:] = True
    return BipartitePair(M)


def test_complete_pair_is_perfectly_regular():
    rep = irregularity_witness_search(BipartitePair(np.ones((20, 20))), 0.1, samples=50)
    assert rep.epsilon_hat == 0


def test_two_halves_found_irregular():
    p = two_halves(40)
    rep = irregularity_witness_search(p, 0.1, samples=200, seed=3)
    assert p.density == 0.5 and rep.epsilon_hat >= 0.5
    assert rep.verify(p)


def test_random_pair_looks_regular():
    hits = sum(irregularity_witness_search(BipartitePair.random(200, 200, 0.5, s), 0.1, seed=s).epsilon_hat < 0.1
               for s in range(10))
    assert hits == 10


@st.composite
def pairs(draw):
    a = draw(st.integers(2, 30))
    b = draw(st.integers(2, 30))
    p = draw(st.floats(0.05, 0.95))
    return BipartitePair.random(a, b, p, draw(st.integers(0, 10 ** 6)))


@settings(max_examples=40, deadline=None)
@given(pairs(), st.sampled_from([0.1, 0.2, 0.3]), st.integers(0, 1000))
def test_witness_reproduces_epsilon_hat(pair, eps, seed):
    rep = irregularity_witness_search(pair, eps, samples=100, seed=seed)
    xs, ys = rep.witness
    assert rep.verify(pair)
    assert float(abs(pair.subset_density(xs, ys) - pair.density)) == rep.epsilon_hat


@settings(max_examples=25, deadline=None)
@given(pairs(), st.integers(1, 400), st.integers(0, 400), st.integers(0, 1000))
def test_more_samples_never_lower_epsilon_hat(pair, base, extra, seed):
    lo = irregularity_witness_search(pair, 0.2, samples=base, seed=seed).epsilon_hat
    hi = irregularity_witness_search(pair, 0.2, samples=base + extra, seed=seed).epsilon_hat
    assert hi >= lo


def test_sampler_is_a_lower_bound_on_exact_value():
    for s in range(10):
        p = BipartitePair.random(8, 8, 0.5, s)
        exact = exact_irregularity(p, 0.25)
        assert exact.verify(p)
        assert irregularity_witness_search(p, 0.25, samples=300, seed=s).epsilon_hat <= exact.epsilon_hat


def test_witness_search_domain():
    with pytest.raises(InvalidArgument):
        irregularity_witness_search(BipartitePair(np.ones((3, 3))), 1.0)


# trimming ------------------------------------------------------------------

def test_trim_complete_pair_keeps_everything():
    t = trim_to_super_regular(BipartitePair(np.ones((10, 10))), 0.1)
    assert not t.removed_a and not t.removed_b


def test_trim_removes_exactly_an_isolated_vertex():
    # half-density circulant, so every other vertex sits at degree about m/2
    M = np.array([[(b - a) % 20 < 10 for b in range(20)] for a in range(20)])
    M[3] = False
    t = trim_to_super_regular(BipartitePair(M), 0.1, d="1/2")
    assert t.removed_a == (3,) and t.removed_b == ()
    assert t.check_degrees()


def test_trim_empty_pair_is_degenerate():
    with pytest.raises(DegeneratePair):
        trim_to_super_regular(BipartitePair(np.zeros((5, 5))), 0.1, d="1/2")


def test_trim_random_pairs_within_bound():
    ok = 0
    for s in range(20):
        p = BipartitePair.random(300, 300, 0.6, s)
        t = trim_to_super_regular(p, 0.1, 0.6)
        fa, fb = t.discard_fractions(300, 300)
        ok += fa <= 0.2 and fb <= 0.2 and t.check_degrees()
    assert ok == 20


def test_trim_bound_exact_on_certified_regular_pairs():
    certified = 0
    for s in range(150):
        rng = np.random.default_rng(s)
        a = int(rng.integers(6, 11))
        eps = float(rng.choice([0.2, 0.25, 0.3, 0.35]))
        p = BipartitePair(rng.random((a, a)) < rng.uniform(0.3, 0.95))
        if p.n_edges == 0 or exact_irregularity(p, eps).epsilon_hat >= eps:
            continue
        certified += 1
        t = trim_to_super_regular(p, eps)
        assert len(t.removed_a) <= 2 * eps * a and len(t.removed_b) <= 2 * eps * a
    assert certified >= 5


# split, halve, grow ----------------------------------------------------------

def test_split_identity_and_complete():
    p = BipartitePair.random(12, 12, 0.5, 1)
    one = random_split(p, 1, seed=0, samples=20)
    assert one.pairs[0][0] == p.sub(range(12), range(12))
    full = random_split(BipartitePair(np.ones((12, 12))), 3, seed=0, samples=20)
    assert all(sub.density == 1 for row in full.pairs for sub in row)


def test_split_divisibility():
    with pytest.raises(InvalidArgument):
        random_split(BipartitePair(np.ones((10, 10))), 3, seed=0)


def test_split_parts_are_an_equipartition():
    p = BipartitePair.random(40, 40, 0.5, 2)
    res = random_split(p, 4, seed=5, samples=20)
    for parts in (res.parts_a, res.parts_b):
        assert sorted(v for part in parts for v in part) == list(range(40))
        assert {len(part) for part in parts} == {10}


def split_pass_rate(m: int, k: int, seeds: int, eps: float = 0.15) -> float:
    ok = 0
    for s in range(seeds):
        p = BipartitePair.random(m, m, 0.5, s)
        res = random_split(p, k, seed=s, eps=eps)
        ok += res.min_degree_proportion >= p.min_degree_proportion() - eps and res.max_epsilon_hat <= 2 * eps
    return ok / seeds


def test_split_keeps_degree_and_regularity_with_large_parts():
    assert split_pass_rate(200, 2, 10) >= 0.95


@pytest.mark.xfail(strict=True, reason="parts of 60 vertices are too small for the degree floor; about 80% of seeds pass")
def test_split_into_four_parts_at_240():
    assert split_pass_rate(240, 4, 20) >= 0.95


def test_halve_examples():
    full = halve(BipartitePair(np.ones((10, 10))), seed=1, samples=20)
    assert full.first.density == full.second.density == 1
    empty = halve(BipartitePair(np.zeros((10, 10))), seed=1, samples=20)
    assert empty.first.density == empty.second.density == 0
    with pytest.raises(InvalidArgument):
        halve(BipartitePair(np.ones((9, 10))), seed=0)


def test_halve_density_bound():
    ok = 0
    for s in range(10):
        p = BipartitePair.random(200, 200, 0.5, s)
        e = irregularity_witness_search(p, 0.1, seed=s).epsilon_hat
        h = halve(p, seed=s, eps=0.1)
        ok += min(h.first.density, h.second.density) >= float(p.density) - e - 0.02
    assert ok == 10


def test_grow_examples():
    p = BipartitePair.random(20, 20, 0.5, 0)
    same = grow(p, np.zeros((0, 20)), np.zeros((20, 0)), 0.1, samples=20)
    assert same.pair == p and same.added == (0, 0)
    full = BipartitePair(np.ones((20, 20)))
    rows, cols = random_growth(full, 2, seed=0, mode="full")
    g = grow(full, rows, cols, 0.1, samples=50)
    assert g.pair.a == g.pair.b == 22 and g.report.epsilon_hat == 0


def test_grow_stays_within_square_root_bound():
    ok = 0
    for s in range(6):
        p = BipartitePair.random(400, 400, 0.5, s)
        e = irregularity_witness_search(p, 0.1, seed=s).epsilon_hat
        rows, cols = random_growth(p, 4, seed=s, mode="empty")
        g = grow(p, rows, cols, 0.1, seed=s)
        ok += g.report.epsilon_hat <= 2 * math.sqrt(e) + 0.02 and g.within_budget
    assert ok == 6


def test_pair_json_round_trip():
    p = BipartitePair.random(7, 5, 0.4, 3)
    assert BipartitePair.from_json(p.to_json()) == p
