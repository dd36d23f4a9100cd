import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import community, prof, random_community, random_query_dict
from oracles import oracle_round_robin, oracle_select, profile_dict, brute_force_ranked_ids
from normroute.errors import ContractError, LookupFailure, ValidationError
from normroute.matching import (
    LexicographicMode, MatchQuery, MatchScore, Polarity, WeightedMode, diversify_shortlist,
    dimension_score, rank_candidates, score_lexicographic, score_weighted, select_responders,
)
from normroute.metrics import Dimension as D, MetricParams
from normroute.profiles import GeneratorConfig, generate_synthetic

DI, BV, SC, PC = D.DOMAIN_INTERESTS, D.BELIEFS_VALUES, D.SOCIAL_CLOSENESS, D.PHYSICAL_CLOSENESS


def test_dimension_score_polarity():
    a = prof("a", (0.3, 0.9))
    comm = community([a])
    params = MetricParams().with_graph(comm.graph)
    assert dimension_score(DI, Polarity.SIMILAR, a, a, params) == pytest.approx(1.0)
    b = prof("b", (1.0, 0.0))
    s = 0.3 / math.hypot(0.3, 0.9)
    assert dimension_score(DI, Polarity.DIVERSE, a, b, params) == pytest.approx(1 - s)


def test_unspecified_dimension_not_scored():
    comm = community([prof("a"), prof("b")])
    q = MatchQuery("a", {DI: Polarity.SIMILAR}, WeightedMode({DI: 1.0}))
    (m,) = rank_candidates(q, comm)
    assert set(m.scores) == {DI}


def test_score_weighted_examples():
    assert score_weighted({DI: 0.8, BV: 0.4}, {DI: 0.5, BV: 0.5}) == pytest.approx(0.6, abs=1e-15)
    assert score_weighted({DI: 0.7, BV: 0.7, SC: 0.7}, {DI: 1, BV: 3.3, SC: 0.01}) == pytest.approx(0.7)
    assert score_weighted({DI: 0.8, BV: 0.4}, {DI: 2, BV: 2}) == score_weighted(
        {DI: 0.8, BV: 0.4}, {DI: 0.5, BV: 0.5})


def test_score_weighted_all_zero():
    with pytest.raises(ContractError):
        score_weighted({DI: 0.5}, {DI: 0.0})


scores_st = st.dictionaries(st.sampled_from(list(D)), st.floats(0, 1), min_size=1)


@given(scores_st, st.data())
def test_weighted_is_convex_combination(scores, data):
    weights = {d: data.draw(st.floats(0, 100)) for d in scores}
    if not any(w > 0 for w in weights.values()):
        weights[next(iter(scores))] = 1.0
    agg = score_weighted(scores, weights)
    assert min(scores.values()) <= agg <= max(scores.values())


def test_score_lexicographic_examples():
    assert score_lexicographic({DI: 0.41}, {DI}, set(), 0.6)[0] == 0
    assert score_lexicographic({DI: 0.1, BV: 0.0}, set(), {DI}, 0.6)[0] == 1
    tier, agg = score_lexicographic({DI: 0.9, BV: 0.2, SC: 0.4}, {DI}, {BV, SC}, 0.6)
    assert tier == 1
    assert agg == pytest.approx((0.9 + 0.2 + 0.4) / 3, abs=1e-15)
    assert agg == pytest.approx(0.5, abs=1e-15)


def test_query_validation():
    with pytest.raises(ValidationError):
        MatchQuery("a", {DI: Polarity.CLOSE})
    with pytest.raises(ValidationError):
        MatchQuery("a", {DI: Polarity.SIMILAR}, WeightedMode({DI: 0.0}))
    with pytest.raises(ValidationError):
        MatchQuery("a", {DI: Polarity.SIMILAR}, WeightedMode({DI: 1.0, SC: 1.0}))
    with pytest.raises(ValidationError):
        MatchQuery("a", {DI: Polarity.SIMILAR}, LexicographicMode({DI}, {DI}))
    with pytest.raises(ValidationError):
        MatchQuery("a", {DI: Polarity.SIMILAR}, LexicographicMode({BV}))
    with pytest.raises(ValidationError):
        MatchQuery("a", {DI: Polarity.SIMILAR}, LexicographicMode({DI}, threshold=1.5))
    with pytest.raises(ValidationError):
        MatchQuery("a", {DI: Polarity.SIMILAR}, k=0)


def test_query_dict_round_trip():
    q = MatchQuery("a", {DI: Polarity.SIMILAR, SC: Polarity.DISTANT},
                   LexicographicMode({DI}, {SC}, 0.4), k=3)
    assert MatchQuery.from_dict(q.to_dict()) == q
    w = MatchQuery("a", {BV: Polarity.DIVERSE}, WeightedMode({BV: 2.0}))
    assert MatchQuery.from_dict(w.to_dict()) == w


def test_rank_singleton_and_questioner_excluded():
    comm = community([prof("a"), prof("b")])
    q = MatchQuery("a", {DI: Polarity.SIMILAR})
    ranked = rank_candidates(q, comm)
    assert [m.candidate for m in ranked] == ["b"]


def test_rank_unknown_questioner():
    with pytest.raises(LookupFailure):
        rank_candidates(MatchQuery("zz", {DI: Polarity.SIMILAR}), community([prof("a")]))


def test_rank_ties_broken_by_id():
    comm = community([prof(x) for x in "dcab"])
    ranked = rank_candidates(MatchQuery("a", {DI: Polarity.SIMILAR}), comm)
    assert [m.candidate for m in ranked] == ["b", "c", "d"]


def test_tier_dominates_aggregate():
    # b is closer on interests (primary) but far worse on values
    a = prof("a", (1.0, 0.0), (1.0, 0.0))
    b = prof("b", (1.0, 0.1), (0.0, 1.0))
    c = prof("c", (0.3, 1.0), (1.0, 0.0))
    q = MatchQuery("a", {DI: Polarity.SIMILAR, BV: Polarity.SIMILAR}, LexicographicMode({DI}, {BV}, 0.6))
    ranked = rank_candidates(q, community([a, b, c]))
    assert [m.candidate for m in ranked] == ["b", "c"]
    assert ranked[0].tier == 1 and ranked[1].tier == 0
    assert ranked[1].aggregate > ranked[0].aggregate


@pytest.mark.parametrize("seed", range(500))
def test_rank_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    comm = random_community(rng, 6)
    qd = random_query_dict(rng, "m0")
    got = [m.candidate for m in rank_candidates(MatchQuery.from_dict(qd), comm)]
    assert got == brute_force_ranked_ids(qd, comm)


def ms(cid, agg, tier=1):
    return MatchScore(cid, {}, agg, tier)


def test_diversify_worked_example():
    genders = ["F", "F", "F", "M", "M"]
    people = {f"p{i}": prof(f"p{i}", gender=g) for i, g in enumerate(genders)}
    ranked = [ms(f"p{i}", 1 - i / 10) for i in range(5)]
    picked = [m.candidate for m in diversify_shortlist(ranked, people, 4)]
    assert picked == oracle_round_robin([f"p{i}" for i in range(5)],
                                        {k: p.gender for k, p in people.items()}, 4)
    assert picked == ["p0", "p3", "p1", "p4"]


def test_diversify_single_group_is_plain_top_k():
    people = {f"p{i}": prof(f"p{i}") for i in range(6)}
    ranked = [ms(f"p{i}", 1 - i / 10) for i in range(6)]
    assert [m.candidate for m in diversify_shortlist(ranked, people, 3)] == ["p0", "p1", "p2"]


def test_diversify_k_exceeds_pool():
    people = {f"p{i}": prof(f"p{i}", gender="FM"[i % 2]) for i in range(4)}
    ranked = [ms(f"p{i}", 1 - i / 10) for i in range(4)]
    assert diversify_shortlist(ranked, people, 10) == ranked


def test_diversify_on_extra_attribute():
    people = {"a": prof("a", nat="x"), "b": prof("b", nat="x"), "c": prof("c", nat="y")}
    ranked = [ms("a", 0.9), ms("b", 0.8), ms("c", 0.1)]
    assert [m.candidate for m in diversify_shortlist(ranked, people, 2, "nat")] == ["a", "c"]


@settings(max_examples=300)
@given(st.lists(st.sampled_from("FMX"), min_size=0, max_size=14), st.integers(1, 9))
def test_diversify_no_duplicates_and_from_pool(genders, k):
    people = {f"p{i}": prof(f"p{i}", gender=g) for i, g in enumerate(genders)}
    ranked = [ms(f"p{i}", 1 - i / 100) for i in range(len(genders))]
    picked = [m.candidate for m in diversify_shortlist(ranked, people, k)]
    assert len(picked) == len(set(picked)) == min(k, len(genders))
    assert set(picked) <= set(people)
    assert picked == oracle_round_robin([m.candidate for m in ranked],
                                        {pid: p.gender for pid, p in people.items()}, k)


@settings(max_examples=300)
@given(st.integers(1, 10), st.data())
def test_two_group_balance(k, data):
    half = math.ceil(k / 2)
    nf = data.draw(st.integers(half, half + 6))
    nm = data.draw(st.integers(half, half + 6))
    genders = data.draw(st.permutations(["F"] * nf + ["M"] * nm))
    people = {f"p{i}": prof(f"p{i}", gender=g) for i, g in enumerate(genders)}
    ranked = [ms(f"p{i}", 1 - i / 100) for i in range(len(genders))]
    picked = diversify_shortlist(ranked, people, k)
    f = sum(people[m.candidate].gender == "F" for m in picked)
    assert abs(f - (len(picked) - f)) <= 1


def test_select_responders_default_five_on_aau_size():
    comm = generate_synthetic(GeneratorConfig(51), 42)
    q = MatchQuery("u001", {DI: Polarity.SIMILAR, PC: Polarity.CLOSE})
    ids = select_responders(q, comm)
    assert len(ids) == 5 and "u001" not in ids
    assert select_responders(q, comm) == ids


def test_select_responders_small_community():
    comm = community([prof(x) for x in "abcd"])
    assert sorted(select_responders(MatchQuery("a", {DI: Polarity.SIMILAR}, k=5), comm)) == ["b", "c", "d"]


def test_weight_scaling_preserves_ranking():
    rng = np.random.default_rng(11)
    for trial in range(100):
        comm = random_community(rng, 12)
        w = {d: float(x) for d, x in zip(D, rng.random(4) + 0.05)}
        reqs = {DI: Polarity.SIMILAR, BV: Polarity.DIVERSE, SC: Polarity.CLOSE, PC: Polarity.DISTANT}
        c = float(rng.choice([0.001, 0.37, 3.0, 1e6]))
        a = rank_candidates(MatchQuery("m0", reqs, WeightedMode(w)), comm)
        b = rank_candidates(MatchQuery("m0", reqs, WeightedMode({d: c * x for d, x in w.items()})), comm)
        assert [m.candidate for m in a] == [m.candidate for m in b]


@pytest.mark.parametrize("dim", list(D))
def test_polarity_duality(dim):
    rng = np.random.default_rng(5)
    comm = random_community(rng, 8)
    base = {DI: Polarity.SIMILAR, SC: Polarity.CLOSE, BV: Polarity.DIVERSE, PC: Polarity.DISTANT}
    flipped = dict(base)
    flipped[dim] = base[dim].flipped()
    a = {m.candidate: m for m in rank_candidates(MatchQuery("m0", base), comm)}
    b = {m.candidate: m for m in rank_candidates(MatchQuery("m0", flipped), comm)}
    for cid in a:
        for d in D:
            if d is dim:
                # the complemented side is computed from the raw similarity
                raw, comp = (b, a) if base[dim].flips else (a, b)
                assert comp[cid].scores[d] == 1.0 - raw[cid].scores[d]
            else:
                assert b[cid].scores[d] == a[cid].scores[d]


def test_ranking_prefix_stable_when_appending_worse_candidates():
    a = prof("a", (1.0, 0.0))
    good = [prof(f"g{i}", (1.0, 0.1 * i)) for i in range(5)]
    worse = [prof(f"w{i}", (0.0, 1.0)) for i in range(3)]
    q = MatchQuery("a", {DI: Polarity.SIMILAR})
    base = [m.candidate for m in rank_candidates(q, community([a, *good]))]
    more = [m.candidate for m in rank_candidates(q, community([a, *good, *worse]))]
    assert more[: len(base)] == base


def test_aggregate_range_random():
    rng = np.random.default_rng(2)
    for _ in range(50):
        comm = random_community(rng, 7)
        q = MatchQuery.from_dict(random_query_dict(rng, "m0"))
        for m in rank_candidates(q, comm):
            assert 0.0 <= m.aggregate <= 1.0
            assert set(m.scores) == set(q.requirements)


def test_select_matches_oracle_small():
    rng = np.random.default_rng(99)
    for _ in range(50):
        comm = random_community(rng, 7)
        qd = random_query_dict(rng, "m1")
        members = [profile_dict(p) for p in comm.members]
        assert select_responders(MatchQuery.from_dict(qd), comm) == oracle_select(
            qd, members, sorted(comm.edges))
