import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from builders import community, prof
from oracles import bfs_hops, chord_distance_km, cosine_fraction, point_at_distance_north
from normroute.errors import ContractError
from normroute.metrics import (
    Dimension, MetricParams, cosine_similarity, dimension_similarity, haversine_km,
    physical_proximity, social_closeness,
)
from normroute.profiles import SocialGraph


def test_dimension_enum_has_exactly_four_members():
    assert {d.value for d in Dimension} == {
        "domain_interests", "beliefs_values", "social_closeness", "physical_closeness"}


def test_cosine_orthogonal():
    assert cosine_similarity((1, 0), (0, 1)) == 0.0


def test_cosine_self():
    assert cosine_similarity((0.2, 0.7, 0.1), (0.2, 0.7, 0.1)) == pytest.approx(1.0, abs=1e-15)


def test_cosine_worked_example_matches_exact_oracle():
    u = [Fraction(1, 3), Fraction(2, 3), Fraction(3, 3)]
    v = [Fraction(3, 3), Fraction(2, 3), Fraction(1, 3)]
    dot, nu2, nv2 = cosine_fraction(u, v)
    assert nu2 == nv2  # so the cosine is the rational dot / nu2
    expected = dot / nu2
    assert expected == Fraction(5, 7)
    got = cosine_similarity([float(x) for x in u], [float(x) for x in v])
    assert abs(got - float(expected)) < 1e-12


def test_cosine_zero_vector_conventions():
    assert cosine_similarity((0, 0), (0, 0)) == 1.0
    assert cosine_similarity((0, 0), (0.3, 0)) == 0.0


def test_cosine_dimension_mismatch():
    with pytest.raises(ContractError):
        cosine_similarity((1, 0), (1, 0, 0))


unit_vec = st.lists(st.floats(0, 1), min_size=1, max_size=6)


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 1), min_size=n, max_size=n),
    st.lists(st.floats(0, 1), min_size=n, max_size=n))))
def test_cosine_range_and_symmetry(pair):
    u, v = pair
    s = cosine_similarity(u, v)
    assert 0.0 <= s <= 1.0
    assert s == cosine_similarity(v, u)


@given(unit_vec)
def test_cosine_self_is_one(v):
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)


def path_graph(n):
    nodes = [f"n{i}" for i in range(n)]
    return SocialGraph(nodes, [(nodes[i], nodes[i + 1]) for i in range(n - 1)]), nodes


def test_social_closeness_examples():
    g, (a, x, b) = path_graph(3)
    assert social_closeness(g, a, a) == 1.0
    assert bfs_hops([(a, x), (x, b)], a, b) == 2
    assert social_closeness(g, a, b) == pytest.approx(1 / 3)
    g2 = SocialGraph(["p", "q"], [])
    assert social_closeness(g2, "p", "q") == 0.0


def test_social_closeness_unknown_id():
    g, _ = path_graph(2)
    with pytest.raises(ContractError):
        social_closeness(g, "n0", "zz")
    with pytest.raises(ContractError):
        social_closeness(g, "zz", "n0")


def test_social_closeness_strictly_decreasing_along_path():
    g, nodes = path_graph(7)
    vals = [social_closeness(g, nodes[0], n) for n in nodes]
    assert vals == [1 / (1 + i) for i in range(7)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@given(st.integers(2, 9), st.data())
def test_social_closeness_matches_bfs_oracle(n, data):
    nodes = [f"v{i}" for i in range(n)]
    pairs = [(nodes[i], nodes[j]) for i in range(n) for j in range(i + 1, n)]
    edges = data.draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    g = SocialGraph(nodes, edges)
    for a in nodes:
        for b in nodes:
            h = bfs_hops(edges, a, b)
            want = 0.0 if h is None else 1.0 / (1 + h)
            assert social_closeness(g, a, b) == want == social_closeness(g, b, a)


def test_proximity_identity():
    assert physical_proximity((55.5, 10.2), (55.5, 10.2), MetricParams()) == 1.0


def test_proximity_at_decay_length_is_inverse_e():
    p = (55.0, 10.0)
    q = point_at_distance_north(*p, 50.0)
    assert chord_distance_km(p, q) == pytest.approx(50.0, abs=1e-9)
    got = physical_proximity(p, q, MetricParams(decay_length_km=50.0))
    assert abs(got - math.exp(-1)) < 1e-9
    assert got == pytest.approx(0.367879, abs=1e-6)


def test_proximity_antipodal():
    p, q = (0.0, 0.0), (0.0, 180.0)
    assert chord_distance_km(p, q) == pytest.approx(2.0e4, rel=0.01)
    assert physical_proximity(p, q, MetricParams()) < 1e-8


def test_bad_decay_rejected():
    with pytest.raises(ContractError):
        MetricParams(decay_length_km=0)


coords = st.tuples(st.floats(-90, 90), st.floats(-179.999, 180))


@given(coords, coords)
def test_haversine_agrees_with_chord_oracle(p, q):
    assert haversine_km(p, q) == pytest.approx(chord_distance_km(p, q), abs=1e-6)


@given(coords, coords, st.floats(1.0, 10.0))
def test_proximity_monotone_in_decay(p, q, c):
    base = MetricParams(decay_length_km=20.0)
    wider = MetricParams(decay_length_km=20.0 * c)
    assert physical_proximity(p, q, wider) >= physical_proximity(p, q, base)
    assert 0.0 <= physical_proximity(p, q, base) <= 1.0


def test_proximity_strictly_decreasing_with_distance():
    p = (55.0, 10.0)
    vals = [physical_proximity(p, point_at_distance_north(*p, d), MetricParams())
            for d in (0, 1, 5, 20, 80, 300)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_dimension_similarity_dispatch():
    a = prof("a", (0.2, 0.4, 0.6), (0.2, 0.4, 0.6))
    b = prof("b", (0.6, 0.4, 0.2), (0.6, 0.4, 0.2), location=(55.6, 10.5))
    c = prof("c", (0.6, 0.4, 0.2), (0.6, 0.4, 0.2))
    comm = community([a, b, c], [("a", "b")])
    params = MetricParams().with_graph(comm.graph)
    assert dimension_similarity(Dimension.DOMAIN_INTERESTS, a, a, params) == pytest.approx(1.0)
    assert dimension_similarity(Dimension.BELIEFS_VALUES, a, b, params) == pytest.approx(5 / 7, abs=1e-12)
    assert dimension_similarity(Dimension.SOCIAL_CLOSENESS, a, c, params) == 0.0
    assert dimension_similarity(Dimension.SOCIAL_CLOSENESS, a, b, params) == 0.5
    d = chord_distance_km(a.location, b.location)
    assert dimension_similarity(Dimension.PHYSICAL_CLOSENESS, a, b, params) == pytest.approx(
        math.exp(-d / 50.0), rel=1e-9)


def test_dimension_similarity_symmetric_and_self_one():
    import numpy as np
    from builders import random_community

    rng = np.random.default_rng(3)
    comm = random_community(rng, 8)
    params = MetricParams().with_graph(comm.graph)
    for a in comm.members:
        for b in comm.members:
            for dim in Dimension:
                s = dimension_similarity(dim, a, b, params)
                assert 0.0 <= s <= 1.0
                assert s == dimension_similarity(dim, b, a, params)
        for dim in Dimension:
            assert dimension_similarity(dim, a, a, params) == pytest.approx(1.0, abs=1e-12)


def test_social_closeness_needs_graph():
    a = prof("a")
    with pytest.raises(ContractError):
        dimension_similarity(Dimension.SOCIAL_CLOSENESS, a, a, MetricParams())


def test_pluggable_closeness():
    a, b = prof("a"), prof("b")
    comm = community([a, b])
    params = MetricParams(closeness=lambda g, x, y: 0.25).with_graph(comm.graph)
    assert dimension_similarity(Dimension.SOCIAL_CLOSENESS, a, b, params) == 0.25
