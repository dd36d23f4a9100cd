"""Per-dimension similarity between a questioner and a candidate, all in [0, 1]."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from normroute.errors import ContractError
from normroute.profiles import Profile, SocialGraph

EARTH_RADIUS_KM = 6371.0


class Dimension(str, enum.Enum):
    DOMAIN_INTERESTS = "domain_interests"
    BELIEFS_VALUES = "beliefs_values"
    SOCIAL_CLOSENESS = "social_closeness"
    PHYSICAL_CLOSENESS = "physical_closeness"

    @property
    def is_closeness(self) -> bool:
        return self in (Dimension.SOCIAL_CLOSENESS, Dimension.PHYSICAL_CLOSENESS)


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine of two nonnegative vectors, clipped to [0, 1].

    Two all-zero vectors count as identical (1.0); exactly one all-zero
    vector gives 0.0.
    """
    if len(u) != len(v):
        raise ContractError(f"dimension mismatch: {len(u)} vs {len(v)}")
    nu = math.sqrt(math.fsum(x * x for x in u))
    nv = math.sqrt(math.fsum(x * x for x in v))
    if nu == 0.0 and nv == 0.0:
        return 1.0
    if nu == 0.0 or nv == 0.0:
        return 0.0
    dot = math.fsum(x * y for x, y in zip(u, v))
    return min(1.0, max(0.0, dot / (nu * nv)))


def social_closeness(g: SocialGraph, a: str, b: str) -> float:
    if a not in g:
        raise ContractError(f"unknown member id {a!r}")
    d = g.hops(a, b)
    if d is None:
        return 0.0
    return 1.0 / (1.0 + d)


def haversine_km(p: tuple[float, float], q: tuple[float, float]) -> float:
    lat1, lon1 = map(math.radians, p)
    lat2, lon2 = map(math.radians, q)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class MetricParams:
    decay_length_km: float = 50.0
    graph: SocialGraph | None = None
    # Pluggable closeness over the social graph; sites disagreed on its meaning.
    closeness: Callable[[SocialGraph, str, str], float] = social_closeness

    def __post_init__(self):
        if not (self.decay_length_km > 0):
            raise ContractError(f"decay_length_km must be positive, got {self.decay_length_km!r}")

    def with_graph(self, graph: SocialGraph) -> MetricParams:
        return replace(self, graph=graph)


def physical_proximity(p: tuple[float, float], q: tuple[float, float], params: MetricParams) -> float:
    return math.exp(-haversine_km(p, q) / params.decay_length_km)


def dimension_similarity(dim: Dimension, questioner: Profile, candidate: Profile,
                         params: MetricParams) -> float:
    if dim is Dimension.DOMAIN_INTERESTS:
        return cosine_similarity(questioner.interests, candidate.interests)
    if dim is Dimension.BELIEFS_VALUES:
        return cosine_similarity(questioner.values, candidate.values)
    if dim is Dimension.SOCIAL_CLOSENESS:
        if params.graph is None:
            raise ContractError("social closeness needs a social graph in MetricParams")
        return params.closeness(params.graph, questioner.id, candidate.id)
    if dim is Dimension.PHYSICAL_CLOSENESS:
        return physical_proximity(questioner.location, candidate.location, params)
    raise ContractError(f"unknown dimension {dim!r}")
