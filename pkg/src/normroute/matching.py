"""Candidate scoring, ranking, shallow-attribute diversification and top-k selection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from normroute.errors import ContractError, LookupFailure, ValidationError
from normroute.metrics import Dimension, MetricParams, dimension_similarity
from normroute.profiles import Community, Profile

DEFAULT_K = 5
DEFAULT_THRESHOLD = 0.6


class Polarity(str, enum.Enum):
    SIMILAR = "similar"
    DIVERSE = "diverse"
    CLOSE = "close"
    DISTANT = "distant"

    @property
    def flips(self) -> bool:
        return self in (Polarity.DIVERSE, Polarity.DISTANT)

    def flipped(self) -> Polarity:
        return _FLIP[self]


_FLIP = {
    Polarity.SIMILAR: Polarity.DIVERSE,
    Polarity.DIVERSE: Polarity.SIMILAR,
    Polarity.CLOSE: Polarity.DISTANT,
    Polarity.DISTANT: Polarity.CLOSE,
}


@dataclass(frozen=True)
class WeightedMode:
    weights: Mapping[Dimension, float] = field(hash=False)


@dataclass(frozen=True)
class LexicographicMode:
    primary: frozenset[Dimension] = frozenset()
    secondary: frozenset[Dimension] = frozenset()
    threshold: float = DEFAULT_THRESHOLD


@dataclass(frozen=True)
class MatchQuery:
    questioner: str
    requirements: Mapping[Dimension, Polarity] = field(hash=False)
    mode: WeightedMode | LexicographicMode = field(default_factory=LexicographicMode)
    k: int = DEFAULT_K
    diversify_attribute: str = "gender"

    def __post_init__(self):
        reqs = {Dimension(d): Polarity(p) for d, p in self.requirements.items()}
        object.__setattr__(self, "requirements", reqs)
        for dim, pol in reqs.items():
            closeness_pol = pol in (Polarity.CLOSE, Polarity.DISTANT)
            if dim.is_closeness != closeness_pol:
                raise ValidationError(f"polarity {pol.value!r} does not apply to {dim.value!r}")
        if not isinstance(self.k, int) or isinstance(self.k, bool) or self.k < 1:
            raise ValidationError(f"k must be a positive integer, got {self.k!r}")
        mode = self.mode
        if isinstance(mode, WeightedMode):
            weights = {Dimension(d): float(w) for d, w in mode.weights.items()}
            if any(not (w >= 0) for w in weights.values()):
                raise ValidationError("weights must be nonnegative")
            stray = [d.value for d, w in weights.items() if w > 0 and d not in reqs]
            if stray:
                raise ValidationError(f"positive weight on unspecified dimension(s) {stray}")
            if not any(weights.get(d, 0.0) > 0 for d in reqs):
                raise ValidationError("weighted mode needs a positive weight on a specified dimension")
            object.__setattr__(self, "mode", WeightedMode(weights))
        elif isinstance(mode, LexicographicMode):
            primary = frozenset(Dimension(d) for d in mode.primary)
            secondary = frozenset(Dimension(d) for d in mode.secondary)
            if primary & secondary:
                raise ValidationError("primary and secondary dimensions overlap")
            if not (primary | secondary) <= set(reqs):
                raise ValidationError("tiered dimensions must be specified in requirements")
            if not (0.0 <= mode.threshold <= 1.0):
                raise ValidationError(f"threshold must lie in [0, 1], got {mode.threshold!r}")
            object.__setattr__(self, "mode", LexicographicMode(primary, secondary, float(mode.threshold)))
        else:
            raise ValidationError(f"unknown mode {mode!r}")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "questioner": self.questioner,
            "requirements": {dim.value: pol.value for dim, pol in sorted(self.requirements.items())},
            "k": self.k,
            "diversify_attribute": self.diversify_attribute,
        }
        if isinstance(self.mode, WeightedMode):
            d["mode"] = {"type": "weighted",
                         "weights": {dim.value: w for dim, w in sorted(self.mode.weights.items())}}
        else:
            d["mode"] = {"type": "lexicographic",
                         "primary": sorted(x.value for x in self.mode.primary),
                         "secondary": sorted(x.value for x in self.mode.secondary),
                         "threshold": self.mode.threshold}
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], questioner: str | None = None) -> MatchQuery:
        """Build from the JSON form used in scenario and query files."""
        try:
            mode_d = dict(d.get("mode", {"type": "lexicographic"}))
            kind = mode_d.pop("type", "lexicographic")
            if kind == "weighted":
                mode = WeightedMode(mode_d.get("weights", {}))
            elif kind == "lexicographic":
                mode = LexicographicMode(frozenset(mode_d.get("primary", ())),
                                         frozenset(mode_d.get("secondary", ())),
                                         mode_d.get("threshold", DEFAULT_THRESHOLD))
            else:
                raise ValidationError(f"unknown mode type {kind!r}")
            who = questioner if questioner is not None else d["questioner"]
            return cls(who, d.get("requirements", {}), mode,
                       d.get("k", DEFAULT_K), d.get("diversify_attribute", "gender"))
        except KeyError as exc:
            raise ValidationError(f"query missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad query: {exc}") from None


@dataclass(frozen=True)
class MatchScore:
    candidate: str
    scores: Mapping[Dimension, float] = field(hash=False)
    aggregate: float
    tier: int = 1

    @property
    def rank_key(self):
        return (-self.tier, -self.aggregate, self.candidate)

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate,
            "scores": {d.value: s for d, s in sorted(self.scores.items())},
            "aggregate": self.aggregate,
            "tier": self.tier,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> MatchScore:
        return cls(d["candidate"], {Dimension(k): v for k, v in d["scores"].items()},
                   d["aggregate"], d["tier"])


def dimension_score(dim: Dimension, polarity: Polarity, questioner: Profile, candidate: Profile,
                    params: MetricParams) -> float:
    s = dimension_similarity(dim, questioner, candidate, params)
    return 1.0 - s if polarity.flips else s


def score_weighted(scores: Mapping[Dimension, float], weights: Mapping[Dimension, float]) -> float:
    """Weighted mean of ``scores``; weights are normalised, missing ones count as 0."""
    total = math.fsum(weights.get(d, 0.0) for d in scores)
    if not (total > 0):
        raise ContractError("all weights are zero")
    agg = math.fsum(weights.get(d, 0.0) / total * s for d, s in scores.items())
    # fsum keeps this a convex combination up to one rounding; pin it.
    return min(max(agg, min(scores.values())), max(scores.values()))


def score_lexicographic(scores: Mapping[Dimension, float], primary, secondary,
                        threshold: float) -> tuple[int, float]:
    tier = int(all(scores[d] >= threshold for d in primary))
    if not scores:
        # Nothing requested: every candidate satisfies the (empty) requirements.
        return tier, 1.0
    agg = math.fsum(scores.values()) / len(scores)
    return tier, min(max(agg, min(scores.values())), max(scores.values()))


def score_candidate(query: MatchQuery, questioner: Profile, candidate: Profile,
                    params: MetricParams) -> MatchScore:
    scores = {
        dim: dimension_score(dim, pol, questioner, candidate, params)
        for dim, pol in query.requirements.items()
    }
    mode = query.mode
    if isinstance(mode, WeightedMode):
        return MatchScore(candidate.id, scores, score_weighted(scores, mode.weights), 1)
    tier, agg = score_lexicographic(scores, mode.primary, mode.secondary, mode.threshold)
    return MatchScore(candidate.id, scores, agg, tier)


def rank_candidates(query: MatchQuery, community: Community,
                    params: MetricParams | None = None) -> list[MatchScore]:
    if query.questioner not in community:
        raise LookupFailure(f"questioner {query.questioner!r} is not a member")
    params = (params or MetricParams()).with_graph(community.graph)
    asker = community.profile(query.questioner)
    ranked = [score_candidate(query, asker, p, params)
              for p in community.members if p.id != asker.id]
    ranked.sort(key=lambda m: m.rank_key)
    return ranked


def diversify_shortlist(ranked: Sequence[MatchScore], profiles: Mapping[str, Profile] | Community,
                        k: int, attribute: str = "gender") -> list[MatchScore]:
    """Round-robin over shallow-attribute groups, best group first, until ``k`` picks."""
    lookup = profiles.by_id if isinstance(profiles, Community) else profiles
    groups: dict[Any, list[MatchScore]] = {}
    for m in ranked:
        groups.setdefault(lookup[m.candidate].shallow(attribute), []).append(m)
    # dict preserves insertion order, i.e. groups ordered by best-ranked member
    queues = list(groups.values())
    picked: list[MatchScore] = []
    depth = 0
    while len(picked) < k:
        progressed = False
        for q in queues:
            if depth < len(q):
                picked.append(q[depth])
                progressed = True
                if len(picked) == k:
                    break
        if not progressed:
            break
        depth += 1
    if len(picked) >= len(ranked):
        return list(ranked)
    return picked


def select_scored(query: MatchQuery, community: Community, params: MetricParams | None = None,
                  k: int | None = None) -> tuple[list[MatchScore], list[MatchScore]]:
    """Return ``(ranked, selected)``; ``k`` overrides ``query.k`` when given."""
    ranked = rank_candidates(query, community, params)
    selected = diversify_shortlist(ranked, community, query.k if k is None else k,
                                   query.diversify_attribute)
    return ranked, selected


def select_responders(query: MatchQuery, community: Community,
                      params: MetricParams | None = None) -> list[str]:
    _, selected = select_scored(query, community, params)
    return [m.candidate for m in selected]
