"""Profiles, communities, the social graph, and synthetic population generation.

Community files are UTF-8 JSON::

    {"id": ..., "interest_dim": D_i, "values_dim": D_v, "gender_labels": [...],
     "members": [{"id", "interests", "values", "location": {"lat", "lon"},
                  "gender", "extra_shallow": {...}}, ...],
     "edges": [[idA, idB], ...]}

Saving is canonical (members and edges sorted, ``idA < idB``) so two saves of
the same community are byte-identical.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping

import numpy as np

from normroute.errors import ContractError, LookupFailure, RecordParseError, ValidationError

# Member counts of the three reference communities used by the presets.
PILOT_SIZES = {"LSE": 105, "AAU": 51, "NUM": 115}

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class Profile:
    id: str
    interests: tuple[float, ...]
    values: tuple[float, ...]
    location: tuple[float, float]  # (lat, lon) in degrees
    gender: str
    extra_shallow: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "interests", tuple(float(x) for x in self.interests))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        lat, lon = self.location
        object.__setattr__(self, "location", (float(lat), float(lon)))
        object.__setattr__(self, "extra_shallow", dict(self.extra_shallow))

    def shallow(self, attribute: str):
        """Value of a shallow (demographic) attribute; ``None`` when absent."""
        if attribute == "gender":
            return self.gender
        return self.extra_shallow.get(attribute)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "interests": list(self.interests),
            "values": list(self.values),
            "location": {"lat": self.location[0], "lon": self.location[1]},
            "gender": self.gender,
            "extra_shallow": dict(self.extra_shallow),
        }


class SocialGraph:
    """Undirected, unweighted adjacency over member ids with cached BFS."""

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]]):
        self._adj: dict[str, set[str]] = {n: set() for n in nodes}
        for a, b in edges:
            self._adj[a].add(b)
            self._adj[b].add(a)
        self._dist_cache: dict[str, dict[str, int]] = {}

    def __contains__(self, node: str) -> bool:
        return node in self._adj

    def neighbors(self, node: str) -> frozenset[str]:
        return frozenset(self._adj[node])

    def distances_from(self, source: str) -> dict[str, int]:
        if source not in self._adj:
            raise ContractError(f"unknown member id {source!r}")
        cached = self._dist_cache.get(source)
        if cached is not None:
            return cached
        dist = {source: 0}
        queue = deque([source])
        while queue:
            node = queue.popleft()
            for nxt in self._adj[node]:
                if nxt not in dist:
                    dist[nxt] = dist[node] + 1
                    queue.append(nxt)
        self._dist_cache[source] = dist
        return dist

    def hops(self, a: str, b: str) -> int | None:
        """Shortest-path length, or ``None`` if ``b`` is unreachable from ``a``."""
        if b not in self._adj:
            raise ContractError(f"unknown member id {b!r}")
        return self.distances_from(a).get(b)


@dataclass(frozen=True)
class Community:
    id: str
    interest_dim: int
    values_dim: int
    gender_labels: tuple[str, ...]
    members: tuple[Profile, ...] = ()
    edges: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        if not _is_pos_int(self.interest_dim) or not _is_pos_int(self.values_dim):
            raise ValidationError("interest_dim and values_dim must be positive integers")
        labels = tuple(sorted(set(self.gender_labels)))
        if not labels:
            raise ValidationError("gender_labels must not be empty")
        object.__setattr__(self, "gender_labels", labels)

        members = tuple(sorted(self.members, key=lambda p: p.id))
        seen = set()
        for p in members:
            if p.id in seen:
                raise ValidationError(f"duplicate member id {p.id!r}")
            seen.add(p.id)
            _check_profile(p, self.interest_dim, self.values_dim, labels)
        object.__setattr__(self, "members", members)

        canon = set()
        for a, b in self.edges:
            if a == b:
                raise ValidationError(f"self-loop on {a!r}")
            for end in (a, b):
                if end not in seen:
                    raise ValidationError(f"edge endpoint {end!r} is not a member")
            canon.add((a, b) if a < b else (b, a))
        object.__setattr__(self, "edges", frozenset(canon))

    @cached_property
    def by_id(self) -> dict[str, Profile]:
        return {p.id: p for p in self.members}

    @cached_property
    def graph(self) -> SocialGraph:
        return SocialGraph(self.by_id, self.edges)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, member_id: str) -> bool:
        return member_id in self.by_id

    def profile(self, member_id: str) -> Profile:
        try:
            return self.by_id[member_id]
        except KeyError:
            raise LookupFailure(f"unknown member {member_id!r}") from None

    def replace_member(self, profile: Profile) -> Community:
        if profile.id not in self.by_id:
            raise LookupFailure(f"unknown member {profile.id!r}")
        others = [p for p in self.members if p.id != profile.id]
        return Community(self.id, self.interest_dim, self.values_dim, self.gender_labels,
                         tuple(others) + (profile,), self.edges)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "interest_dim": self.interest_dim,
            "values_dim": self.values_dim,
            "gender_labels": list(self.gender_labels),
            "members": [p.to_dict() for p in self.members],
            "edges": [list(e) for e in sorted(self.edges)],
        }


def _is_pos_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x > 0


def _check_profile(p: Profile, di: int, dv: int, labels: tuple[str, ...]) -> None:
    if not isinstance(p.id, str) or not p.id:
        raise ValidationError("member id must be a non-empty string")
    for name, vec, dim in (("interests", p.interests, di), ("values", p.values, dv)):
        if len(vec) != dim:
            raise ValidationError(f"member {p.id!r}: {name} has length {len(vec)}, expected {dim}")
        for x in vec:
            if not (0.0 <= x <= 1.0):
                raise ValidationError(f"member {p.id!r}: {name} entry {x!r} outside [0, 1]")
    lat, lon = p.location
    if not (-90.0 <= lat <= 90.0) or not (-180.0 < lon <= 180.0):
        raise ValidationError(f"member {p.id!r}: invalid location ({lat}, {lon})")
    if p.gender not in labels:
        raise ValidationError(f"member {p.id!r}: gender {p.gender!r} not in {list(labels)}")


# --------------------------------------------------------------------------
# Serialization


def dumps_community(c: Community) -> str:
    """Canonical JSON text; one member record per line."""
    d = c.to_dict()
    members = d.pop("members")
    edges = d.pop("edges")
    head = json.dumps(d, sort_keys=True)[:-1]
    lines = [head + ","]
    lines.append(' "members": [')
    for i, m in enumerate(members):
        sep = "," if i < len(members) - 1 else ""
        lines.append("  " + json.dumps(m, sort_keys=True, ensure_ascii=False) + sep)
    lines.append(" ],")
    lines.append(' "edges": [')
    for i, e in enumerate(edges):
        sep = "," if i < len(edges) - 1 else ""
        lines.append("  " + json.dumps(e, ensure_ascii=False) + sep)
    lines.append(" ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_community(c: Community, path) -> None:
    text = dumps_community(c)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_community(path) -> Community:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads_community(text)


def loads_community(text: str) -> Community:
    top, positions = _scan_top_level(text)
    try:
        cid = top["id"]
        di = top["interest_dim"]
        dv = top["values_dim"]
        labels = top["gender_labels"]
    except KeyError as exc:
        raise RecordParseError(f"missing top-level field {exc.args[0]!r}", 1) from None
    if not isinstance(cid, str):
        raise RecordParseError("community id must be a string", 1)
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise RecordParseError("gender_labels must be a list of strings", 1)

    members = []
    seen: set[str] = set()
    for rec, line in zip(top.get("members", []), positions.get("members", [])):
        p = _profile_from_record(rec, line)
        if p.id in seen:
            raise ValidationError(f"duplicate member id {p.id!r}")
        seen.add(p.id)
        members.append(p)

    edges = []
    for rec, line in zip(top.get("edges", []), positions.get("edges", [])):
        if (not isinstance(rec, list) or len(rec) != 2
                or not all(isinstance(x, str) for x in rec)):
            raise RecordParseError("edge must be a pair of member ids", line)
        a, b = rec
        for end in (a, b):
            if end not in seen:
                raise ValidationError(f"edge ({a!r}, {b!r}) references unknown member {end!r}")
        edges.append((a, b))

    return Community(cid, di, dv, tuple(labels), tuple(members), frozenset(edges))


def _profile_from_record(rec, line: int) -> Profile:
    if not isinstance(rec, dict):
        raise RecordParseError("member record must be an object", line)
    try:
        loc = rec["location"]
        p = Profile(
            id=rec["id"],
            interests=_num_list(rec["interests"]),
            values=_num_list(rec["values"]),
            location=(_num(loc["lat"]), _num(loc["lon"])),
            gender=rec["gender"],
            extra_shallow=rec.get("extra_shallow", {}),
        )
    except KeyError as exc:
        raise RecordParseError(f"member record missing field {exc.args[0]!r}", line) from None
    except (TypeError, ValueError) as exc:
        raise RecordParseError(f"bad member record: {exc}", line) from None
    if not isinstance(p.id, str) or not isinstance(p.gender, str):
        raise RecordParseError("member id and gender must be strings", line)
    return p


def _num(x) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TypeError(f"expected a number, got {x!r}")
    return float(x)


def _num_list(xs) -> tuple[float, ...]:
    if not isinstance(xs, list):
        raise TypeError("expected a list of numbers")
    return tuple(_num(x) for x in xs)


_WS = " \t\n\r"


def _scan_top_level(text: str):
    """Decode the top-level object, recording the line of each member/edge record."""
    decoder = json.JSONDecoder()
    n = len(text)

    def skip(i):
        while i < n and text[i] in _WS:
            i += 1
        return i

    def line_of(i):
        return text.count("\n", 0, i) + 1

    def decode(i):
        try:
            return decoder.raw_decode(text, i)
        except json.JSONDecodeError as exc:
            raise RecordParseError(exc.msg, exc.lineno) from None

    def expect(i, ch):
        i = skip(i)
        if i >= n or text[i] != ch:
            raise RecordParseError(f"expected {ch!r}", line_of(min(i, n)))
        return i + 1

    top: dict[str, Any] = {}
    positions: dict[str, list[int]] = {}
    i = expect(0, "{")
    i = skip(i)
    if i < n and text[i] == "}":
        i += 1
    else:
        while True:
            i = skip(i)
            key, i = decode(i)
            if not isinstance(key, str):
                raise RecordParseError("object key must be a string", line_of(i))
            i = expect(i, ":")
            i = skip(i)
            if key in ("members", "edges") and i < n and text[i] == "[":
                items, lines = [], []
                i = skip(i + 1)
                if i < n and text[i] == "]":
                    i += 1
                else:
                    while True:
                        i = skip(i)
                        lines.append(line_of(i))
                        val, i = decode(i)
                        items.append(val)
                        i = skip(i)
                        if i < n and text[i] == ",":
                            i += 1
                            continue
                        i = expect(i, "]")
                        break
                top[key], positions[key] = items, lines
            else:
                val, i = decode(i)
                top[key] = val
            i = skip(i)
            if i < n and text[i] == ",":
                i += 1
                continue
            i = expect(i, "}")
            break
    if skip(i) != n:
        raise RecordParseError("trailing data after community object", line_of(skip(i)))
    for key in ("members", "edges"):
        if key in top and key not in positions:
            raise RecordParseError(f"{key} must be a list", 1)
    return top, positions


# --------------------------------------------------------------------------
# Synthetic generation


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max


# Roughly a 110 km x 65 km city region.
DEFAULT_REGION = BoundingBox(55.0, 56.0, 10.0, 11.0)


@dataclass(frozen=True)
class GeneratorConfig:
    size: int
    interest_dim: int = 8
    values_dim: int = 5
    gender_mix: Mapping[str, float] = field(default_factory=lambda: {"F": 0.5, "M": 0.5}, hash=False)
    edge_probability: float = 0.05
    location_region: BoundingBox = DEFAULT_REGION
    community_id: str = "synthetic"

    def validate(self) -> None:
        if not _is_pos_int(self.size):
            raise ValidationError(f"size must be a positive integer, got {self.size!r}")
        if not _is_pos_int(self.interest_dim) or not _is_pos_int(self.values_dim):
            raise ValidationError("interest_dim and values_dim must be positive integers")
        if not self.gender_mix:
            raise ValidationError("gender_mix must not be empty")
        if any(not (w >= 0) for w in self.gender_mix.values()):
            raise ValidationError("gender_mix proportions must be nonnegative")
        if abs(math.fsum(self.gender_mix.values()) - 1.0) > 1e-9:
            raise ValidationError("gender_mix proportions must sum to 1")
        if not (0.0 <= self.edge_probability <= 1.0):
            raise ValidationError("edge_probability must lie in [0, 1]")
        box = self.location_region
        if not (-90.0 <= box.lat_min <= box.lat_max <= 90.0
                and -180.0 < box.lon_min <= box.lon_max <= 180.0):
            raise ValidationError(f"bad location_region {box}")

    def to_dict(self) -> dict:
        b = self.location_region
        return {
            "size": self.size,
            "interest_dim": self.interest_dim,
            "values_dim": self.values_dim,
            "gender_mix": dict(self.gender_mix),
            "edge_probability": self.edge_probability,
            "location_region": [b.lat_min, b.lat_max, b.lon_min, b.lon_max],
            "community_id": self.community_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> GeneratorConfig:
        kw = dict(d)
        if "location_region" in kw:
            kw["location_region"] = BoundingBox(*kw["location_region"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ValidationError(f"bad generator config: {exc}") from None


def largest_remainder(total: int, proportions: Mapping[str, float]) -> dict[str, int]:
    """Apportion ``total`` items by proportion; ties go to the earlier label (sorted)."""
    labels = sorted(proportions)
    quotas = {lab: total * proportions[lab] for lab in labels}
    counts = {lab: math.floor(q) for lab, q in quotas.items()}
    left = total - sum(counts.values())
    order = sorted(labels, key=lambda lab: (-(quotas[lab] - counts[lab]), lab))
    for lab in order[:left]:
        counts[lab] += 1
    return counts


def generate_synthetic(cfg: GeneratorConfig, seed: int) -> Community:
    cfg.validate()
    rng = np.random.default_rng(seed & _SEED_MASK)
    n = cfg.size
    width = max(3, len(str(n)))
    ids = [f"u{i:0{width}d}" for i in range(1, n + 1)]

    interests = rng.random((n, cfg.interest_dim))
    values = rng.random((n, cfg.values_dim))
    box = cfg.location_region
    lats = rng.uniform(box.lat_min, box.lat_max, n)
    lons = rng.uniform(box.lon_min, box.lon_max, n)

    counts = largest_remainder(n, cfg.gender_mix)
    genders = [lab for lab in sorted(counts) for _ in range(counts[lab])]
    genders = [genders[j] for j in rng.permutation(n)]

    n_pairs = n * (n - 1) // 2
    draws = rng.random(n_pairs)
    edges = []
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            if draws[k] < cfg.edge_probability:
                edges.append((ids[i], ids[j]))
            k += 1

    members = tuple(
        Profile(ids[i], interests[i].tolist(), values[i].tolist(),
                (float(lats[i]), float(lons[i])), genders[i])
        for i in range(n)
    )
    return Community(cfg.community_id, cfg.interest_dim, cfg.values_dim,
                     tuple(cfg.gender_mix), members, frozenset(edges))

