"""Seeded Q&A replay: scenarios in, reports out.

Answer behaviour is a per-recipient Bernoulli draw with the question's
``answer_prob``; each answer is then rated helpful with probability equal to
the answerer's matching score. All draws come from one generator seeded by the
run seed, consumed in a fixed order, so a report is a pure function of the
scenario and the seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from normroute.engine import Event, ExplanationTrace, handle_event, initial_state, reload_norms
from normroute.errors import ContractError, ReloadRejected, ValidationError
from normroute.matching import MatchQuery
from normroute.metrics import MetricParams
from normroute.profiles import Community, GeneratorConfig, generate_synthetic, load_community

DEFAULT_FANOUT = 5
HISTOGRAM_BINS = 10


def default_norms_text() -> str:
    return resources.files("normroute.data").joinpath("default.nm").read_text(encoding="utf-8")


# Fixed mix of diversity requirements used for synthetic question scripts.
QUERY_MIX: tuple[dict, ...] = (
    {"requirements": {"domain_interests": "similar", "physical_closeness": "close"},
     "mode": {"type": "weighted", "weights": {"domain_interests": 0.7, "physical_closeness": 0.3}}},
    {"requirements": {"beliefs_values": "diverse", "social_closeness": "close"},
     "mode": {"type": "lexicographic", "primary": ["beliefs_values"], "secondary": ["social_closeness"]}},
    {"requirements": {"domain_interests": "similar", "beliefs_values": "similar",
                      "social_closeness": "close"},
     "mode": {"type": "weighted", "weights": {"domain_interests": 1, "beliefs_values": 1,
                                             "social_closeness": 1}}},
    {"requirements": {"domain_interests": "similar", "physical_closeness": "close",
                      "beliefs_values": "diverse"},
     "mode": {"type": "lexicographic", "primary": ["domain_interests", "physical_closeness"],
              "secondary": ["beliefs_values"]}},
    {"requirements": {"domain_interests": "diverse", "social_closeness": "distant"},
     "mode": {"type": "weighted", "weights": {"domain_interests": 0.5, "social_closeness": 0.5}}},
)


# --------------------------------------------------------------------------
# Scenario


@dataclass(frozen=True)
class ScriptEvent:
    t: float
    type: str  # question_created | reload | timer_tick
    questioner: str | None = None
    text: str = ""
    query: Mapping[str, Any] | None = field(default=None, hash=False)
    answer_prob: float = 0.0
    norms_text: str | None = None
    id: str | None = None


@dataclass(frozen=True)
class Scenario:
    community: Community
    norms_text: str
    events: tuple[ScriptEvent, ...] = ()
    seed: int = 0
    params: MetricParams = field(default_factory=MetricParams)

    def validate(self) -> None:
        last = -math.inf
        for ev in self.events:
            if ev.t < last:
                raise ValidationError(f"event script not temporally ordered at t={ev.t}")
            last = ev.t
            if ev.type == "question_created":
                if ev.questioner not in self.community:
                    raise ValidationError(f"unknown questioner {ev.questioner!r} at t={ev.t}")
                if not (0.0 <= ev.answer_prob <= 1.0):
                    raise ValidationError(f"answer_prob {ev.answer_prob!r} outside [0, 1]")
            elif ev.type == "reload":
                if ev.norms_text is None:
                    raise ValidationError(f"reload event at t={ev.t} has no norms")
            elif ev.type != "timer_tick":
                raise ValidationError(f"unknown script event type {ev.type!r}")


def _read(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def load_scenario(path) -> Scenario:
    """Read a scenario JSON file; relative paths resolve against its directory."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return scenario_from_dict(raw, base)


def scenario_from_dict(raw: Mapping[str, Any], base: str = ".") -> Scenario:
    def rel(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    src = raw.get("community")
    if isinstance(src, str):
        community = load_community(rel(src))
    elif isinstance(src, Mapping) and "generator" in src:
        community = generate_synthetic(GeneratorConfig.from_dict(src["generator"]), int(src.get("seed", 0)))
    else:
        raise ValidationError("scenario 'community' must be a path or {generator, seed}")

    norms = raw.get("norms")
    norms_text = _read(rel(norms)) if norms else default_norms_text()

    events = []
    for i, e in enumerate(raw.get("events", [])):
        kind = "reload" if "reload" in e else e.get("type", "question_created")
        events.append(ScriptEvent(
            t=float(e.get("t", i)),
            type=kind,
            questioner=e.get("questioner"),
            text=e.get("text", ""),
            query=e.get("query"),
            answer_prob=float(e.get("answer_prob", 0.0)),
            norms_text=_read(rel(e["reload"])) if kind == "reload" else None,
            id=e.get("id"),
        ))
    params = MetricParams(decay_length_km=float(raw.get("decay_length_km", 50.0)))
    sc = Scenario(community, norms_text, tuple(events), int(raw.get("seed", 0)), params)
    sc.validate()
    return sc


def synthetic_script(community: Community, n_questions: int, seed: int, answer_prob: float = 0.4,
                     queries: Sequence[Mapping] = QUERY_MIX) -> tuple[ScriptEvent, ...]:
    """Questions from uniformly drawn members, cycling through ``queries``."""
    rng = np.random.default_rng(seed)
    ids = [p.id for p in community.members]
    picks = rng.integers(0, len(ids), n_questions)
    return tuple(
        ScriptEvent(t=float(i), type="question_created", questioner=ids[picks[i]],
                    text=f"synthetic question {i + 1}", query=queries[i % len(queries)],
                    answer_prob=answer_prob)
        for i in range(n_questions)
    )


# --------------------------------------------------------------------------
# Histogram and fan-out adaptation


@dataclass(frozen=True)
class Histogram:
    counts: tuple[int, ...]

    @property
    def bins(self) -> int:
        return len(self.counts)

    def edges(self) -> list[tuple[float, float]]:
        b = self.bins
        return [(i / b, (i + 1) / b) for i in range(b)]

    def render(self) -> str:
        lines = []
        for (lo, hi), c in zip(self.edges(), self.counts):
            close = "]" if hi == 1.0 else ")"
            lines.append(f"[{lo:.2f}, {hi:.2f}{close} {c:>6d} {'#' * bar_length(c)}".rstrip())
        return "\n".join(lines)

    def to_csv(self) -> str:
        rows = ["bin_low,bin_high,count"]
        rows += [f"{lo!r},{hi!r},{c}" for (lo, hi), c in zip(self.edges(), self.counts)]
        return "\n".join(rows) + "\n"


def bar_length(count: int) -> int:
    # Logarithmic bars: round half up of 10*log10(c+1).
    return int(math.floor(10 * math.log10(count + 1) + 0.5))


def histogram(scores: Iterable[float], bins: int = HISTOGRAM_BINS) -> Histogram:
    if not isinstance(bins, int) or bins < 1:
        raise ContractError(f"bins must be a positive integer, got {bins!r}")
    counts = [0] * bins
    for s in scores:
        if not (0.0 <= s <= 1.0):
            raise ContractError(f"score {s!r} outside [0, 1]")
        i = min(int(s * bins), bins - 1)
        # keep the float product consistent with the published edges i/bins
        while i > 0 and s < i / bins:
            i -= 1
        while i < bins - 1 and s >= (i + 1) / bins:
            i += 1
        counts[i] += 1
    return Histogram(tuple(counts))


@dataclass(frozen=True)
class FeedbackRecord:
    question_id: str
    k: int
    answers: int
    ratings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"question_id": self.question_id, "k": self.k, "answers": self.answers,
                "ratings": list(self.ratings)}


def adapt_k(history: Sequence[FeedbackRecord], k_min: int = 1, k_max: int = 10,
            target: float = 0.95) -> int:
    """Smallest fan-out giving at least ``target`` chance of one or more answers."""
    recipients = sum(r.k for r in history)
    if recipients == 0:
        return DEFAULT_FANOUT
    p = sum(r.answers for r in history) / recipients
    if p == 0:
        return DEFAULT_FANOUT
    for k in range(k_min, k_max + 1):
        if 1.0 - (1.0 - p) ** k >= target:
            return k
    return k_max


# --------------------------------------------------------------------------
# Run


@dataclass
class SimulationReport:
    seed: int
    questions: list[dict] = field(default_factory=list)
    feedback: list[FeedbackRecord] = field(default_factory=list)
    k_trajectory: list[int] = field(default_factory=list)
    norm_versions: list[dict] = field(default_factory=list)

    def selected_aggregates(self) -> list[float]:
        return [m["aggregate"] for q in self.questions for m in q["scores"]]

    @property
    def histogram(self) -> Histogram:
        return histogram(self.selected_aggregates())

    def to_dict(self) -> dict:
        aggs = self.selected_aggregates()
        h = histogram(aggs)
        return {
            "seed": self.seed,
            "summary": {
                "questions": len(self.questions),
                "selected_profiles": len(aggs),
                "mean_aggregate": math.fsum(aggs) / len(aggs) if aggs else None,
            },
            "histogram": {"bins": h.bins, "edges": [list(e) for e in h.edges()], "counts": list(h.counts)},
            "questions": self.questions,
            "feedback": [r.to_dict() for r in self.feedback],
            "k_trajectory": self.k_trajectory,
            "norm_versions": self.norm_versions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def run_scenario(sc: Scenario, seed: int | None = None) -> SimulationReport:
    sc.validate()
    seed = sc.seed if seed is None else seed
    rng = np.random.default_rng(seed & ((1 << 64) - 1))
    state = initial_state(sc.community, sc.norms_text, sc.params)
    report = SimulationReport(seed)
    report.norm_versions.append({"t": None, "version": state.version})
    history: list[FeedbackRecord] = []
    n_events = 0

    def fire(kind, payload):
        nonlocal state, n_events
        n_events += 1
        state, effects, traces = handle_event(state, Event(kind, payload, id=f"e{n_events}"))
        return effects, traces

    n_q = 0
    for ev in sc.events:
        if ev.type == "reload":
            try:
                state = reload_norms(state, ev.norms_text)
                report.norm_versions.append({"t": ev.t, "version": state.version})
            except ReloadRejected as exc:
                report.norm_versions.append({"t": ev.t, "version": state.version,
                                             "rejected": [d.format() for d in exc.diagnostics]})
            continue
        if ev.type == "timer_tick":
            fire("timer_tick", {"t": ev.t})
            continue

        n_q += 1
        qid = ev.id or f"q{n_q:04d}"
        query = MatchQuery.from_dict(ev.query or {}, questioner=ev.questioner)
        _, traces = fire("question_created", {"question_id": qid, "questioner": ev.questioner,
                                               "text": ev.text, "query": query, "t": ev.t})
        q = state.questions[qid]
        answerers = [uid for uid in q.recipients if rng.random() < ev.answer_prob]
        for uid in answerers:
            fire("answer_submitted", {"question_id": qid, "user_id": uid, "t": ev.t})
        ratings = []
        for uid in answerers:
            score = q.score_of(uid)
            rating = "helpful" if rng.random() < score.aggregate else "unhelpful"
            ratings.append(rating)
            fire("feedback_submitted", {"question_id": qid, "user_id": uid, "rating": rating, "t": ev.t})

        record = FeedbackRecord(qid, len(q.recipients), len(answerers), tuple(ratings))
        history.append(record)
        report.feedback.append(record)
        k_next = adapt_k(history)
        report.k_trajectory.append(k_next)
        # exposed to norms as community.vars.adapted_k
        state = replace(state, variables={**state.variables, "adapted_k": k_next})

        report.questions.append({
            "id": qid,
            "t": ev.t,
            "questioner": ev.questioner,
            "norm_version": state.version,
            "k": len(q.recipients),
            "selected": list(q.recipients),
            "scores": [m.to_dict() for m in q.scores],
            "answers": answerers,
            "ratings": ratings,
            "traces": [t.to_dict() for t in traces],
        })
    return report


def question_traces(report: Mapping[str, Any], question_id: str) -> list[ExplanationTrace]:
    for q in report.get("questions", []):
        if q["id"] == question_id:
            return [ExplanationTrace.from_dict(t) for t in q["traces"]]
    raise KeyError(question_id)


def mean_selected_score(size: int, seed: int, n_questions: int = 100,
                        base: GeneratorConfig | None = None) -> float:
    """Mean aggregate of selected profiles for one synthetic community of ``size``."""
    cfg = replace(base or GeneratorConfig(size), size=size)
    community = generate_synthetic(cfg, seed)
    sc = Scenario(community, default_norms_text(), synthetic_script(community, n_questions, seed), seed)
    aggs = run_scenario(sc).selected_aggregates()
    return math.fsum(aggs) / len(aggs)
