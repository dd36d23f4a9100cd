"""Event-driven norm interpreter.

Every norm's condition is read against one snapshot: the state before the
event, extended with the event payload. Fired norms then run their actions in
(priority descending, declaration order); a later write wins. Actions never
re-trigger norms within the same event.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from normroute.dsl import (
    ANY, BOOLEAN, NUMBER, STRING, ActionSig, And, Compare, NormAST, Not, Or, PathRef,
    SchemaCatalog, format_condition, lint, parse_with_diagnostics,
)
from normroute.errors import ContractError, LookupFailure, ReloadRejected
from normroute.matching import MatchQuery, MatchScore, select_scored
from normroute.metrics import MetricParams
from normroute.profiles import Community

ENGINE_SCHEMA = SchemaCatalog(
    paths={
        "event.type": STRING,
        "event.id": STRING,
        "event.question_id": STRING,
        "event.user_id": STRING,
        "event.rating": STRING,
        "event.t": NUMBER,
        "question.id": STRING,
        "question.questioner": STRING,
        "question.text": STRING,
        "question.status": STRING,
        "question.k": NUMBER,
        "question.recipients": NUMBER,
        "question.answers": NUMBER,
        "question.dispatched": BOOLEAN,
        "questioner.id": STRING,
        "questioner.gender": STRING,
        "candidate.id": STRING,
        "candidate.gender": STRING,
        "candidate.score": NUMBER,
        "candidate.tier": NUMBER,
        "community.id": STRING,
        "community.size": NUMBER,
        "community.vars.*": ANY,
    },
    actions={
        "send_message": ActionSig((STRING, STRING)),
        "update_profile": ActionSig((STRING, STRING, ANY)),
        "select_responders": ActionSig((STRING, NUMBER)),
        "notify": ActionSig((STRING, STRING)),
        "set": ActionSig((STRING, ANY)),
    },
)

EVENT_TYPES = {
    "question_created": ("question_id", "questioner"),
    "answer_submitted": ("question_id", "user_id"),
    "feedback_submitted": ("question_id", "user_id", "rating"),
    "timer_tick": (),
}

# Profile fields that update_profile may not touch.
_PROTECTED_FIELDS = frozenset({"id", "interests", "values", "location"})


@dataclass(frozen=True)
class Event:
    type: str
    payload: Mapping[str, Any] = field(default_factory=dict, hash=False)
    id: str | None = None

    def validate(self) -> None:
        if self.type not in EVENT_TYPES:
            raise ContractError(f"unknown event type {self.type!r}")
        missing = [k for k in EVENT_TYPES[self.type] if k not in self.payload]
        if missing:
            raise ContractError(f"{self.type} event missing payload field(s) {missing}")


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    questioner: str
    query: MatchQuery
    text: str = ""
    t: float = 0.0
    status: str = "open"
    recipients: tuple[str, ...] = ()
    scores: tuple[MatchScore, ...] = ()
    answers: tuple[str, ...] = ()
    ratings: tuple[tuple[str, str], ...] = ()

    def score_of(self, user_id: str) -> MatchScore | None:
        for m in self.scores:
            if m.candidate == user_id:
                return m
        return None


@dataclass(frozen=True)
class ActionEffect:
    seq: int
    norm: str
    action: str
    args: tuple
    event_id: str

    def to_dict(self) -> dict:
        return {"seq": self.seq, "norm": self.norm, "action": self.action,
                "args": list(self.args), "event_id": self.event_id}


@dataclass(frozen=True)
class LeafValuation:
    text: str
    paths: tuple[str, ...]
    observed: tuple
    outcome: bool
    negated: bool = False

    @property
    def holds(self) -> bool:
        """Whether this leaf pushes its norm towards firing."""
        return self.outcome != self.negated

    def to_dict(self) -> dict:
        return {"text": self.text, "paths": list(self.paths), "observed": list(self.observed),
                "outcome": self.outcome, "negated": self.negated}

    @classmethod
    def from_dict(cls, d: Mapping) -> LeafValuation:
        return cls(d["text"], tuple(d["paths"]), tuple(d["observed"]), d["outcome"], d["negated"])


@dataclass(frozen=True)
class ExplanationTrace:
    norm: str
    fired: bool
    leaves: tuple[LeafValuation, ...]
    conjuncts: tuple[bool, ...]
    blocking: int | None = None
    faults: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"norm": self.norm, "fired": self.fired, "leaves": [lv.to_dict() for lv in self.leaves],
                "conjuncts": list(self.conjuncts), "blocking": self.blocking, "faults": list(self.faults)}

    @classmethod
    def from_dict(cls, d: Mapping) -> ExplanationTrace:
        return cls(d["norm"], d["fired"], tuple(LeafValuation.from_dict(x) for x in d["leaves"]),
                   tuple(d["conjuncts"]), d["blocking"], tuple(d["faults"]))


@dataclass(frozen=True)
class EngineState:
    community: Community
    norms: tuple[NormAST, ...] = ()
    version: int = 0
    questions: Mapping[str, QuestionRecord] = field(default_factory=dict, hash=False)
    log: tuple[ActionEffect, ...] = ()
    variables: Mapping[str, Any] = field(default_factory=dict, hash=False)
    events: tuple[str, ...] = ()
    params: MetricParams = field(default_factory=MetricParams)

    @property
    def next_seq(self) -> int:
        return len(self.log) + 1


def load_norms(text) -> list[NormAST]:
    """Parse and lint against the engine schema; raise ReloadRejected on any diagnostic."""
    norms, diags = parse_with_diagnostics(text)
    if not diags:
        diags = lint(norms, ENGINE_SCHEMA)
    if diags:
        raise ReloadRejected(diags)
    return norms


def initial_state(community: Community, norms_text: str | None = None,
                  params: MetricParams | None = None) -> EngineState:
    state = EngineState(community, params=params or MetricParams())
    if norms_text is not None:
        state = reload_norms(state, norms_text)
    return state


def reload_norms(state: EngineState, text) -> EngineState:
    norms = load_norms(text)
    return replace(state, norms=tuple(norms), version=state.version + 1)


# --------------------------------------------------------------------------
# Condition evaluation


def _build_context(state: EngineState, event: Event, event_id: str) -> dict:
    pl = event.payload
    ctx: dict[str, Any] = {
        "event": {
            "type": event.type,
            "id": event_id,
            "question_id": pl.get("question_id"),
            "user_id": pl.get("user_id"),
            "rating": pl.get("rating"),
            "t": pl.get("t"),
        },
        "community": {
            "id": state.community.id,
            "size": len(state.community),
            "vars": dict(state.variables),
        },
    }
    qid = pl.get("question_id")
    q = state.questions.get(qid) if qid is not None else None
    if event.type == "question_created" and q is None:
        q = _new_question(event)
    if q is not None:
        ctx["question"] = {
            "id": q.id,
            "questioner": q.questioner,
            "text": q.text,
            "status": q.status,
            "k": q.query.k,
            "recipients": len(q.recipients),
            "answers": len(q.answers),
            "dispatched": bool(q.recipients),
        }
        asker = state.community.by_id.get(q.questioner)
        if asker is not None:
            ctx["questioner"] = {"id": asker.id, "gender": asker.gender}
    uid = pl.get("user_id")
    cand = state.community.by_id.get(uid) if uid is not None else None
    if cand is not None:
        ms = q.score_of(cand.id) if q is not None else None
        ctx["candidate"] = {
            "id": cand.id,
            "gender": cand.gender,
            "score": ms.aggregate if ms else None,
            "tier": ms.tier if ms else None,
        }
    return ctx


def resolve(ctx: Mapping, path: PathRef):
    node: Any = ctx
    for part in path.parts:
        if not isinstance(node, Mapping) or part not in node:
            return None
        node = node[part]
    return node


def _term_value(ctx, t):
    return resolve(ctx, t) if isinstance(t, PathRef) else t.value


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def compare_values(op: str, a, b) -> bool:
    """Undefined (None) operands make every comparison false."""
    if a is None or b is None:
        return False
    if _is_number(a) != _is_number(b) or isinstance(a, bool) != isinstance(b, bool):
        return False
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if not _is_number(a):
        return False
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _eval_leaf(ctx, leaf) -> tuple[bool, tuple, tuple]:
    if isinstance(leaf, Compare):
        a, b = _term_value(ctx, leaf.left), _term_value(ctx, leaf.right)
        paths = tuple(t.dotted for t in (leaf.left, leaf.right) if isinstance(t, PathRef))
        observed = tuple(v for t, v in ((leaf.left, a), (leaf.right, b)) if isinstance(t, PathRef))
        return compare_values(leaf.op, a, b), paths, observed
    if isinstance(leaf, PathRef):
        v = resolve(ctx, leaf)
        return v is True, (leaf.dotted,), (v,)
    return leaf.value is True, (), ()


def _eval(ctx, cond, negated: bool, leaves: list) -> bool:
    # All branches are evaluated so every leaf lands in the trace.
    if isinstance(cond, And):
        results = [_eval(ctx, c, negated, leaves) for c in cond.children]
        return all(results)
    if isinstance(cond, Or):
        results = [_eval(ctx, c, negated, leaves) for c in cond.children]
        return any(results)
    if isinstance(cond, Not):
        return not _eval(ctx, cond.child, not negated, leaves)
    outcome, paths, observed = _eval_leaf(ctx, cond)
    text = format_condition(cond)
    leaves.append(LeafValuation(text, paths, observed, outcome, negated))
    return outcome


def evaluate_norm(ctx: Mapping, norm: NormAST) -> ExplanationTrace:
    leaves: list[LeafValuation] = []
    top = norm.condition.children if isinstance(norm.condition, And) else (norm.condition,)
    conjuncts = tuple(_eval(ctx, c, False, leaves) for c in top)
    fired = all(conjuncts)
    blocking = None
    if not fired:
        blocking = next((i for i, lv in enumerate(leaves) if not lv.holds), None)
    return ExplanationTrace(norm.name, fired, tuple(leaves), conjuncts, blocking)


# --------------------------------------------------------------------------
# Event handling


def _new_question(event: Event) -> QuestionRecord:
    pl = event.payload
    query = pl.get("query")
    if query is None:
        query = MatchQuery(pl["questioner"], {})
    elif not isinstance(query, MatchQuery):
        query = MatchQuery.from_dict(query, questioner=pl["questioner"])
    return QuestionRecord(pl["question_id"], pl["questioner"], query,
                          text=pl.get("text", ""), t=pl.get("t", 0.0))


def _bookkeep(state: EngineState, event: Event) -> dict[str, QuestionRecord]:
    questions = dict(state.questions)
    pl = event.payload
    if event.type == "question_created":
        if pl["question_id"] in questions:
            raise ContractError(f"question {pl['question_id']!r} already exists")
        questions[pl["question_id"]] = _new_question(event)
    elif event.type == "answer_submitted":
        q = questions.get(pl["question_id"])
        if q is not None and pl["user_id"] not in q.answers:
            questions[q.id] = replace(q, answers=q.answers + (pl["user_id"],), status="answered")
    elif event.type == "feedback_submitted":
        q = questions.get(pl["question_id"])
        if q is not None:
            questions[q.id] = replace(q, ratings=q.ratings + ((pl["user_id"], pl["rating"]),))
    return questions


class _ActionFault(Exception):
    pass


class _Executor:
    def __init__(self, state: EngineState, questions: dict, event_id: str):
        self.community = state.community
        self.questions = questions
        self.variables = dict(state.variables)
        self.params = state.params
        self.seq = state.next_seq
        self.event_id = event_id
        self.effects: list[ActionEffect] = []

    def emit(self, norm: str, action: str, args: tuple) -> None:
        self.effects.append(ActionEffect(self.seq, norm, action, args, self.event_id))
        self.seq += 1

    def member(self, uid) -> str:
        if not isinstance(uid, str) or uid not in self.community:
            raise _ActionFault(f"unknown user {uid!r}")
        return uid

    def run(self, norm: str, action: str, args: tuple) -> None:
        getattr(self, "do_" + action)(norm, *args)

    def do_send_message(self, norm, uid, content):
        self.emit(norm, "send_message", (self.member(uid), content))

    def do_notify(self, norm, uid, content):
        self.emit(norm, "notify", (self.member(uid), content))

    def do_set(self, norm, name, value):
        if not isinstance(name, str) or not name:
            raise _ActionFault(f"bad variable name {name!r}")
        self.variables[name] = value
        self.emit(norm, "set", (name, value))

    def do_update_profile(self, norm, uid, attribute, value):
        p = self.community.profile(self.member(uid))
        if not isinstance(attribute, str) or attribute in _PROTECTED_FIELDS:
            raise _ActionFault(f"attribute {attribute!r} cannot be updated")
        if attribute == "gender":
            if value not in self.community.gender_labels:
                raise _ActionFault(f"gender {value!r} not in the community's label set")
            p = replace(p, gender=value)
        else:
            p = replace(p, extra_shallow={**p.extra_shallow, attribute: value})
        self.community = self.community.replace_member(p)
        self.emit(norm, "update_profile", (uid, attribute, value))

    def do_select_responders(self, norm, qid, k):
        q = self.questions.get(qid) if isinstance(qid, str) else None
        if q is None:
            raise _ActionFault(f"unknown question {qid!r}")
        if not _is_number(k) or k != math.floor(k) or k < 1:
            raise _ActionFault(f"fan-out must be a positive integer, got {k!r}")
        if q.questioner not in self.community:
            raise _ActionFault(f"unknown user {q.questioner!r}")
        k = int(k)
        _, selected = select_scored(q.query, self.community, self.params, k=k)
        self.questions[qid] = replace(q, recipients=tuple(m.candidate for m in selected),
                                      scores=tuple(selected))
        self.emit(norm, "select_responders", (qid, k))
        for m in selected:
            self.emit(norm, "send_message", (m.candidate, qid))


def handle_event(state: EngineState, event: Event
                 ) -> tuple[EngineState, list[ActionEffect], list[ExplanationTrace]]:
    event.validate()
    event_id = event.id or f"e{len(state.events) + 1}"
    ctx = _build_context(state, event, event_id)
    traces = [evaluate_norm(ctx, nm) for nm in state.norms]

    questions = _bookkeep(state, event)
    ex = _Executor(state, questions, event_id)
    order = sorted((i for i, t in enumerate(traces) if t.fired),
                   key=lambda i: (-state.norms[i].priority, i))
    for i in order:
        nm = state.norms[i]
        faults = []
        for act in nm.actions:
            args = tuple(_term_value(ctx, a) for a in act.args)
            try:
                ex.run(nm.name, act.name, args)
            except (_ActionFault, LookupFailure) as exc:
                faults.append(f"{act.name}: {exc}")
        if faults:
            traces[i] = replace(traces[i], faults=tuple(faults))

    new_state = replace(
        state,
        community=ex.community,
        questions=ex.questions,
        log=state.log + tuple(ex.effects),
        variables=ex.variables,
        events=state.events + (event_id,),
    )
    return new_state, ex.effects, traces


# --------------------------------------------------------------------------
# Explanations and export


def explain(traces, norm_name: str) -> str:
    trace = next((t for t in traces if t.norm == norm_name), None)
    if trace is None:
        raise LookupFailure(f"no trace for norm {norm_name!r}")
    verdict = "fired" if trace.fired else "did not fire"
    lines = [f"norm {trace.norm}: {verdict}"]
    for i, lv in enumerate(trace.leaves):
        seen = ", ".join(f"{p} = {_show(v)}" for p, v in zip(lv.paths, lv.observed))
        mark = "true" if lv.holds else "false"
        line = f"  [{mark}] {'not ' if lv.negated else ''}{lv.text}"
        if seen:
            line += f"  (observed {seen})"
        if i == trace.blocking:
            line += "  <- first failing condition"
        lines.append(line)
    for f in trace.faults:
        lines.append(f"  fault: {f}")
    return "\n".join(lines)


def _show(v) -> str:
    if v is None:
        return "undefined"
    return json.dumps(v)


def effects_to_ndjson(effects) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in effects)


__all__ = [
    "ENGINE_SCHEMA", "ActionEffect", "EngineState", "Event", "ExplanationTrace", "LeafValuation",
    "QuestionRecord", "effects_to_ndjson", "evaluate_norm", "explain",
    "handle_event", "initial_state", "load_norms", "reload_norms",
]
