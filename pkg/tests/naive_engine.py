"""A deliberately plain re-implementation of norm evaluation, for equivalence checks.

Context is a flat dict of dotted paths; conditions short-circuit; actions are
replayed by hand with the matching oracle.
"""

from normroute.dsl import And, Compare, Not, Or, PathRef

from oracles import oracle_scores, oracle_rank, oracle_round_robin, profile_dict


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _cmp(op, a, b):
    if a is None or b is None:
        return False
    if type(a) is bool or type(b) is bool:
        if not (type(a) is bool and type(b) is bool):
            return False
    elif _num(a) != _num(b):
        return False
    if op in ("==", "!="):
        return (a == b) == (op == "==")
    if not _num(a):
        return False
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def _val(ctx, t):
    if isinstance(t, PathRef):
        dotted = t.dotted
        return ctx.get(dotted)
    return t.value


def holds(ctx, c):
    if isinstance(c, And):
        return all(holds(ctx, k) for k in c.children)
    if isinstance(c, Or):
        return any(holds(ctx, k) for k in c.children)
    if isinstance(c, Not):
        return not holds(ctx, c.child)
    if isinstance(c, Compare):
        return _cmp(c.op, _val(ctx, c.left), _val(ctx, c.right))
    if isinstance(c, PathRef):
        return ctx.get(c.dotted) is True
    return c.value is True


class NaiveEngine:
    def __init__(self, community, norms):
        self.members = {p.id: profile_dict(p) for p in community.members}
        self.edges = sorted(community.edges)
        self.cid = community.id
        self.norms = list(norms)
        self.questions = {}
        self.vars = {}
        self.effects = []
        self.n_events = 0

    def context(self, etype, pl, eid):
        ctx = {"event.type": etype, "event.id": eid, "event.question_id": pl.get("question_id"),
               "event.user_id": pl.get("user_id"), "event.rating": pl.get("rating"),
               "event.t": pl.get("t"), "community.id": self.cid, "community.size": len(self.members)}
        for k, v in self.vars.items():
            ctx["community.vars." + k] = v
        q = self.questions.get(pl.get("question_id"))
        if etype == "question_created":
            q = {"id": pl["question_id"], "questioner": pl["questioner"], "query": pl["query"],
                 "text": pl.get("text", ""), "recipients": [], "answers": [], "scores": {}}
        if q is not None:
            ctx.update({"question.id": q["id"], "question.questioner": q["questioner"],
                        "question.text": q["text"], "question.status": "answered" if q["answers"] else "open",
                        "question.k": q["query"].get("k", 5), "question.recipients": len(q["recipients"]),
                        "question.answers": len(q["answers"]), "question.dispatched": bool(q["recipients"])})
            asker = self.members.get(q["questioner"])
            if asker:
                ctx["questioner.id"] = asker["id"]
                ctx["questioner.gender"] = asker["gender"]
        return ctx, q

    def handle(self, etype, pl):
        self.n_events += 1
        eid = f"e{self.n_events}"
        ctx, q = self.context(etype, pl, eid)
        fired = [i for i, nm in enumerate(self.norms) if holds(ctx, nm.condition)]
        if etype == "question_created":
            self.questions[q["id"]] = q
        fired.sort(key=lambda i: (-self.norms[i].priority, i))
        for i in fired:
            nm = self.norms[i]
            for act in nm.actions:
                args = [_val(ctx, a) for a in act.args]
                self.run(nm.name, act.name, args, eid)
        return fired

    def emit(self, norm, action, args, eid):
        self.effects.append((len(self.effects) + 1, norm, action, tuple(args), eid))

    def run(self, norm, action, args, eid):
        if action in ("notify", "send_message"):
            if args[0] in self.members:
                self.emit(norm, action, args, eid)
        elif action == "set":
            self.vars[args[0]] = args[1]
            self.emit(norm, action, args, eid)
        elif action == "select_responders":
            qid, k = args
            q = self.questions.get(qid)
            if q is None or not _num(k) or k < 1 or k != int(k) or q["questioner"] not in self.members:
                return
            query = dict(q["query"], questioner=q["questioner"])
            ranked = oracle_rank(oracle_scores(query, list(self.members.values()), self.edges))
            ids = [r[0] for r in ranked]
            groups = {m: self.members[m]["gender"] for m in ids}
            picked = oracle_round_robin(ids, groups, int(k))
            q["recipients"] = picked
            self.emit(norm, action, [qid, int(k)], eid)
            for uid in picked:
                self.emit(norm, "send_message", [uid, qid], eid)
        else:
            raise AssertionError(action)
