"""Query registry, trace-level evaluation and reports."""
from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .harness import ExplorationConfig, Trace, explore
from .messages import COMMISSIONER_KINDS
from .names import FREE_NAMES, free
from .roles import CATALOG_EVENTS, Event, kind_const
from .terms import Name, Term

CAVEAT = (
    "Bounded evaluation: Holds means no violation was found within the explored "
    "sessions, forge depth and schedule bound."
)


class UnknownQueryId(KeyError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


Arg = Union[Var, Term]


@dataclass(frozen=True)
class Pattern:
    tag: str
    args: tuple

    def match(self, ev: Event, binding: dict) -> Optional[dict]:
        """Extend ``binding`` so that this pattern equals ``ev``, or None."""
        if ev.tag != self.tag or len(ev.args) != len(self.args):
            return None
        out = dict(binding)
        for want, got in zip(self.args, ev.args):
            if isinstance(want, Var):
                bound = out.get(want.name)
                if bound is None:
                    out[want.name] = got
                elif bound != got:
                    return None
            elif want != got:
                return None
        return out

    def __str__(self):
        return f"{self.tag}({','.join(str(a) for a in self.args)})"


def pat(tag: str, *args) -> Pattern:
    return Pattern(tag, tuple(Var(a) if isinstance(a, str) else a for a in args))


@dataclass(frozen=True)
class Query:
    id: str
    kind: str  # reachability | correspondence | secrecy
    protocol: str
    expected: str  # Holds | ReachableWitness
    model_added: bool = False
    patterns: tuple = ()  # reachability conjunction
    conclusion: Optional[Pattern] = None
    premises: tuple = ()
    injective: bool = False
    goal: str = ""  # secrecy: a free-name label, or a fresh-name label (all instances)

    def __post_init__(self):
        if self.kind == "correspondence" and self.injective and len(self.premises) != 1:
            raise ValueError("injective correspondence takes exactly one premise")

    @property
    def text(self) -> str:
        if self.kind == "reachability":
            return " && ".join(f"event({p})" for p in self.patterns)
        if self.kind == "correspondence":
            ev = "inj-event" if self.injective else "event"
            rhs = " && ".join(f"{ev}({p})" for p in self.premises)
            return f"{ev}({self.conclusion}) ==> {rhs}"
        return f"attacker({self.goal})"


# --------------------------------------------------------------------------
# Verdicts

TOOL_SEMANTICS = {"Holds": "true", "Violated": "false", "ReachableWitness": "false",
                  "Unreached": "true"}


@dataclass
class Verdict:
    status: str
    trace: Optional[Trace] = None
    positions: tuple = ()
    detail: str = ""

    @property
    def tool_semantics(self) -> str:
        return TOOL_SEMANTICS[self.status]


def _occurrences(events: list, p: Pattern, binding: dict) -> list:
    out = []
    for ev in events:
        b = p.match(ev, binding)
        if b is not None:
            out.append((ev, b))
    return out


def match_conjunction(events: list, patterns: tuple) -> Optional[tuple]:
    """Positions of events satisfying all patterns with shared bindings."""

    def go(i: int, binding: dict, chosen: tuple):
        if i == len(patterns):
            return chosen
        for ev, b in _occurrences(events, patterns[i], binding):
            got = go(i + 1, b, chosen + (ev.pos,))
            if got is not None:
                return got
        return None

    return go(0, {}, ())


def _premise_options(events: list, q: Query, concl: Event, binding: dict) -> list:
    """Joint premise assignments (tuples of events) strictly before ``concl``."""
    earlier = [e for e in events if e.pos < concl.pos]
    out = []

    def go(i: int, b: dict, chosen: tuple):
        if i == len(q.premises):
            out.append(chosen)
            return
        for ev, b2 in _occurrences(earlier, q.premises[i], b):
            go(i + 1, b2, chosen + (ev,))

    go(0, binding, ())
    return out


def _max_matching(options: list) -> tuple[int, dict]:
    """Kuhn's augmenting paths; options[i] lists premise keys for conclusion i."""
    owner: dict = {}

    def augment(i: int, seen: set) -> bool:
        for p in options[i]:
            if p in seen:
                continue
            seen.add(p)
            if p not in owner or augment(owner[p], seen):
                owner[p] = i
                return True
        return False

    size = sum(1 for i in range(len(options)) if augment(i, set()))
    return size, owner


def check_correspondence(events: list, q: Query) -> Optional[tuple]:
    """None when ``events`` satisfy ``q``, else positions explaining the failure."""
    concls = [(ev, b) for ev, b in _occurrences(events, q.conclusion, {})]
    if not concls:
        return None
    options = []
    for ev, b in concls:
        opts = _premise_options(events, q, ev, b)
        if not opts:
            return (ev.pos,)
        options.append(opts)
    if not q.injective:
        return None
    keys = [sorted({o[0].pos for o in opts}) for opts in options]
    size, owner = _max_matching(keys)
    if size == len(concls):
        return None
    matched = set(owner.values())
    unmatched = [concls[i][0].pos for i in range(len(concls)) if i not in matched]
    shared = sorted({p for ks in keys for p in ks})
    return tuple(unmatched) + tuple(shared)


def secrecy_goals(q: Query, trace: Trace) -> list:
    if q.goal in FREE_NAMES:
        return [free(q.goal)]
    out = []
    for names in trace.catalog.fresh.values():
        t = names.get(q.goal)
        if isinstance(t, Name):
            out.append(t)
    return out


class QueryState:
    """Streaming verdict for one query; ``done`` once the verdict is final."""

    def __init__(self, q: Query):
        self.q = q
        self.verdict = Verdict("Unreached" if q.kind == "reachability" else "Holds")
        self.done = False

    def feed(self, trace: Trace) -> None:
        if self.done:
            return
        q = self.q
        if q.kind == "reachability":
            hit = match_conjunction(trace.events(), q.patterns)
            if hit is not None:
                self.verdict = Verdict("ReachableWitness", trace, hit)
                self.done = True
        elif q.kind == "correspondence":
            bad = check_correspondence(trace.events(), q)
            if bad is not None:
                self.verdict = Verdict("Violated", trace, bad)
                self.done = True
        else:
            for goal in secrecy_goals(q, trace):
                w = trace.final_kb.can_derive(goal)
                if w is not None:
                    self.verdict = Verdict("Violated", trace, (), w.render())
                    self.done = True
                    return


def evaluate(q: Query, corpus: Iterable[Trace]) -> Verdict:
    st = QueryState(q)
    for t in corpus:
        st.feed(t)
        if st.done:
            break
    return st.verdict


def eval_reachability(q: Query, corpus: Iterable[Trace]) -> Verdict:
    if q.kind != "reachability":
        raise ValueError(f"{q.id} is not a reachability query")
    return evaluate(q, corpus)


def eval_correspondence(q: Query, corpus: Iterable[Trace]) -> Verdict:
    if q.kind != "correspondence":
        raise ValueError(f"{q.id} is not a correspondence query")
    return evaluate(q, corpus)


def eval_secrecy(q: Query, corpus: Iterable[Trace]) -> Verdict:
    if q.kind != "secrecy":
        raise ValueError(f"{q.id} is not a secrecy query")
    return evaluate(q, corpus)


# --------------------------------------------------------------------------
# Registry

_C, _J = "commissioner", "joiner"
_COMM_EVENTS = {
    "cclircvck", "bsrvsntck", "bsrvssk", "cclissk", "bsrvbeg", "bsrvfin", "cclibeg",
    "cclifin", "rcvcommrsp", "rcvcommkarsp", "sntcommrsp", "sntcommkarsp", "leaderrep",
    "leaderrepka",
}
_FIN7 = ("ss", "ds", "cr", "sr", "eg", "cl", "sl")
_FIN6 = ("p", "cr", "sr", "eg", "cl", "sl")


def _corr(qid, protocol, concl, premises, injective=False, model_added=False):
    return Query(qid, "correspondence", protocol, "Holds", model_added,
                 conclusion=concl, premises=tuple(premises), injective=injective)


def _reach(qid, protocol, patterns, model_added=False):
    return Query(qid, "reachability", protocol, "ReachableWitness", model_added,
                 patterns=tuple(patterns))


def _build_registry() -> dict:
    qs = [
        _corr("Q1a", _C, pat("cclircvck", "cook"), [pat("bsrvsntck", "cook")]),
        _corr("Q1b", _J, pat("joinerrcvck", "cook"), [pat("csrvsntck", "cook")]),
        _reach("Q2a", _C, [pat("bsrvssk", "el", "k"), pat("cclissk", "el", "k")]),
        _reach("Q2b", _J, [pat("csrvssk", "e1"), pat("joinerssk", "e1")]),
        _reach("Q2c", _J, [pat("eventdskjnr", "a"), pat("eventdskcmm", "a")]),
        _corr("Q3", _J, pat("joinergtsnetcreds", "ntcreds"), [
            pat("csrvfin", "p", "c", "s", "eg", "cl", "sl"),
            pat("evjrtrsendsnetcreds", "ntcreds"),
            pat("joinerfin", "p", "c", "s", "eg", "cl", "sl"),
        ]),
        _corr("Q4a", _C, pat("cclifin", *_FIN7), [pat("bsrvbeg", *_FIN7)], True),
        _corr("Q4b", _C, pat("bsrvfin", *_FIN7), [pat("cclibeg", *_FIN7)], True),
        _corr("Q4c", _J, pat("joinerfin", *_FIN6), [pat("csrvbeg", *_FIN6)], True),
        _corr("Q4d", _J, pat("csrvfin", *_FIN6), [pat("joinerbeg", *_FIN6)], True),
        _corr("Q5a", _C, pat("rcvcommrsp", "r3", "req", "mrq"),
              [pat("sntcommrsp", "nn", "r3", "req", "lrq", "lrs", "mrq")], True),
        _corr("Q5b", _C, pat("rcvcommkarsp", "r3", "req", "mrq"),
              [pat("sntcommkarsp", "nn", "r3", "req", "lrq", "lrs", "mrq")], True),
        _corr("Q6a", _C, pat("sntcommrsp", "nn", "r3", "req", "lrq", "lrs", "mrq"),
              [pat("leaderrep", "r3", "nn", "id", "lrq", "lsrs")], True),
        _corr("Q6b", _C, pat("sntcommkarsp", "nn", "r3", "req", "lrq", "lrs", "mrq"),
              [pat("leaderrepka", "r3", "nn", "id", "lrq", "lrs")], True),
        _corr("Q7", _C, pat("leaderrepka", "r3", "nk", "id", "lrq", "lrs"),
              [pat("leaderrep", "r3", "nn", "id", "lrq2", "lrs2")], model_added=True),
    ]
    from .roles import EVENT_ARITY

    for tag in CATALOG_EVENTS:
        args = [f"x{i}" for i in range(EVENT_ARITY[tag])]
        qs.append(_reach(f"R-{tag}", _C if tag in _COMM_EVENTS else _J, [pat(tag, *args)]))
    for kind in COMMISSIONER_KINDS:
        qs.append(_reach(f"R-msg-{kind}", _C, [pat("msg_rcvd", kind_const(kind))], True))
    listed = [
        ("commpetreq", _C), ("commpetres", _C), ("commkareq", _C), ("commkares", _C),
        ("leadpetreq", _C), ("leadpetres", _C), ("leadkareq", _C), ("leadkares", _C),
        ("secretpskc", _C), ("netcreds", _J), ("join_fin_req", _J), ("join_fin_rsp", _J),
        ("kek", _J), ("sspjoiner_sec", _J),
    ]
    added = [
        ("sspcommissioner", _C), ("sspjoiner", _J), ("secretborderandleader", _C),
        ("scrtjtrcm", _J), ("Granted", _C), ("comm_session", _C), ("secret_dkj", _J),
        ("secret_sskc", _C), ("secret_sskj", _J),
    ]
    for goal, proto in listed:
        qs.append(Query(f"S-{goal}", "secrecy", proto, "Holds", goal=goal))
    for goal, proto in added:
        qs.append(Query(f"S-{goal}", "secrecy", proto, "Holds", True, goal=goal))
    return {q.id: q for q in qs}


REGISTRY: dict = _build_registry()
REFERENCE_IDS = ("Q1a", "Q1b", "Q2a", "Q2b", "Q2c", "Q3", "Q4a", "Q4b", "Q4c", "Q4d",
              "Q5a", "Q5b", "Q6a", "Q6b")


def select(ids: Optional[Iterable[str]] = None, protocols: Iterable[str] = (_C, _J)) -> list:
    if ids is None:
        protos = set(protocols)
        return [q for q in REGISTRY.values() if q.protocol in protos]
    out = []
    for i in ids:
        if i not in REGISTRY:
            raise UnknownQueryId(i)
        out.append(REGISTRY[i])
    return out


# --------------------------------------------------------------------------
# Suite and report

@dataclass
class ReportRow:
    query: Query
    verdict: Verdict
    counterexample_path: Optional[str] = None

    @property
    def actual(self) -> str:
        return self.verdict.status

    @property
    def match(self) -> bool:
        return self.verdict.status == self.query.expected


@dataclass
class Report:
    config: ExplorationConfig
    rows: list
    traces: int = 0
    outcomes: Counter = field(default_factory=Counter)

    @property
    def mismatches(self) -> list:
        return [r for r in self.rows if not r.match]

    @property
    def exit_code(self) -> int:
        return 1 if self.mismatches else 0


def run_suite(
    cfg: ExplorationConfig,
    selection: Optional[Iterable[str]] = None,
    dump_dir: Optional[str] = None,
    corpus: Optional[Iterable[Trace]] = None,
) -> Report:
    queries = select(selection, cfg.protocols)
    states = [QueryState(q) for q in queries]
    report = Report(cfg, [])
    for trace in corpus if corpus is not None else explore(cfg):
        report.traces += 1
        report.outcomes[trace.outcome.status] += 1
        for st in states:
            st.feed(trace)
        if states and all(st.done for st in states):
            break
    for st in states:
        row = ReportRow(st.q, st.verdict)
        if dump_dir is not None and st.verdict.trace is not None:
            row.counterexample_path = write_dump(dump_dir, st.verdict.trace)
        report.rows.append(row)
    return report


def write_dump(directory: str, trace: Trace) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{trace.digest()}.trace")
    if not os.path.exists(path):
        with open(path, "w") as fh:
            fh.write(trace.dump())
    return path


def render_report(r: Report, fmt: str = "text") -> str:
    if fmt == "structured":
        return _render_structured(r)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = [
        f"config: {r.config.to_json()}",
        f"traces explored: {r.traces}",
        "outcomes: " + ", ".join(f"{k}={v}" for k, v in sorted(r.outcomes.items())),
        CAVEAT,
        "",
        "Query ID | Query | Expected | Actual | Status",
    ]
    for row in r.rows:
        q = row.query
        exp = TOOL_SEMANTICS[q.expected]
        act = row.verdict.tool_semantics
        flag = "" if row.match else " MISMATCH"
        added = " [model-added]" if q.model_added else ""
        lines.append(
            f"{q.id}{added} | {q.text} | {exp} ({q.expected}) | {act} ({row.actual}) |"
            f"{' ok' if row.match else ''}{flag}"
        )
        if row.verdict.status == "Violated" and row.verdict.trace is not None:
            lines.append(f"    counterexample positions: {list(row.verdict.positions)}")
            if row.counterexample_path:
                lines.append(f"    trace: {row.counterexample_path}")
    lines.append("")
    lines.append(f"mismatches: {len(r.mismatches)} of {len(r.rows)}")
    return "\n".join(lines) + "\n"


def _render_structured(r: Report) -> str:
    records = []
    for row in r.rows:
        records.append({
            "id": row.query.id,
            "kind": row.query.kind,
            "expected": row.query.expected,
            "actual": row.actual,
            "tool_semantics": row.verdict.tool_semantics,
            "counterexample_path": row.counterexample_path,
            "model_added": row.query.model_added,
            "positions": list(row.verdict.positions),
        })
    doc = {
        "config": json.loads(r.config.to_json()),
        "traces": r.traces,
        "outcomes": dict(sorted(r.outcomes.items())),
        "caveat": CAVEAT,
        "queries": records,
        "mismatches": len(r.mismatches),
    }
    return json.dumps(doc, indent=2) + "\n"


def render_query_list(queries: Optional[list] = None) -> str:
    queries = list(REGISTRY.values()) if queries is None else queries
    lines = ["Query ID | Kind | Protocol | Expected | Model-added | Query"]
    for q in queries:
        lines.append(
            f"{q.id} | {q.kind} | {q.protocol} | {q.expected} ({TOOL_SEMANTICS[q.expected]})"
            f" | {'yes' if q.model_added else 'no'} | {q.text}"
        )
    return "\n".join(lines) + "\n"
