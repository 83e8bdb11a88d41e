"""Channel fabric, attacker actions and bounded schedule exploration."""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass
from typing import Iterator, Optional

from .adversary import Forger, KnowledgeBase, UnderivableInjection, initial_knowledge
from .messages import (
    CHANNELS,
    INITIATORS,
    KINDS,
    MARKER_CHANNEL,
    PROTOCOL_ROLES,
    Envelope,
    RoleId,
)
from .names import NameCatalog, sort_of
from .roles import (
    MUTATIONS,
    START,
    Event,
    Reject,
    init_role,
    role_step,
    secrets_for,
)
from .terms import Term, parse_term

SCENARIOS = {
    "commissioner": ("commissioner",),
    "joiner": ("joiner",),
    "full": ("commissioner", "joiner"),
}
POLICIES = ("sequential", "interleaved")
RELAYS = frozenset({RoleId.JRT_RELAY, RoleId.BRT_RELAY})
LEAK_KIND = "leak"
_CHANNEL_RANK = {c: i for i, c in enumerate(CHANNELS)}


@dataclass(frozen=True)
class ExplorationConfig:
    scenario: str = "full"
    mode: str = "honest"
    sessions: int = 2
    depth_bound: int = 2
    schedule_bound: int = 3
    seeds: tuple = ()
    systematic: bool = True
    mutations: frozenset = frozenset()
    candidate_cap: int = 64

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.mode not in ("honest", "adversarial"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for name in ("sessions", "depth_bound", "schedule_bound", "candidate_cap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.sessions < 1:
            raise ValueError("sessions must be >= 1")
        object.__setattr__(self, "mutations", frozenset(self.mutations))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        unknown = self.mutations - MUTATIONS
        if unknown:
            raise ValueError(f"unknown mutations: {sorted(unknown)}")

    @property
    def protocols(self) -> tuple:
        return SCENARIOS[self.scenario]

    @property
    def attacker_enabled(self) -> bool:
        return self.mode == "adversarial"

    def to_json(self) -> str:
        d = asdict(self)
        d["mutations"] = sorted(self.mutations)
        d["seeds"] = list(self.seeds)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExplorationConfig":
        d = json.loads(text)
        d["mutations"] = frozenset(d["mutations"])
        d["seeds"] = tuple(d["seeds"])
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def with_(self, **kw) -> "ExplorationConfig":
        d = {**asdict(self), **kw}
        return ExplorationConfig(**d)


# --------------------------------------------------------------------------
# Attacker actions

@dataclass(frozen=True)
class Inject:
    at: int
    kind: str
    session: int
    payload: Term

    def to_json(self) -> dict:
        return {"action": "Inject", "at": self.at, "kind": self.kind,
                "session": self.session, "payload": self.payload.text}


@dataclass(frozen=True)
class Drop:
    at: int
    kind: str
    session: int

    def to_json(self) -> dict:
        return {"action": "Drop", "at": self.at, "kind": self.kind, "session": self.session}


@dataclass(frozen=True)
class Intercept:
    at: int
    kind: str
    session: int

    def to_json(self) -> dict:
        return {"action": "Intercept", "at": self.at, "kind": self.kind,
                "session": self.session}


@dataclass(frozen=True)
class Deliver:
    """Deliver a pending or held envelope now; with ``payload`` the attacker
    re-sends a copy it knows."""

    at: int
    kind: str
    session: int
    payload: Optional[Term] = None

    def to_json(self) -> dict:
        d = {"action": "Deliver", "at": self.at, "kind": self.kind, "session": self.session}
        if self.payload is not None:
            d["payload"] = self.payload.text
        return d


@dataclass(frozen=True)
class Replay:
    """Re-send the payload recorded at trace position ``index`` to ``session``."""

    at: int
    index: int
    session: int

    def to_json(self) -> dict:
        return {"action": "Replay", "at": self.at, "index": self.index,
                "session": self.session}


ACTION_TYPES = {c.__name__: c for c in (Inject, Drop, Intercept, Deliver, Replay)}


def action_from_json(d: dict):
    d = dict(d)
    cls = ACTION_TYPES[d.pop("action")]
    if "payload" in d:
        d["payload"] = parse_term(d["payload"], sort_of)
    return cls(**d)


@dataclass(frozen=True)
class Schedule:
    policy: str = "interleaved"
    actions: tuple = ()

    def to_json(self) -> str:
        return json.dumps(
            {"policy": self.policy, "actions": [a.to_json() for a in self.actions]},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        d = json.loads(text)
        return cls(d["policy"], tuple(action_from_json(a) for a in d["actions"]))

    def extend(self, action) -> "Schedule":
        return Schedule(self.policy, self.actions + (action,))


# --------------------------------------------------------------------------
# Trace records

@dataclass(frozen=True)
class EnvelopeStep:
    index: int
    envelope: Envelope

    def line(self) -> str:
        e = self.envelope
        return f"{self.index}|{e.channel}|{e.kind}|{e.payload.text}"


@dataclass(frozen=True)
class EventStep:
    index: int
    event: Event
    role: RoleId
    session: int

    def line(self) -> str:
        args = ", ".join(a.text for a in self.event.args)
        return f"{self.index}|@event|{self.event.tag}|{args}"


@dataclass(frozen=True)
class ActionStep:
    index: int
    action: str
    detail: str

    def line(self) -> str:
        return f"{self.index}|@attacker|{self.action}|{self.detail}"


@dataclass(frozen=True)
class Outcome:
    status: str  # Completed | Rejected | Exhausted
    role: str = ""
    reason: str = ""

    def __str__(self):
        if self.status == "Rejected":
            return f"Rejected({self.role}: {self.reason})"
        return self.status


@dataclass
class Trace:
    config: ExplorationConfig
    schedule: Schedule
    steps: list
    final_kb: KnowledgeBase
    outcome: Outcome
    catalog: NameCatalog

    def events(self) -> list:
        return [s.event for s in self.steps if isinstance(s, EventStep)]

    def envelopes(self) -> list:
        return [s.envelope for s in self.steps if isinstance(s, EnvelopeStep)]

    def tags(self) -> set:
        return {e.tag for e in self.events()}

    def dump(self) -> str:
        lines = [
            f"# config: {self.config.to_json()}",
            f"# digest: {self.config.digest()}",
            f"# schedule: {self.schedule.to_json()}",
        ]
        lines.extend(s.line() for s in self.steps)
        lines.append(f"# outcome: {self.outcome}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()[:16]


def parse_dump(text: str) -> tuple[ExplorationConfig, Schedule]:
    cfg = sched = None
    for line in text.splitlines():
        if line.startswith("# config: "):
            cfg = ExplorationConfig.from_json(line[len("# config: "):])
        elif line.startswith("# schedule: "):
            sched = Schedule.from_json(line[len("# schedule: "):])
    if cfg is None or sched is None:
        raise ValueError("not a trace dump: missing config or schedule header")
    return cfg, sched


# --------------------------------------------------------------------------
# Fabric

class Fabric:
    """Queues, role states and attacker knowledge for one schedule."""

    def __init__(self, cfg: ExplorationConfig, policy: str = "interleaved"):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.cfg = cfg
        self.policy = policy
        self.catalog = NameCatalog()
        self.roles: dict = {}
        self.halted: dict = {}
        self.queue: list = []  # (age, Envelope)
        self.held: list = []
        self.age = 0
        self.steps: list = []
        self.tick = 0
        self.spawned = 0
        self.schedule = Schedule(policy)
        self.first_reject: Optional[Outcome] = None
        self.changed: set = set()
        # name minting order is fixed so every run of a config sees the same names
        for s in range(1, cfg.sessions + 1):
            for p in cfg.protocols:
                self.catalog.session(p, s)
        self.attacker = self.catalog.attacker_names()
        self.kb = initial_knowledge(
            self.attacker.values(), allow_forge="allow-zkp-forge" in cfg.mutations
        )

    def clone(self) -> "Fabric":
        f = Fabric.__new__(Fabric)
        f.__dict__.update(self.__dict__)
        f.roles = dict(self.roles)
        f.halted = dict(self.halted)
        f.queue = list(self.queue)
        f.held = list(self.held)
        f.steps = list(self.steps)
        f.kb = self.kb.copy()
        f.changed = set(self.changed)
        return f

    # -- lifecycle

    def start(self) -> "Fabric":
        if self.policy == "interleaved":
            for _ in range(self.cfg.sessions):
                self._spawn()
        else:
            self._spawn()
        return self

    def _spawn(self) -> None:
        self.spawned += 1
        s = self.spawned
        for p in self.cfg.protocols:
            names = self.catalog.session(p, s)
            for role in PROTOCOL_ROLES[p]:
                st = init_role(role, secrets_for(role, names), s,
                               mutations=self.cfg.mutations, ctx=self.catalog.ctx)
                self.roles[(role, s)] = st
                self.changed.add((role, s))
        for p in self.cfg.protocols:
            self._step((INITIATORS[p], s), START)

    def _step(self, key, inp) -> bool:
        state = self.roles[key]
        res = role_step(state, inp)
        self.changed.add(key)
        if isinstance(res, Reject):
            self.halted[key] = res.reason
            self._record(ActionStep(len(self.steps), "Reject",
                                    f"{key[0].value}/{key[1]}: {res.reason}"))
            if self.first_reject is None:
                self.first_reject = Outcome("Rejected", f"{key[0].value}/{key[1]}", res.reason)
            return False
        self.roles[key] = res.state
        for what, item in res.log:
            if what == "send":
                self._emit(item)
            elif what == "event":
                self._record(EventStep(len(self.steps), Event(item.tag, item.args,
                                                              len(self.steps)), *key))
            else:
                env = Envelope(MARKER_CHANNEL, LEAK_KIND, item, key[1])
                self._record(EnvelopeStep(len(self.steps), env))
                self.kb.observe_term(item, None)
        return True

    def _emit(self, env: Envelope) -> None:
        self._record(EnvelopeStep(len(self.steps), env))
        self.kb.observe_term(env.payload, env.kind)
        self.queue.append((self.age, env))
        self.age += 1

    def _record(self, step) -> None:
        self.steps.append(step)

    # -- queries on state

    def live(self, key) -> bool:
        st = self.roles.get(key)
        return st is not None and key not in self.halted and not st.done

    def expecting(self, key, kind: str) -> bool:
        return self.live(key) and self.roles[key].expects == kind

    def _target(self, env: Envelope):
        return (KINDS[env.kind].receiver, env.session)

    def next_delivery(self) -> Optional[int]:
        best = None
        for i, (age, env) in enumerate(self.queue):
            if not self.expecting(self._target(env), env.kind):
                continue
            rank = (_CHANNEL_RANK[env.channel], age)
            if best is None or rank < best[0]:
                best = (rank, i)
        return None if best is None else best[1]

    def pending_for(self, key, kind: str) -> list:
        return [e.payload for _, e in self.queue if e.kind == kind and self._target(e) == key]

    # -- honest progress

    def advance(self) -> bool:
        """One honest delivery, or the next sequential spawn.  False when stuck."""
        self.changed = set()
        i = self.next_delivery()
        if i is not None:
            _, env = self.queue.pop(i)
            self._step(self._target(env), env)
        elif self.spawned < self.cfg.sessions:
            self._spawn()
        else:
            return False
        self.tick += 1
        return True

    def run_to_end(self) -> "Fabric":
        while self.advance():
            pass
        return self

    def outcome(self) -> Outcome:
        if self.first_reject is not None:
            return self.first_reject
        if self.spawned == self.cfg.sessions and all(s.done for s in self.roles.values()):
            return Outcome("Completed")
        return Outcome("Exhausted")

    def trace(self) -> Trace:
        return Trace(self.cfg, self.schedule, list(self.steps), self.kb, self.outcome(),
                     self.catalog)

    # -- attacker

    def apply_action(self, action) -> None:
        if not self.cfg.attacker_enabled:
            raise ValueError("honest mode forbids attacker actions")
        self.changed = set()
        self.schedule = self.schedule.extend(action)
        if isinstance(action, Inject):
            self._inject(action.kind, action.session, action.payload, "Inject")
        elif isinstance(action, Replay):
            step = self.steps[action.index]
            if not isinstance(step, EnvelopeStep) or step.envelope.kind == LEAK_KIND:
                raise ValueError(f"trace position {action.index} is not an envelope")
            env = step.envelope
            self._inject(env.kind, action.session, env.payload, "Replay")
        elif isinstance(action, (Drop, Intercept)):
            idx = self._find(self.queue, action.kind, action.session)
            if idx is None:
                raise ValueError(f"no pending {action.kind} for session {action.session}")
            _, env = self.queue.pop(idx)
            if isinstance(action, Intercept):
                self.held.append((self.age, env))
            self._record(ActionStep(len(self.steps), type(action).__name__,
                                    f"{env.kind}/{env.session}"))
        elif isinstance(action, Deliver):
            self._deliver(action)
        else:
            raise TypeError(f"unknown action {action!r}")

    def _find(self, pool, kind, session) -> Optional[int]:
        for i, (_, env) in enumerate(pool):
            if env.kind == kind and env.session == session:
                return i
        return None

    def _deliver(self, action: Deliver) -> None:
        if action.payload is not None:
            self._inject(action.kind, action.session, action.payload, "Deliver")
            return
        for pool in (self.held, self.queue):
            idx = self._find(pool, action.kind, action.session)
            if idx is not None:
                _, env = pool.pop(idx)
                self._record(ActionStep(len(self.steps), "Deliver",
                                        f"{env.kind}/{env.session}"))
                key = self._target(env)
                if self.expecting(key, env.kind):
                    self._step(key, env)
                return
        raise UnderivableInjection(f"no {action.kind} for session {action.session} to deliver")

    def _inject(self, kind: str, session: int, payload: Term, label: str) -> None:
        if not self.kb.derivable(payload):
            raise UnderivableInjection(f"{kind} payload is not derivable: {payload.text}")
        env = Envelope(KINDS[kind].channel, kind, payload, session)
        self._record(ActionStep(len(self.steps), label, f"{kind}/{session}"))
        self._record(EnvelopeStep(len(self.steps), env))
        self.kb.observe_term(payload, kind)
        key = self._target(env)
        if self.expecting(key, kind):
            self._step(key, env)

    def injection_targets(self, floor=None) -> list:
        """Live non-relay roles that just became blocked or are about to receive."""
        keys = set(self.changed)
        i = self.next_delivery()
        if i is not None:
            keys.add(self._target(self.queue[i][1]))
        out = []
        for key in sorted(keys, key=lambda k: (k[1], k[0].value)):
            if key[0] in RELAYS or not self.live(key):
                continue
            kind = self.roles[key].expects
            if kind in (None, START):
                continue
            if floor is not None and (key[1], key[0].value) < floor:
                continue
            out.append((key, kind))
        return out

    def accepted_candidates(self, key, kind: str) -> list:
        forger = Forger(self.kb, self.attacker, self.cfg.mutations, self.cfg.candidate_cap)
        pending = set(self.pending_for(key, kind))
        out = []
        state = self.roles[key]
        for payload in forger.candidates(kind, self.cfg.depth_bound):
            if payload in pending:
                continue
            res = role_step(state, Envelope(KINDS[kind].channel, kind, payload, key[1]))
            if not isinstance(res, Reject):
                out.append(payload)
        return out


def deliver(fab: Fabric, action) -> Fabric:
    """Pure wrapper: a copy of ``fab`` with ``action`` applied."""
    out = fab.clone()
    out.apply_action(action)
    return out


# --------------------------------------------------------------------------
# Running and exploring

def run_schedule(cfg: ExplorationConfig, schedule: Schedule) -> Trace:
    """Deterministically execute ``schedule``: actions fire before the honest
    delivery of the tick named by their ``at``."""
    fab = Fabric(cfg, schedule.policy).start()
    actions = sorted(enumerate(schedule.actions), key=lambda p: (p[1].at, p[0]))
    pos = 0
    while True:
        while pos < len(actions) and actions[pos][1].at <= fab.tick:
            fab.apply_action(actions[pos][1])
            pos += 1
        if not fab.advance():
            break
    while pos < len(actions):
        fab.apply_action(actions[pos][1])
        pos += 1
        fab.run_to_end()
    return fab.trace()


def _explore_systematic(cfg: ExplorationConfig) -> Iterator[Trace]:
    for policy in POLICIES:
        root = Fabric(cfg, policy).start()
        yield from _dfs(root, cfg.schedule_bound if cfg.attacker_enabled else 0, None)


def _dfs(fab: Fabric, budget: int, floor) -> Iterator[Trace]:
    # iterative along the honest spine, recursive on injections
    while True:
        if budget > 0:
            for key, kind in fab.injection_targets(floor):
                for payload in fab.accepted_candidates(key, kind):
                    child = fab.clone()
                    child.apply_action(Inject(fab.tick, kind, key[1], payload))
                    yield from _dfs(child, budget - 1, (key[1], key[0].value))
        floor = None
        if not fab.advance():
            yield fab.trace()
            return


def _explore_seeded(cfg: ExplorationConfig, seed: int, walks: int = 16) -> Iterator[Trace]:
    rng = random.Random(seed)
    for _ in range(walks):
        policy = rng.choice(POLICIES)
        fab = Fabric(cfg, policy).start()
        budget = cfg.schedule_bound if cfg.attacker_enabled else 0
        while True:
            if budget > 0 and rng.random() < 0.3:
                targets = fab.injection_targets()
                if targets:
                    key, kind = rng.choice(targets)
                    if rng.random() < 0.2 and fab.pending_for(key, kind):
                        fab.apply_action(Drop(fab.tick, kind, key[1]))
                        budget -= 1
                    else:
                        cands = fab.accepted_candidates(key, kind)
                        if cands:
                            fab.apply_action(Inject(fab.tick, kind, key[1], rng.choice(cands)))
                            budget -= 1
            if not fab.advance():
                break
        yield fab.trace()


def _sub_configs(cfg: ExplorationConfig) -> list:
    """The two protocols share no roles, names or channels, so adversarial
    exploration of ``full`` runs each protocol on its own; honest combined
    traces are kept so cross-protocol reachability is still witnessed."""
    if cfg.scenario != "full" or not cfg.attacker_enabled:
        return [cfg]
    return [cfg.with_(mode="honest"), cfg.with_(scenario="commissioner"),
            cfg.with_(scenario="joiner")]


def explore(cfg: ExplorationConfig) -> Iterator[Trace]:
    """Stream every trace of the bounded exploration in deterministic order."""
    for sub in _sub_configs(cfg):
        if sub.systematic or not sub.seeds:
            yield from _explore_systematic(sub)
        for seed in sub.seeds:
            yield from _explore_seeded(sub, seed)


def enumerate_schedules(cfg: ExplorationConfig) -> Iterator[Schedule]:
    if not (cfg.systematic or cfg.seeds):
        raise ValueError("need systematic mode or at least one seed")
    for t in explore(cfg):
        yield t.schedule


def replay_dump(text: str) -> Trace:
    cfg, sched = parse_dump(text)
    return run_schedule(cfg, sched)
