"""Dolev-Yao attacker: knowledge base, saturation, derivation and forging."""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import crypto
from .crypto import ZkpPair
from .messages import KINDS, Envelope, schema_for
from .names import G1, PUBLIC_CONSTANTS, Gj1, masked
from .terms import (
    CONSTRUCTORS,
    CONVERTERS,
    FAIL,
    App,
    ShapeError,
    Sort,
    SortError,
    Term,
    apply,
    exp_parts,
    reduce_destructor,
    tup,
    untup,
)

FORGE_ONLY = frozenset({"zk", "sigr"})


@dataclass(frozen=True)
class Witness:
    """Derivation tree: how the attacker obtains ``term``."""

    how: str  # initial | observed | constructed | destructed
    term: Term
    rule: str = ""
    children: tuple = ()

    def replay(self) -> Term:
        if self.how in ("initial", "observed"):
            return self.term
        args = [c.replay() for c in self.children]
        if self.how == "constructed":
            return apply(self.rule, args)
        return reduce_destructor(self.rule, args)

    def nodes(self):
        yield self
        for c in self.children:
            yield from c.nodes()

    def render(self, indent: int = 0) -> str:
        pad = "  " * indent
        head = f"{pad}{self.how}"
        if self.rule:
            head += f" {self.rule}"
        lines = [f"{head}: {self.term.text}"]
        lines.extend(c.render(indent + 1) for c in self.children)
        return "\n".join(lines)


class UnderivableInjection(ValueError):
    pass


class KnowledgeBase:
    """Facts known to the attacker, closed under destructors."""

    def __init__(self, initial: Iterable[Term] = (), *, allow_forge: bool = False):
        self.allow_forge = allow_forge
        self.facts: set = set()
        self.witnesses: dict = {}
        self.locked: list = []  # senc/ssign facts whose key is not yet derivable
        self.records: list = []  # (kind, payload) in observation order
        self._memo: dict = {}
        for t in initial:
            self._add(t, Witness("initial", t))
        self.saturate()

    # -- copying and identity

    def copy(self) -> "KnowledgeBase":
        kb = KnowledgeBase.__new__(KnowledgeBase)
        kb.allow_forge = self.allow_forge
        kb.facts = set(self.facts)
        kb.witnesses = dict(self.witnesses)
        kb.locked = list(self.locked)
        kb.records = list(self.records)
        kb._memo = dict(self._memo)
        return kb

    def __contains__(self, t: Term) -> bool:
        return t in self.facts

    def __len__(self) -> int:
        return len(self.facts)

    def digest(self) -> str:
        return "\n".join(sorted(t.text for t in self.facts))

    # -- closure

    def _add(self, t: Term, w: Witness) -> bool:
        if t is FAIL or t in self.facts:
            return False
        self.facts.add(t)
        self.witnesses[t] = w
        self._memo = {}
        return True

    def observe_term(self, t: Term, kind: Optional[str] = None) -> None:
        self.records.append((kind, t))
        if self._add(t, Witness("observed", t)):
            self.saturate([t])

    def saturate(self, work: Optional[list] = None) -> None:
        if work is None:
            work = sorted(self.facts)
            self.locked = []
        while True:
            while work:
                t = work.pop()
                for rule, args, got in _destruct(t):
                    if self._add(got, Witness(
                        "destructed", got, rule, tuple(self.witnesses[a] for a in args)
                    )):
                        work.append(got)
                if isinstance(t, App) and t.ctor in ("senc", "ssign"):
                    self.locked.append(t)
            unlocked = []
            still = []
            for t in self.locked:
                key = t.args[1]
                if t.args[0] in self.facts:
                    continue
                w = self.can_derive(key)
                if w is None:
                    still.append(t)
                else:
                    rule = "sdec" if t.ctor == "senc" else "open_sign"
                    body = t.args[0]
                    if self._add(body, Witness(
                        "destructed", body, rule, (self.witnesses[t], w)
                    )):
                        unlocked.append(body)
            self.locked = still
            if not unlocked:
                return
            work = unlocked

    # -- derivation

    def applicable(self, ctor: str) -> bool:
        spec = CONSTRUCTORS[ctor]
        return spec.public or (self.allow_forge and ctor in FORGE_ONLY)

    def can_derive(self, goal: Term) -> Optional[Witness]:
        """Witness for ``goal`` or None.  ``goal`` must be normalized."""
        if goal is FAIL:
            return None
        if goal in self._memo:
            return self._memo[goal]
        self._memo[goal] = None  # cycle guard
        w = self._derive(goal)
        self._memo[goal] = w
        return w

    def derivable(self, goal: Term) -> bool:
        return self.can_derive(goal) is not None

    def _derive(self, goal: Term) -> Optional[Witness]:
        if goal in self.facts:
            return self.witnesses[goal]
        if not isinstance(goal, App) or not self.applicable(goal.ctor):
            return None
        if goal.ctor == "exp":
            return self._derive_tower(goal)
        kids = []
        for a in goal.args:
            w = self.can_derive(a)
            if w is None:
                return None
            kids.append(w)
        return Witness("constructed", goal, goal.ctor, tuple(kids))

    def _derive_tower(self, goal: Term) -> Optional[Witness]:
        try:
            base, exps = exp_parts(goal)
        except ShapeError:
            base, exps = goal.args[0], goal.args[1:]
        want = Counter(exps)
        starts = [(base, ())]
        for f in sorted(self.facts):
            if isinstance(f, App) and f.ctor == "exp" and f.args[0] == base:
                starts.append((f, f.args[1:]))
        for start, have in starts:
            have_c = Counter(have)
            if have_c - want:
                continue
            rest = sorted((want - have_c).elements())
            w = self.can_derive(start) if start is base else self.witnesses[start]
            if w is None:
                continue
            ok = True
            for e in rest:
                we = self.can_derive(e)
                if we is None:
                    ok = False
                    break
                w = Witness("constructed", apply("exp", [w.term, e]), "exp", (w, we))
            if ok and w.term == goal:
                return w
        return None


def _destruct(t: Term):
    """Key-free destructor steps applicable to ``t``."""
    if not isinstance(t, App):
        return
    if t.ctor == "pair":
        yield "proj1", (t,), t.args[0]
        yield "proj2", (t,), t.args[1]
    elif t.ctor in CONVERTERS:
        yield f"un_{t.ctor}", (t,), t.args[0]


def initial_knowledge(attacker_names: Iterable[Term], allow_forge: bool = False) -> KnowledgeBase:
    return KnowledgeBase(list(PUBLIC_CONSTANTS) + list(attacker_names), allow_forge=allow_forge)


def observe(kb: KnowledgeBase, e: Envelope) -> KnowledgeBase:
    out = kb.copy()
    out.observe_term(e.payload, e.kind)
    return out


def saturate(kb: KnowledgeBase) -> KnowledgeBase:
    out = kb.copy()
    out.saturate()
    return out


def can_derive(kb: KnowledgeBase, goal: Term) -> tuple[bool, Optional[Witness]]:
    w = kb.can_derive(goal)
    return w is not None, w


# --------------------------------------------------------------------------
# Injection menu

_ATTACKER_FIELDS = {
    "cr": "att_r", "sr": "att_r", "r3": "att_r", "nonce": "att_r", "addr": "att_ip",
}

_HELLO_KINDS = {
    "commissioner": ("C_M1", "C_M3"),
    "joiner": ("J_M1", "J_M2", "J_M3", "J_M7", "J_M8", "J_M9"),
}
_SHELLO_KINDS = {"commissioner": ("C_M4",), "joiner": ("J_M10", "J_M11", "J_M12")}
_CFIN_KINDS = {"commissioner": ("C_M5",), "joiner": ("J_M13", "J_M14", "J_M15")}


@dataclass
class Forger:
    """Builds candidate payloads for an injection.

    depth 0 replays payloads observed for the kind; depth 1 adds field-wise
    recombinations of observed fields and attacker values; depth 2 adds
    synthesized proofs and Finished messages.
    """

    kb: KnowledgeBase
    attacker: dict
    mutations: frozenset = frozenset()
    cap: int = 64
    _fields: Optional[dict] = field(default=None, repr=False)

    def field_records(self) -> list:
        """(kind, {field: value}) for every observed payload the attacker can open."""
        if self._fields is None:
            out = []
            for kind, payload in self.kb.records:
                if kind is None or kind not in KINDS:
                    continue
                wrapper, names = schema_for(kind, self.mutations)
                body = payload
                key = None
                if wrapper is not None:
                    ctor, _ = wrapper
                    if not (isinstance(payload, App) and payload.ctor == ctor):
                        continue
                    body, key = payload.args
                    if body not in self.kb.facts:
                        continue
                parts = untup(body, len(names))
                if parts is None:
                    continue
                rec = dict(zip(names, parts))
                if key is not None:
                    rec["__key__"] = key
                out.append((kind, rec))
            self._fields = out
        return self._fields

    def pools(self, protocol: str) -> dict:
        pools: dict = {}
        for kind, rec in self.field_records():
            if KINDS[kind].protocol != protocol:
                continue
            for name, value in rec.items():
                pool = pools.setdefault(name, [])
                if value not in pool:
                    pool.append(value)
        for name, label in _ATTACKER_FIELDS.items():
            pool = pools.setdefault(name, [])
            if self.attacker[label] not in pool:
                pool.append(self.attacker[label])
        return pools

    def replays(self, kind: str) -> list:
        out = []
        for k, payload in self.kb.records:
            if k == kind and payload not in out:
                out.append(payload)
        return out

    def candidates(self, kind: str, depth: int) -> list:
        out = list(self.replays(kind))
        if depth >= 1:
            for c in self._recombine(kind, depth):
                if c not in out:
                    out.append(c)
        return [c for c in out if self.kb.derivable(c)]

    def _recombine(self, kind: str, depth: int):
        protocol = KINDS[kind].protocol
        wrapper, names = schema_for(kind, self.mutations)
        pools = self.pools(protocol)
        if depth >= 2:
            extra = self._synthesized(protocol, set(names))
            for name, values in extra.items():
                pool = pools.setdefault(name, [])
                pool.extend(v for v in values if v not in pool)
        if any(not pools.get(n) for n in names):
            return
        keys = [None]
        if wrapper is not None:
            keys = pools.get("__key__", [])
        emitted = 0
        for combo in itertools.product(*(pools[n] for n in names)):
            try:
                body = tup(*combo)
            except (SortError, ShapeError):
                continue
            for key in keys:
                if wrapper is None:
                    yield body
                else:
                    try:
                        yield apply(wrapper[0], [body, key])
                    except SortError:
                        continue
                emitted += 1
                if emitted >= self.cap:
                    return

    # -- depth-2 synthesizers

    def _masked_ids(self) -> list:
        ids = [masked(c) for c in PUBLIC_CONSTANTS if c.sort is Sort.ID]
        ids.append(masked(self.attacker["att_ip"]))
        for f in sorted(self.kb.facts):
            if isinstance(f, App) and f.ctor == "hash" and f not in ids:
                ids.append(f)
        return ids

    def _forge(self, v: str, x: str, ctx: Term, base: Term) -> Optional[ZkpPair]:
        if not self.kb.allow_forge:
            return None
        return crypto.zkp_prove(self.attacker[v], self.attacker[x], ctx, base)

    def _synthesized(self, protocol: str, needed: set) -> dict:
        base = G1 if protocol == "commissioner" else Gj1
        att = self.attacker
        ctx = crypto.proof_context(att["att_r"], masked(att["att_ip"]))
        out: dict = {"proofs": [], "sproofs": [], "cfinish": [], "sfinish": []}
        recs = [(k, r) for k, r in self.field_records() if KINDS[k].protocol == protocol]
        hellos = [r for k, r in recs if k in _HELLO_KINDS[protocol]]
        shellos = [r for k, r in recs if k in _SHELLO_KINDS[protocol]]
        cfins = [r for k, r in recs if k in _CFIN_KINDS[protocol]]

        if "proofs" in needed:
            z1 = self._forge("att_v1", "att_x1", ctx, base)
            z2 = self._forge("att_v2", "att_x2", ctx, base)
            if z1 and z2:
                out["proofs"].append(tup(z1.as_term(), z2.as_term()))
        z3 = self._forge("att_v4", "att_x3", ctx, base)
        z4 = self._forge("att_v5", "att_x4", ctx, base)
        for h in hellos if "sproofs" in needed else ():
            pubs = _pubkeys(h["proofs"], 2)
            if pubs is None or not (z3 and z4):
                continue
            gx = crypto.group_generator(pubs + [z3.public_key, z4.public_key])
            zke = self._forge("att_v6", "att_x4", ctx, gx)
            item = tup(z3.as_term(), z4.as_term(), zke.as_term())
            if item not in out["sproofs"]:
                out["sproofs"].append(item)

        if not needed & {"cfinish", "sfinish"}:
            return out
        ids = self._masked_ids()
        for h, s in itertools.product(hellos, shellos):
            pubs = _pubkeys(h["proofs"], 2)
            sp = untup(s["sproofs"], 3)
            if pubs is None or sp is None:
                continue
            z3p, z4p, zkep = (ZkpPair.from_term(t) for t in sp)
            if None in (z3p, z4p, zkep):
                continue
            gx = crypto.group_generator(pubs + [z3p.public_key, z4p.public_key])
            if not crypto.zkp_verify(zkep, gx):
                continue
            cr, sr = h["cr"], s["sr"]
            # attacker as client: own key exchange against the server's
            ke = self._forge("att_v3", "att_x2", ctx, gx) if "cfinish" in needed else None
            if ke is not None:
                session = apply("exp", [zkep.public_key, att["att_x2"]])
                for idh in ids:
                    item = _client_finish(ke, cr, sr, idh, gx, session)
                    if item not in out["cfinish"]:
                        out["cfinish"].append(item)
            # attacker as server: it chose the exponent behind the ZKE key
            for xl in ("att_x3", "att_x4") if "sfinish" in needed else ():
                if zkep.public_key != apply("exp", [gx, att[xl]]):
                    continue
                for c in cfins:
                    kep = ZkpPair.from_term(untup(c["cfinish"], 3)[0]) if untup(
                        c["cfinish"], 3) else None
                    if kep is None:
                        continue
                    try:
                        session = apply("exp", [kep.public_key, att[xl]])
                    except SortError:
                        continue
                    for idh, sidh in itertools.product(ids, ids):
                        item = _server_finish(cr, sr, idh, sidh, gx, session)
                        if item not in out["sfinish"]:
                            out["sfinish"].append(item)
        return out


def _pubkeys(proofs: Term, n: int) -> Optional[list]:
    parts = untup(proofs, n)
    if parts is None:
        return None
    pairs = [ZkpPair.from_term(p) for p in parts]
    if any(p is None for p in pairs):
        return None
    return [p.public_key for p in pairs]


def _key(session: Term) -> Term:
    return apply("element_to_key", [session])


def _client_finish(ke: ZkpPair, cr, sr, idh, gx, session) -> Term:
    ccs = apply("ssign", [tup(cr, sr, idh), _key(session)])
    fin = crypto.make_finished(idh, cr, sr, gx, session)
    return tup(ke.as_term(), ccs, fin)


def _server_finish(cr, sr, client_idh, server_idh, gx, session) -> Term:
    sccs = apply("ssign", [tup(cr, sr, server_idh), _key(session)])
    return tup(sccs, crypto.make_finished(client_idh, cr, sr, gx, session))


def forge_candidates(
    kb: KnowledgeBase,
    kind: str,
    bound: int,
    attacker: dict,
    mutations=frozenset(),
    cap: int = 64,
) -> list:
    """Finite list of derivable payloads for ``kind`` up to forge depth ``bound``."""
    if bound < 0:
        raise ValueError("depth bound must be >= 0")
    return Forger(kb, attacker, frozenset(mutations), cap).candidates(kind, bound)


def uses_forged_zk(w: Witness) -> bool:
    return any(n.how == "constructed" and n.rule in FORGE_ONLY for n in w.nodes())
