"""Deterministic state machines for the seven MeshCoP roles.

Each role is a linear script of phases.  ``role_step`` consumes the input the
current phase expects, checks it, and returns the new state together with
outgoing envelopes, events and marker leaks.  Failed checks produce a
:class:`Reject`, which halts the role for the rest of the session.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

from . import crypto
from .crypto import ZkpPair
from .messages import KINDS, Envelope, RoleId
from .names import FRESH_NAMES, G1, NONCE_OMITTED, OTHERVARS, Gj1, free, masked
from .terms import (
    FAIL,
    Const,
    Freshness,
    ShapeError,
    Sort,
    Term,
    apply,
    make_name,
    reduce_destructor,
    tup,
    untup,
)

MUTATIONS = frozenset(
    {"drop-noncea", "no-leader-encryption", "no-relay-encryption", "allow-zkp-forge"}
)

START = "START"

EVENT_ARITY = {
    "joinerrcvck": 1, "cclircvck": 1, "bsrvsntck": 1, "csrvsntck": 1,
    "bsrvssk": 2, "cclissk": 2, "csrvssk": 1, "joinerssk": 1,
    "bsrvbeg": 7, "bsrvfin": 7, "cclibeg": 7, "cclifin": 7,
    "csrvbeg": 6, "csrvfin": 6, "joinerbeg": 6, "joinerfin": 6,
    "eventdskjnr": 1, "eventdskcmm": 1,
    "rcvcommrsp": 3, "rcvcommkarsp": 3,
    "sntcommrsp": 6, "sntcommkarsp": 6,
    "leaderrep": 5, "leaderrepka": 5,
    "joinergtsnetcreds": 1, "evjrtrsendsnetcreds": 1,
    "msg_sent": 1, "msg_rcvd": 1,
}
CATALOG_EVENTS = tuple(t for t in EVENT_ARITY if not t.startswith("msg_"))


@dataclass(frozen=True)
class Event:
    tag: str
    args: tuple
    pos: int = -1

    def __post_init__(self):
        if EVENT_ARITY.get(self.tag) != len(self.args):
            raise ValueError(f"event {self.tag} takes {EVENT_ARITY.get(self.tag)} args")

    def __str__(self):
        return f"{self.tag}({', '.join(a.text for a in self.args)})"


def kind_const(kind: str) -> Const:
    return Const(kind, Sort.BITSTRING)


class MissingCredential(KeyError):
    pass


class UnexpectedInput(ValueError):
    pass


@dataclass(frozen=True)
class Reject:
    role: RoleId
    session: int
    reason: str


@dataclass
class RoleState:
    role: RoleId
    session: int
    phase: str
    memory: dict
    mutations: frozenset = frozenset()

    def copy(self) -> "RoleState":
        return replace(self, memory=dict(self.memory))

    def remember(self, label: str, value: Term) -> None:
        if label in self.memory and self.memory[label] != value:
            raise ValueError(f"{self.role.value}: memory slot {label!r} is write-once")
        self.memory[label] = value

    @property
    def done(self) -> bool:
        return self.phase == "Done"

    @property
    def expects(self) -> Optional[str]:
        return EXPECTS[self.role].get(self.phase)

    def signature(self) -> str:
        mem = ",".join(f"{k}={v.text}" for k, v in sorted(self.memory.items()))
        return f"{self.role.value}/{self.session}/{self.phase}/{mem}"


@dataclass
class StepResult:
    state: RoleState
    outgoing: list = field(default_factory=list)
    events: list = field(default_factory=list)
    leaks: list = field(default_factory=list)
    # ("send", Envelope) | ("event", Event) | ("leak", Term) in emission order
    log: list = field(default_factory=list)


# phase -> expected input kind
EXPECTS: dict[RoleId, dict[str, str]] = {
    RoleId.CCLI: {
        "Start": START, "AwaitCookie": "C_M2", "AwaitServerHello": "C_M4",
        "AwaitServerFinish": "C_M6", "AwaitPetRsp": "C_M10", "AwaitKaRsp": "C_M14",
    },
    RoleId.BSRV: {
        "AwaitHello": "C_M1", "AwaitCookieEcho": "C_M3", "AwaitClientFinish": "C_M5",
        "AwaitPetReq": "C_M7", "AwaitLeadPetRsp": "C_M9", "AwaitKaReq": "C_M11",
        "AwaitLeadKaRsp": "C_M13",
    },
    RoleId.LEADER: {"AwaitPetition": "C_M8", "AwaitKeepAlive": "C_M12"},
    RoleId.JOINER: {
        "Start": START, "AwaitCookie": "J_M6", "AwaitServerHello": "J_M12",
        "AwaitServerFinish": "J_M18", "AwaitEntrust": "J_M24",
    },
    RoleId.JRT_RELAY: {
        "AwaitM1": "J_M1", "AwaitM5": "J_M5", "AwaitM7": "J_M7", "AwaitM11": "J_M11",
        "AwaitM13": "J_M13", "AwaitM17": "J_M17", "AwaitM19": "J_M19",
        "AwaitFinRsp": "J_M23",
    },
    RoleId.BRT_RELAY: {
        "AwaitM2": "J_M2", "AwaitM4": "J_M4", "AwaitM8": "J_M8", "AwaitM10": "J_M10",
        "AwaitM14": "J_M14", "AwaitM16": "J_M16", "AwaitM20": "J_M20",
        "AwaitM22": "J_M22",
    },
    RoleId.CSRV: {
        "AwaitHello": "J_M3", "AwaitCookieEcho": "J_M9", "AwaitClientFinish": "J_M15",
        "AwaitFinReq": "J_M21",
    },
}

INITIAL_PHASE = {role: next(iter(phases)) for role, phases in EXPECTS.items()}

# credentials each role must be initialized with
CREDENTIALS = {
    RoleId.CCLI: ("sspcommissioner", "x1", "x2"),
    RoleId.BSRV: ("sspcommissioner", "secretborderandleader", "x3", "x4"),
    RoleId.LEADER: ("secretborderandleader",),
    RoleId.CSRV: ("sspjoiner", "scrtjtrcm", "xj3", "xj4"),
    RoleId.JOINER: ("sspjoiner", "xj1", "xj2"),
    RoleId.JRT_RELAY: ("scrtjtrcm",),
    RoleId.BRT_RELAY: (),
}

# further names a role uses; minted or defaulted when not supplied
_EXTRAS = {
    RoleId.CCLI: ("cr", "cr1", "v1", "v2", "v3", "clid_h", "srid_h"),
    RoleId.BSRV: ("sr", "noncea", "noncek", "v4", "v5", "v6", "clid_h", "srid_h", "srid"),
    RoleId.LEADER: ("comm_session", "srid"),
    RoleId.CSRV: ("srj", "vj4", "vj5", "vj6", "jnid_h", "csid_h", "kek", "netcreds"),
    RoleId.JOINER: ("crj", "vj1", "vj2", "vj3", "jnid_h", "csid_h", "joinerip", "kek"),
    RoleId.JRT_RELAY: (),
    RoleId.BRT_RELAY: (),
}

_DEFAULT_FREE = {
    "clid_h": lambda: masked(free("ccli_id")),
    "srid_h": lambda: masked(free("srid")),
    "srid": lambda: free("srid"),
    "jnid_h": lambda: masked(free("joiner_id")),
    "csid_h": lambda: masked(free("csrv_id")),
    "joinerip": lambda: free("joinerip"),
    "kek": lambda: free("kek"),
    "netcreds": lambda: free("netcreds"),
    "sspcommissioner": lambda: free("sspcommissioner"),
    "sspjoiner": lambda: free("sspjoiner"),
    "secretborderandleader": lambda: free("secretborderandleader"),
    "scrtjtrcm": lambda: free("scrtjtrcm"),
}


def secrets_for(role: RoleId, session_names: dict) -> dict:
    """Credential slice for ``role``: shared free names plus its session names."""
    out = {}
    for label in CREDENTIALS[RoleId(role)] + _EXTRAS[RoleId(role)]:
        if label in session_names:
            out[label] = session_names[label]
        elif label in _DEFAULT_FREE:
            out[label] = _DEFAULT_FREE[label]()
    return out


def init_role(
    role: RoleId,
    secrets: dict,
    session: int,
    *,
    mutations=frozenset(),
    ctx: Optional[Freshness] = None,
) -> RoleState:
    """Initial state of ``role`` holding its credentials.

    ``secrets`` maps labels to terms.  Every credential in CREDENTIALS must be
    present; other working names are taken from ``secrets`` when given and
    otherwise defaulted (free names) or minted from ``ctx`` (fresh names).
    """
    role = RoleId(role)
    missing = [c for c in CREDENTIALS[role] if c not in secrets]
    if missing:
        raise MissingCredential(f"{role.value} lacks {', '.join(missing)}")
    unknown = set(mutations) - MUTATIONS
    if unknown:
        raise ValueError(f"unknown mutations: {sorted(unknown)}")
    ctx = ctx or Freshness()
    memory = {}
    for label in CREDENTIALS[role] + _EXTRAS[role]:
        if label in secrets:
            memory[label] = secrets[label]
        elif label in _DEFAULT_FREE:
            memory[label] = _DEFAULT_FREE[label]()
        else:
            memory[label] = make_name(label, FRESH_NAMES[label], ctx)
    return RoleState(role, session, INITIAL_PHASE[role], memory, frozenset(mutations))


# --------------------------------------------------------------------------
# helpers

class _Fail(Exception):
    pass


def _need(cond: bool, reason: str) -> None:
    if not cond:
        raise _Fail(reason)


def _parts(t, n: int, what: str) -> tuple:
    got = untup(t, n)
    _need(got is not None, f"malformed {what}")
    return got


def _open(t, ctor: str, key: Term, what: str) -> Term:
    rule = "sdec" if ctor == "senc" else "open_sign"
    got = reduce_destructor(rule, [t, key])
    _need(got is not FAIL, f"cannot open {what}")
    return got


def _wrap(ctor: Optional[str], body: Term, key: Term) -> Term:
    return body if ctor is None else apply(ctor, [body, key])


def _unwrap(ctor: Optional[str], t: Term, key: Term, what: str) -> Term:
    return t if ctor is None else _open(t, ctor, key, what)


def _zkp(t: Term, base: Term, what: str) -> ZkpPair:
    pair = ZkpPair.from_term(t)
    _need(pair is not None, f"malformed proof in {what}")
    _need(crypto.zkp_verify(pair, base), f"proof rejected in {what}")
    return pair


def _idb(t: Term) -> Term:
    return apply("ID_to_bitstring", [t])


def _key(session_key: Term) -> Term:
    return apply("element_to_key", [session_key])


class _Out:
    def __init__(self, state: RoleState):
        self.state = state
        self.outgoing: list = []
        self.events: list = []
        self.leaks: list = []
        self.log: list = []

    def send(self, kind: str, payload: Term) -> None:
        env = Envelope(KINDS[kind].channel, kind, payload, self.state.session)
        self.outgoing.append(env)
        self.log.append(("send", env))
        self.event("msg_sent", kind_const(kind))

    def event(self, tag: str, *args: Term) -> None:
        ev = Event(tag, tuple(args))
        self.events.append(ev)
        self.log.append(("event", ev))

    def leak(self, marker: str, key: Term) -> None:
        t = apply("senc", [free(marker), key])
        self.leaks.append(t)
        self.log.append(("leak", t))

    def goto(self, phase: str) -> None:
        self.state.phase = phase

    def result(self) -> StepResult:
        return StepResult(self.state, self.outgoing, self.events, self.leaks, self.log)


# --------------------------------------------------------------------------
# Commissioner side

def _omit(state: RoleState, t: Term) -> Term:
    return NONCE_OMITTED if "drop-noncea" in state.mutations else t


def _leader_wrap(state: RoleState) -> Optional[str]:
    return None if "no-leader-encryption" in state.mutations else "senc"


def _hello_ctx(m: dict, rnd: str, idl: str) -> Term:
    return crypto.proof_context(m[rnd], m[idl])


def _ccli(s: RoleState, kind: str, p: Optional[Term], o: _Out) -> None:
    m = s.memory
    nonce_check = "drop-noncea" not in s.mutations
    if s.phase == "Start":
        ctx = _hello_ctx(m, "cr", "clid_h")
        z1 = crypto.zkp_prove(m["v1"], m["x1"], ctx, G1)
        z2 = crypto.zkp_prove(m["v2"], m["x2"], ctx, G1)
        s.remember("Z1", z1.as_term())
        s.remember("Z2", z2.as_term())
        o.send("C_M1", tup(m["cr"], z1.as_term(), z2.as_term()))
        o.goto("AwaitCookie")
    elif s.phase == "AwaitCookie":
        _need(crypto.cookie_verify(crypto.Cookie(p), m["cr"], m["srid_h"]), "cookie")
        o.event("cclircvck", p)
        s.remember("cookie", p)
        o.send("C_M3", tup(p, m["cr"], m["Z1"], m["Z2"]))
        o.goto("AwaitServerHello")
    elif s.phase == "AwaitServerHello":
        sr, z3t, z4t, zket = _parts(p, 4, "ServerHello")
        z3, z4 = _zkp(z3t, G1, "ServerHello"), _zkp(z4t, G1, "ServerHello")
        gx = crypto.group_generator([
            ZkpPair.from_term(m["Z1"]).public_key, ZkpPair.from_term(m["Z2"]).public_key,
            z3.public_key, z4.public_key,
        ])
        zke = _zkp(zket, gx, "ServerKeyExchange")
        _need(sr.sort is Sort.RANDOM, "server random sort")
        session = crypto.derive_session_key(gx, m["x2"], zke.public_key)
        pskc = crypto.derive_pskc(m["sspcommissioner"], OTHERVARS)
        for label, value in (("sr", sr), ("Gx", gx), ("session", session), ("pskc", pskc)):
            s.remember(label, value)
        o.event("cclissk", session, pskc)
        o.leak("secretpskc", pskc)
        o.leak("secret_sskc", _key(session))
        cke = crypto.zkp_prove(m["v3"], m["x2"], _hello_ctx(m, "cr", "clid_h"), gx)
        ccs = apply("ssign", [tup(m["cr"], sr, m["clid_h"]), _key(session)])
        fin = crypto.make_finished(m["clid_h"], m["cr"], sr, gx, session)
        s.remember("fin", fin)
        o.event("cclibeg", *_comm_fin_args(m))
        o.send("C_M5", tup(cke.as_term(), ccs, fin))
        o.goto("AwaitServerFinish")
    elif s.phase == "AwaitServerFinish":
        ccs, fin = _parts(p, 2, "server Finished")
        body = _open(ccs, "ssign", _key(m["session"]), "server ChangeCipherSpec")
        _need(body == tup(m["cr"], m["sr"], m["srid_h"]), "server ChangeCipherSpec")
        _need(fin == m["fin"], "server Finished mismatch")
        o.event("cclifin", *_comm_fin_args(m))
        body = tup(_omit(s, m["cr1"]), _omit(s, m["cr"]), m["clid_h"], free("commpetreq"))
        o.send("C_M7", apply("ssign", [body, m["pskc"]]))
        o.goto("AwaitPetRsp")
    elif s.phase == "AwaitPetRsp":
        body = _open(p, "ssign", m["pskc"], "COMM_PET.rsp")
        r3, crx, clid, res, cs, granted = _parts(body, 6, "COMM_PET.rsp")
        if nonce_check:
            _need(r3 == m["cr1"] and crx == m["cr"], "COMM_PET.rsp freshness")
        _need(clid == m["clid_h"] and res == free("commpetres"), "COMM_PET.rsp contents")
        _need(granted == free("Granted"), "petition not granted")
        s.remember("comm_session", cs)
        o.event("rcvcommrsp", r3, res, granted)
        body = tup(m["cr1"], m["cr"], m["clid_h"], free("commkareq"), cs)
        o.send("C_M11", apply("ssign", [body, m["pskc"]]))
        o.goto("AwaitKaRsp")
    elif s.phase == "AwaitKaRsp":
        body = _open(p, "ssign", m["pskc"], "COMM_KA.rsp")
        r3, crx, clid, res, cs, granted = _parts(body, 6, "COMM_KA.rsp")
        _need(r3 == m["cr1"] and crx == m["cr"], "COMM_KA.rsp freshness")
        _need(clid == m["clid_h"] and res == free("commkares"), "COMM_KA.rsp contents")
        _need(cs == m["comm_session"] and granted == free("Granted"), "COMM_KA.rsp session")
        o.event("rcvcommkarsp", r3, res, granted)
        o.goto("Done")


def _comm_fin_args(m: dict) -> tuple:
    return (
        m["sspcommissioner"], m["pskc"], m["cr"], m["sr"], m["Gx"],
        _idb(m["clid_h"]), _idb(m["srid_h"]),
    )


def _bsrv(s: RoleState, kind: str, p: Term, o: _Out) -> None:
    m = s.memory
    nonce_check = "drop-noncea" not in s.mutations
    sbl = m["secretborderandleader"]
    wrap = _leader_wrap(s)
    if s.phase == "AwaitHello":
        cr, z1t, z2t = _parts(p, 3, "ClientHello")
        _need(cr.sort is Sort.RANDOM, "client random sort")
        _zkp(z1t, G1, "ClientHello")
        _zkp(z2t, G1, "ClientHello")
        for label, value in (("cr", cr), ("Z1", z1t), ("Z2", z2t)):
            s.remember(label, value)
        cookie = crypto.cookie_make(cr, m["srid_h"]).value
        o.event("bsrvsntck", cookie)
        o.send("C_M2", cookie)
        o.goto("AwaitCookieEcho")
    elif s.phase == "AwaitCookieEcho":
        cookie, cr, z1t, z2t = _parts(p, 4, "ClientHello with cookie")
        _need(crypto.cookie_verify(crypto.Cookie(cookie), m["cr"], m["srid_h"]), "cookie")
        _need((cr, z1t, z2t) == (m["cr"], m["Z1"], m["Z2"]), "ClientHello changed")
        ctx = _hello_ctx(m, "sr", "srid_h")
        z3 = crypto.zkp_prove(m["v4"], m["x3"], ctx, G1)
        z4 = crypto.zkp_prove(m["v5"], m["x4"], ctx, G1)
        gx = crypto.group_generator([
            ZkpPair.from_term(z1t).public_key, ZkpPair.from_term(z2t).public_key,
            z3.public_key, z4.public_key,
        ])
        zke = crypto.zkp_prove(m["v6"], m["x4"], ctx, gx)
        s.remember("Gx", gx)
        o.send("C_M4", tup(m["sr"], z3.as_term(), z4.as_term(), zke.as_term()))
        o.goto("AwaitClientFinish")
    elif s.phase == "AwaitClientFinish":
        cket, ccs, fin = _parts(p, 3, "client Finished")
        cke = _zkp(cket, m["Gx"], "ClientKeyExchange")
        session = crypto.derive_session_key(m["Gx"], m["x4"], cke.public_key)
        pskc = crypto.derive_pskc(m["sspcommissioner"], OTHERVARS)
        s.remember("session", session)
        s.remember("pskc", pskc)
        o.event("bsrvssk", session, pskc)
        body = _open(ccs, "ssign", _key(session), "client ChangeCipherSpec")
        _need(body == tup(m["cr"], m["sr"], m["clid_h"]), "client ChangeCipherSpec")
        own = crypto.make_finished(m["clid_h"], m["cr"], m["sr"], m["Gx"], session)
        _need(fin == own, "client Finished mismatch")
        args = _comm_fin_args(m)
        o.event("bsrvfin", *args)
        o.event("bsrvbeg", *args)
        sccs = apply("ssign", [tup(m["cr"], m["sr"], m["srid_h"]), _key(session)])
        o.send("C_M6", tup(sccs, own))
        o.goto("AwaitPetReq")
    elif s.phase == "AwaitPetReq":
        body = _open(p, "ssign", m["pskc"], "COMM_PET.req")
        cr1, crx, clid, req = _parts(body, 4, "COMM_PET.req")
        if nonce_check:
            _need(crx == m["cr"], "COMM_PET.req not bound to this session")
        _need(clid == m["clid_h"] and req == free("commpetreq"), "COMM_PET.req contents")
        s.remember("cr1", cr1)
        body = tup(cr1, _omit(s, m["noncea"]), m["clid_h"], free("leadpetreq"))
        o.send("C_M8", _wrap(wrap, body, sbl))
        o.goto("AwaitLeadPetRsp")
    elif s.phase == "AwaitLeadPetRsp":
        body = _unwrap(wrap, p, sbl, "LEAD_PET.rsp")
        lrs, nn, sid, cs, granted = _parts(body, 5, "LEAD_PET.rsp")
        _need(nn == _omit(s, m["noncea"]), "LEAD_PET.rsp nonce")
        _need(lrs == free("leadpetres") and sid == m["srid"], "LEAD_PET.rsp contents")
        _need(granted == free("Granted"), "petition not granted")
        s.remember("comm_session", cs)
        o.event(
            "sntcommrsp", nn, m["cr1"], free("commpetres"), free("leadpetreq"), lrs, granted
        )
        body = tup(m["cr1"], _omit(s, m["cr"]), m["clid_h"], free("commpetres"), cs, granted)
        o.send("C_M10", apply("ssign", [body, m["pskc"]]))
        o.goto("AwaitKaReq")
    elif s.phase == "AwaitKaReq":
        body = _open(p, "ssign", m["pskc"], "COMM_KA.req")
        cr1, crx, clid, req, cs = _parts(body, 5, "COMM_KA.req")
        _need(crx == m["cr"], "COMM_KA.req not bound to this session")
        if nonce_check:
            _need(cr1 == m["cr1"], "COMM_KA.req petition random")
        _need(clid == m["clid_h"] and req == free("commkareq"), "COMM_KA.req contents")
        _need(cs == m["comm_session"], "COMM_KA.req commissioning session")
        s.remember("ka_cr1", cr1)
        body = tup(cr1, m["noncek"], m["clid_h"], free("leadkareq"), cs)
        o.send("C_M12", _wrap(wrap, body, sbl))
        o.goto("AwaitLeadKaRsp")
    elif s.phase == "AwaitLeadKaRsp":
        body = _unwrap(wrap, p, sbl, "LEAD_KA.rsp")
        lks, nk, sid, cs, granted = _parts(body, 5, "LEAD_KA.rsp")
        _need(nk == m["noncek"], "LEAD_KA.rsp nonce")
        _need(lks == free("leadkares") and sid == m["srid"], "LEAD_KA.rsp contents")
        _need(cs == m["comm_session"] and granted == free("Granted"), "LEAD_KA.rsp session")
        r3 = m["ka_cr1"]
        o.event("sntcommkarsp", nk, r3, free("commkares"), free("leadkareq"), lks, granted)
        body = tup(r3, m["cr"], m["clid_h"], free("commkares"), cs, granted)
        o.send("C_M14", apply("ssign", [body, m["pskc"]]))
        o.goto("Done")


def _leader(s: RoleState, kind: str, p: Term, o: _Out) -> None:
    m = s.memory
    sbl = m["secretborderandleader"]
    wrap = _leader_wrap(s)
    if s.phase == "AwaitPetition":
        body = _unwrap(wrap, p, sbl, "LEAD_PET.req")
        r3, nn, clid, lrq = _parts(body, 4, "LEAD_PET.req")
        _need(lrq == free("leadpetreq"), "LEAD_PET.req contents")
        o.event("leaderrep", r3, nn, m["srid"], lrq, free("leadpetres"))
        body = tup(free("leadpetres"), nn, m["srid"], m["comm_session"], free("Granted"))
        o.send("C_M9", _wrap(wrap, body, sbl))
        o.goto("AwaitKeepAlive")
    elif s.phase == "AwaitKeepAlive":
        body = _unwrap(wrap, p, sbl, "LEAD_KA.req")
        r3, nk, clid, lkq, cs = _parts(body, 5, "LEAD_KA.req")
        _need(lkq == free("leadkareq"), "LEAD_KA.req contents")
        _need(cs == m["comm_session"], "LEAD_KA.req commissioning session")
        o.event("leaderrepka", r3, nk, m["srid"], lkq, free("leadkares"))
        body = tup(free("leadkares"), nk, m["srid"], cs, free("Granted"))
        o.send("C_M13", _wrap(wrap, body, sbl))
        o.goto("Done")


# --------------------------------------------------------------------------
# Joiner side

def _join_fin_args(m: dict) -> tuple:
    return (
        m["dk"], m["crj"], m["srj"], m["Gjx"], _idb(m["jnid_h"]), _idb(m["csid_h"]),
    )


def _relay_wrap(s: RoleState) -> Optional[str]:
    return None if "no-relay-encryption" in s.mutations else "senc"


def _joiner(s: RoleState, kind: str, p: Optional[Term], o: _Out) -> None:
    m = s.memory
    if s.phase == "Start":
        ctx = _hello_ctx(m, "crj", "jnid_h")
        z1 = crypto.zkp_prove(m["vj1"], m["xj1"], ctx, Gj1)
        z2 = crypto.zkp_prove(m["vj2"], m["xj2"], ctx, Gj1)
        s.remember("Z1", z1.as_term())
        s.remember("Z2", z2.as_term())
        o.leak("sspjoiner_sec", crypto.derive_pskc(m["sspjoiner"], OTHERVARS))
        o.send("J_M1", tup(m["joinerip"], m["crj"], z1.as_term(), z2.as_term()))
        o.goto("AwaitCookie")
    elif s.phase == "AwaitCookie":
        _need(crypto.cookie_verify(crypto.Cookie(p), m["crj"], m["csid_h"]), "cookie")
        o.event("joinerrcvck", p)
        o.send("J_M7", tup(p, m["joinerip"], m["crj"], m["Z1"], m["Z2"]))
        o.goto("AwaitServerHello")
    elif s.phase == "AwaitServerHello":
        srj, z3t, z4t, zket = _parts(p, 4, "ServerHello")
        z3, z4 = _zkp(z3t, Gj1, "ServerHello"), _zkp(z4t, Gj1, "ServerHello")
        _need(srj.sort is Sort.RANDOM, "server random sort")
        gx = crypto.group_generator([
            ZkpPair.from_term(m["Z1"]).public_key, ZkpPair.from_term(m["Z2"]).public_key,
            z3.public_key, z4.public_key,
        ])
        zke = _zkp(zket, gx, "ServerKeyExchange")
        session = crypto.derive_session_key(gx, m["xj2"], zke.public_key)
        dk = crypto.derive_ms(m["crj"], srj, m["sspjoiner"])
        for label, value in (("srj", srj), ("Gjx", gx), ("session", session), ("dk", dk)):
            s.remember(label, value)
        o.event("eventdskjnr", dk)
        o.event("joinerssk", session)
        o.leak("secret_dkj", dk)
        o.leak("secret_sskj", _key(session))
        cke = crypto.zkp_prove(m["vj3"], m["xj2"], _hello_ctx(m, "crj", "jnid_h"), gx)
        ccs = apply("ssign", [tup(m["crj"], srj, m["jnid_h"]), _key(session)])
        fin = crypto.make_finished(m["jnid_h"], m["crj"], srj, gx, session)
        s.remember("fin", fin)
        o.event("joinerbeg", *_join_fin_args(m))
        o.send("J_M13", tup(cke.as_term(), ccs, fin))
        o.goto("AwaitServerFinish")
    elif s.phase == "AwaitServerFinish":
        ccs, fin = _parts(p, 2, "server Finished")
        body = _open(ccs, "ssign", _key(m["session"]), "server ChangeCipherSpec")
        _need(body == tup(m["crj"], m["srj"], m["csid_h"]), "server ChangeCipherSpec")
        _need(fin == m["fin"], "server Finished mismatch")
        o.event("joinerfin", *_join_fin_args(m))
        req = apply("senc", [free("join_fin_req"), m["dk"]])
        o.send("J_M19", tup(m["joinerip"], req))
        o.goto("AwaitEntrust")
    elif s.phase == "AwaitEntrust":
        creds = _open(p, "senc", m["kek"], "Joiner Entrust")
        o.event("joinergtsnetcreds", creds)
        o.goto("Done")


_JRT_FORWARD = {
    "AwaitM5": ("J_M6", "AwaitM7"),
    "AwaitM11": ("J_M12", "AwaitM13"),
    "AwaitM13": ("J_M14", "AwaitM17"),
    "AwaitM17": ("J_M18", "AwaitM19"),
}
_BRT_FORWARD = {
    "AwaitM2": ("J_M3", "AwaitM4"),
    "AwaitM4": ("J_M5", "AwaitM8"),
    "AwaitM8": ("J_M9", "AwaitM10"),
    "AwaitM10": ("J_M11", "AwaitM14"),
    "AwaitM14": ("J_M15", "AwaitM16"),
    "AwaitM16": ("J_M17", "AwaitM20"),
    "AwaitM20": ("J_M21", "AwaitM22"),
    "AwaitM22": ("J_M23", "Done"),
}


def _rehash_head(p: Term, n: int, at: int, what: str) -> tuple:
    items = list(_parts(p, n, what))
    _need(items[at].sort is Sort.ID, f"address in {what}")
    addr = items[at]
    items[at] = masked(addr)
    return addr, tup(*items)


def _jrt(s: RoleState, kind: str, p: Term, o: _Out) -> None:
    m = s.memory
    if s.phase in _JRT_FORWARD:
        out_kind, nxt = _JRT_FORWARD[s.phase]
        o.send(out_kind, p)
        o.goto(nxt)
    elif s.phase == "AwaitM1":
        addr, fwd = _rehash_head(p, 4, 0, "ClientHello")
        s.remember("iid", masked(addr))
        o.send("J_M2", fwd)
        o.goto("AwaitM5")
    elif s.phase == "AwaitM7":
        _, fwd = _rehash_head(p, 5, 1, "ClientHello with cookie")
        o.send("J_M8", fwd)
        o.goto("AwaitM11")
    elif s.phase == "AwaitM19":
        _, fwd = _rehash_head(p, 2, 0, "JOIN_FIN.req")
        o.send("J_M20", fwd)
        o.goto("AwaitFinRsp")
    elif s.phase == "AwaitFinRsp":
        body = _unwrap(_relay_wrap(s), p, m["scrtjtrcm"], "JOIN_FIN.rsp")
        iid, rsp, creds, kek = _parts(body, 4, "JOIN_FIN.rsp")
        _need(iid == m.get("iid"), "JOIN_FIN.rsp for another joiner")
        _need(kek.sort is Sort.KEY, "kek sort")
        o.event("evjrtrsendsnetcreds", creds)
        o.send("J_M24", apply("senc", [creds, kek]))
        o.goto("Done")


def _brt(s: RoleState, kind: str, p: Term, o: _Out) -> None:
    out_kind, nxt = _BRT_FORWARD[s.phase]
    o.send(out_kind, p)
    o.goto(nxt)


def _csrv(s: RoleState, kind: str, p: Term, o: _Out) -> None:
    m = s.memory
    if s.phase == "AwaitHello":
        iid, crj, z1t, z2t = _parts(p, 4, "ClientHello")
        _need(crj.sort is Sort.RANDOM, "client random sort")
        _zkp(z1t, Gj1, "ClientHello")
        _zkp(z2t, Gj1, "ClientHello")
        for label, value in (("iid", iid), ("crj", crj), ("Z1", z1t), ("Z2", z2t)):
            s.remember(label, value)
        cookie = crypto.cookie_make(crj, m["csid_h"]).value
        o.event("csrvsntck", cookie)
        o.send("J_M4", cookie)
        o.goto("AwaitCookieEcho")
    elif s.phase == "AwaitCookieEcho":
        cookie, iid, crj, z1t, z2t = _parts(p, 5, "ClientHello with cookie")
        _need(crypto.cookie_verify(crypto.Cookie(cookie), m["crj"], m["csid_h"]), "cookie")
        _need((iid, crj, z1t, z2t) == (m["iid"], m["crj"], m["Z1"], m["Z2"]),
              "ClientHello changed")
        ctx = _hello_ctx(m, "srj", "csid_h")
        z3 = crypto.zkp_prove(m["vj4"], m["xj3"], ctx, Gj1)
        z4 = crypto.zkp_prove(m["vj5"], m["xj4"], ctx, Gj1)
        gx = crypto.group_generator([
            ZkpPair.from_term(z1t).public_key, ZkpPair.from_term(z2t).public_key,
            z3.public_key, z4.public_key,
        ])
        zke = crypto.zkp_prove(m["vj6"], m["xj4"], ctx, gx)
        s.remember("Gjx", gx)
        o.send("J_M10", tup(m["srj"], z3.as_term(), z4.as_term(), zke.as_term()))
        o.goto("AwaitClientFinish")
    elif s.phase == "AwaitClientFinish":
        cket, ccs, fin = _parts(p, 3, "client Finished")
        cke = _zkp(cket, m["Gjx"], "ClientKeyExchange")
        dk = crypto.derive_ms(m["crj"], m["srj"], m["sspjoiner"])
        session = crypto.derive_session_key(m["Gjx"], m["xj4"], cke.public_key)
        s.remember("dk", dk)
        s.remember("session", session)
        o.event("eventdskcmm", dk)
        o.event("csrvssk", session)
        body = _open(ccs, "ssign", _key(session), "client ChangeCipherSpec")
        _need(body == tup(m["crj"], m["srj"], m["jnid_h"]), "client ChangeCipherSpec")
        own = crypto.make_finished(m["jnid_h"], m["crj"], m["srj"], m["Gjx"], session)
        _need(fin == own, "client Finished mismatch")
        args = _join_fin_args(m)
        o.event("csrvfin", *args)
        o.event("csrvbeg", *args)
        sccs = apply("ssign", [tup(m["crj"], m["srj"], m["csid_h"]), _key(session)])
        o.send("J_M16", tup(sccs, own))
        o.goto("AwaitFinReq")
    elif s.phase == "AwaitFinReq":
        iid, blob = _parts(p, 2, "JOIN_FIN.req")
        _need(iid == m["iid"], "JOIN_FIN.req from another joiner")
        req = _open(blob, "senc", m["dk"], "JOIN_FIN.req")
        _need(req == free("join_fin_req"), "JOIN_FIN.req contents")
        body = tup(iid, free("join_fin_rsp"), m["netcreds"], m["kek"])
        o.send("J_M22", _wrap(_relay_wrap(s), body, m["scrtjtrcm"]))
        o.goto("Done")


_HANDLERS: dict[RoleId, Callable] = {
    RoleId.CCLI: _ccli,
    RoleId.BSRV: _bsrv,
    RoleId.LEADER: _leader,
    RoleId.JOINER: _joiner,
    RoleId.JRT_RELAY: _jrt,
    RoleId.BRT_RELAY: _brt,
    RoleId.CSRV: _csrv,
}


def role_step(s: RoleState, inp: Union[Envelope, str]) -> Union[StepResult, Reject]:
    """Advance ``s`` by one input.  ``s`` itself is never mutated."""
    want = s.expects
    kind = START if inp == START else inp.kind
    if want is None or kind != want:
        raise UnexpectedInput(f"{s.role.value} in {s.phase} does not take {kind}")
    new = s.copy()
    out = _Out(new)
    payload = None if inp == START else inp.payload
    try:
        _HANDLERS[s.role](new, kind, payload, out)
    except (_Fail, ShapeError) as exc:
        return Reject(s.role, s.session, str(exc))
    if kind != START:
        ev = Event("msg_rcvd", (kind_const(kind),))
        out.events.insert(0, ev)
        out.log.insert(0, ("event", ev))
    return out.result()


def honest_script(protocol: str) -> list:
    """Attacker-free message order as (role, [(direction, kind), ...]) entries.

    ``full`` concatenates the commissioner and joiner scripts; the two flows
    share no roles, so any interleaving of them is equally honest.
    """
    from .messages import COMMISSIONER_KINDS, JOINER_KINDS, PROTOCOL_ROLES

    if protocol == "full":
        return honest_script("commissioner") + honest_script("joiner")
    kinds = {"commissioner": COMMISSIONER_KINDS, "joiner": JOINER_KINDS}.get(protocol)
    if kinds is None:
        raise ValueError(f"unknown protocol {protocol!r}")
    script = []
    for role in PROTOCOL_ROLES[protocol]:
        intents = []
        for kind in kinds:
            info = KINDS[kind]
            if info.sender is role:
                intents.append(("send", kind))
            if info.receiver is role:
                intents.append(("recv", kind))
        script.append((role, intents))
    return script
