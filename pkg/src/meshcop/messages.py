"""Message catalog, channels and envelopes for both MeshCoP flows."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .terms import Term


class RoleId(str, enum.Enum):
    CCLI = "CCLI"
    BSRV = "BSRV"
    LEADER = "LEADER"
    CSRV = "CSRV"
    JOINER = "JOINER"
    JRT_RELAY = "JRT_RELAY"
    BRT_RELAY = "BRT_RELAY"


CHANNELS = ("ch", "chbtoc", "chBtoL", "chjtoc", "chrtob")
MARKER_CHANNEL = "temp"

PROTOCOL_ROLES = {
    "commissioner": (RoleId.CCLI, RoleId.BSRV, RoleId.LEADER),
    "joiner": (RoleId.JOINER, RoleId.JRT_RELAY, RoleId.BRT_RELAY, RoleId.CSRV),
}
INITIATORS = {"commissioner": RoleId.CCLI, "joiner": RoleId.JOINER}

C, L, BS = RoleId.CCLI, RoleId.LEADER, RoleId.BSRV
J, JR, BR, CS = RoleId.JOINER, RoleId.JRT_RELAY, RoleId.BRT_RELAY, RoleId.CSRV


@dataclass(frozen=True)
class KindInfo:
    name: str
    protocol: str
    sender: RoleId
    receiver: RoleId
    channel: str
    description: str


_KINDS = [
    ("C_M1", C, BS, "ch", "ClientHello"),
    ("C_M2", BS, C, "ch", "HelloVerifyRequest"),
    ("C_M3", C, BS, "ch", "ClientHello with cookie"),
    ("C_M4", BS, C, "ch", "ServerHello, ServerKeyExchange, ServerHelloDone"),
    ("C_M5", C, BS, "ch", "ClientKeyExchange, ChangeCipherSpec, Finished"),
    ("C_M6", BS, C, "ch", "ChangeCipherSpec, Finished"),
    ("C_M7", C, BS, "ch", "COMM_PET.req"),
    ("C_M8", BS, L, "chBtoL", "LEAD_PET.req"),
    ("C_M9", L, BS, "chBtoL", "LEAD_PET.rsp"),
    ("C_M10", BS, C, "ch", "COMM_PET.rsp"),
    ("C_M11", C, BS, "ch", "COMM_KA.req"),
    ("C_M12", BS, L, "chBtoL", "LEAD_KA.req"),
    ("C_M13", L, BS, "chBtoL", "LEAD_KA.rsp"),
    ("C_M14", BS, C, "ch", "COMM_KA.rsp"),
    ("J_M1", J, JR, "chjtoc", "ClientHello"),
    ("J_M2", JR, BR, "chrtob", "ClientHello relay"),
    ("J_M3", BR, CS, "chbtoc", "ClientHello relay"),
    ("J_M4", CS, BR, "chbtoc", "HelloVerifyRequest"),
    ("J_M5", BR, JR, "chrtob", "HelloVerifyRequest relay"),
    ("J_M6", JR, J, "chjtoc", "HelloVerifyRequest relay"),
    ("J_M7", J, JR, "chjtoc", "ClientHello with cookie"),
    ("J_M8", JR, BR, "chrtob", "ClientHello with cookie relay"),
    ("J_M9", BR, CS, "chbtoc", "ClientHello with cookie relay"),
    ("J_M10", CS, BR, "chbtoc", "ServerHello, ServerKeyExchange, ServerHelloDone"),
    ("J_M11", BR, JR, "chrtob", "ServerHello relay"),
    ("J_M12", JR, J, "chjtoc", "ServerHello relay"),
    ("J_M13", J, JR, "chjtoc", "ClientKeyExchange, ChangeCipherSpec, Finished"),
    ("J_M14", JR, BR, "chrtob", "ClientKeyExchange relay"),
    ("J_M15", BR, CS, "chbtoc", "ClientKeyExchange relay"),
    ("J_M16", CS, BR, "chbtoc", "ChangeCipherSpec, Finished"),
    ("J_M17", BR, JR, "chrtob", "ChangeCipherSpec relay"),
    ("J_M18", JR, J, "chjtoc", "ChangeCipherSpec relay"),
    ("J_M19", J, JR, "chjtoc", "JOIN_FIN.req"),
    ("J_M20", JR, BR, "chrtob", "JOIN_FIN.req relay"),
    ("J_M21", BR, CS, "chbtoc", "JOIN_FIN.req relay"),
    ("J_M22", CS, BR, "chbtoc", "JOIN_FIN.rsp"),
    ("J_M23", BR, JR, "chrtob", "JOIN_FIN.rsp relay"),
    ("J_M24", JR, J, "chjtoc", "Joiner Entrust"),
]

KINDS: dict[str, KindInfo] = {
    name: KindInfo(name, "commissioner" if name.startswith("C_") else "joiner", s, r, ch, d)
    for name, s, r, ch, d in _KINDS
}
COMMISSIONER_KINDS = tuple(k for k in KINDS if k.startswith("C_"))
JOINER_KINDS = tuple(k for k in KINDS if k.startswith("J_"))

# Field layout of each payload for recombination by the attacker.  Payloads
# are right-nested tuples, so the last field absorbs the remaining tail.
# wrapper: None (plain), or (constructor, key-label) for senc/ssign bodies.
_HELLO = ("cr", "proofs")
_ECHO = ("cookie", "cr", "proofs")
_JHELLO = ("addr", "cr", "proofs")
_JECHO = ("cookie", "addr", "cr", "proofs")
SCHEMAS: dict[str, tuple] = {
    "C_M1": (None, _HELLO),
    "C_M2": (None, ("cookie",)),
    "C_M3": (None, _ECHO),
    "C_M4": (None, ("sr", "sproofs")),
    "C_M5": (None, ("cfinish",)),
    "C_M6": (None, ("sfinish",)),
    "C_M7": (("ssign", "pskc"), ("r3", "cr", "clid", "req")),
    "C_M8": (("senc", "sbl"), ("r3", "nonce", "clid", "req")),
    "C_M9": (("senc", "sbl"), ("rsp", "nonce", "sid", "session", "grant")),
    "C_M10": (("ssign", "pskc"), ("r3", "cr", "clid", "rsp", "session", "grant")),
    "C_M11": (("ssign", "pskc"), ("r3", "cr", "clid", "req", "session")),
    "C_M12": (("senc", "sbl"), ("r3", "nonce", "clid", "req", "session")),
    "C_M13": (("senc", "sbl"), ("rsp", "nonce", "sid", "session", "grant")),
    "C_M14": (("ssign", "pskc"), ("r3", "cr", "clid", "rsp", "session", "grant")),
    "J_M1": (None, _JHELLO),
    "J_M2": (None, _JHELLO),
    "J_M3": (None, _JHELLO),
    "J_M4": (None, ("cookie",)),
    "J_M5": (None, ("cookie",)),
    "J_M6": (None, ("cookie",)),
    "J_M7": (None, _JECHO),
    "J_M8": (None, _JECHO),
    "J_M9": (None, _JECHO),
    "J_M10": (None, ("sr", "sproofs")),
    "J_M11": (None, ("sr", "sproofs")),
    "J_M12": (None, ("sr", "sproofs")),
    "J_M13": (None, ("cfinish",)),
    "J_M14": (None, ("cfinish",)),
    "J_M15": (None, ("cfinish",)),
    "J_M16": (None, ("sfinish",)),
    "J_M17": (None, ("sfinish",)),
    "J_M18": (None, ("sfinish",)),
    "J_M19": (None, ("addr", "blob")),
    "J_M20": (None, ("addr", "blob")),
    "J_M21": (None, ("addr", "blob")),
    "J_M22": (("senc", "scrtjtrcm"), ("addr", "rsp", "creds", "kek")),
    "J_M23": (("senc", "scrtjtrcm"), ("addr", "rsp", "creds", "kek")),
    "J_M24": (("senc", "kek"), ("creds",)),
}


@dataclass(frozen=True)
class Envelope:
    channel: str
    kind: str
    payload: Term
    session: int  # session the envelope is addressed to

    @property
    def receiver(self) -> RoleId:
        return KINDS[self.kind].receiver

    @property
    def protocol(self) -> str:
        return KINDS[self.kind].protocol


_LEADER_KINDS = frozenset({"C_M8", "C_M9", "C_M12", "C_M13"})
_RELAY_KINDS = frozenset({"J_M22", "J_M23"})


def schema_for(kind: str, mutations=frozenset()) -> tuple:
    """Payload schema of ``kind`` after applying encryption-removing mutations."""
    wrapper, fields = SCHEMAS[kind]
    if kind in _LEADER_KINDS and "no-leader-encryption" in mutations:
        wrapper = None
    if kind in _RELAY_KINDS and "no-relay-encryption" in mutations:
        wrapper = None
    return wrapper, fields
