"""Free names, per-session fresh names, and their sorts.

Free names are ``Const`` terms shared by every session of a scenario.  Fresh
names (randoms, private keys, nonces) are ``Name`` terms minted per session.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .terms import Const, Freshness, Name, Sort, Term, apply, make_name

B, K, E, R, I, S, P = (
    Sort.BITSTRING, Sort.KEY, Sort.ELEMENT, Sort.RANDOM, Sort.ID, Sort.SKEY, Sort.PRF,
)

# label -> (sort, private)
FREE_NAMES: dict[str, tuple[Sort, bool]] = {
    # public
    "G1": (E, False),
    "Gj1": (E, False),
    "AES_CMAC_PRF": (P, False),
    "OTHERVARS": (B, False),
    "ccli_id": (I, False),
    "joiner_id": (I, False),
    "joinerip": (I, False),
    "NONCE_OMITTED": (R, False),
    # credentials
    "sspcommissioner": (B, True),
    "sspjoiner": (B, True),
    "secretborderandleader": (K, True),
    "scrtjtrcm": (K, True),
    "srid": (I, True),
    "csrv_id": (I, True),
    # protected payload names
    "Granted": (B, True),
    "commpetreq": (B, True),
    "commpetres": (B, True),
    "commkareq": (B, True),
    "commkares": (B, True),
    "leadpetreq": (B, True),
    "leadpetres": (B, True),
    "leadkareq": (B, True),
    "leadkares": (B, True),
    "join_fin_req": (B, True),
    "join_fin_rsp": (B, True),
    "netcreds": (B, True),
    "kek": (K, True),
    # secrecy markers for derived keys
    "secretpskc": (B, True),
    "sspjoiner_sec": (B, True),
    "secret_dkj": (B, True),
    "secret_sskc": (B, True),
    "secret_sskj": (B, True),
}

# label -> sort for names minted per session
FRESH_NAMES: dict[str, Sort] = {
    "cr": R, "sr": R, "cr1": R, "crj": R, "srj": R,
    "noncea": R, "noncek": R,
    "comm_session": B,
    **{f"x{i}": S for i in range(1, 5)},
    **{f"xj{i}": S for i in range(1, 5)},
    **{f"v{i}": S for i in range(1, 7)},
    **{f"vj{i}": S for i in range(1, 7)},
    # attacker-owned
    "att_r": R, "att_ip": I, "att_k": K, "att_b": B,
    **{f"att_x{i}": S for i in range(1, 7)},
    **{f"att_v{i}": S for i in range(1, 7)},
}

PRIVATE_FRESH = frozenset(
    {"noncea", "noncek", "comm_session"}
    | {f"x{i}" for i in range(1, 5)}
    | {f"xj{i}" for i in range(1, 5)}
    | {f"v{i}" for i in range(1, 7)}
    | {f"vj{i}" for i in range(1, 7)}
)


def sort_of(label: str) -> Sort:
    """Sort lookup used when parsing trace text."""
    if label in FREE_NAMES:
        return FREE_NAMES[label][0]
    if label in FRESH_NAMES:
        return FRESH_NAMES[label]
    return Sort.BITSTRING


def free(label: str) -> Const:
    return Const(label, FREE_NAMES[label][0])


def is_private(t: Term) -> bool:
    if isinstance(t, Const):
        return FREE_NAMES.get(t.label, (None, False))[1]
    if isinstance(t, Name):
        return t.label in PRIVATE_FRESH
    return False


G1 = free("G1")
Gj1 = free("Gj1")
AES_CMAC_PRF = free("AES_CMAC_PRF")
OTHERVARS = free("OTHERVARS")
NONCE_OMITTED = free("NONCE_OMITTED")

PUBLIC_CONSTANTS = tuple(
    free(label) for label, (_, private) in FREE_NAMES.items() if not private
)


def masked(identity: Term) -> Term:
    """Masked identity, hash(id)."""
    return apply("hash", [identity])


@dataclass
class NameCatalog:
    """All names of one scenario instance.

    ``fresh`` keeps one dict per (protocol, session) so every session owns its
    randoms and key pairs while free names are shared.
    """

    ctx: Freshness = field(default_factory=Freshness)
    fresh: dict = field(default_factory=dict)
    attacker: dict = field(default_factory=dict)

    def session(self, protocol: str, index: int) -> dict:
        key = (protocol, index)
        if key not in self.fresh:
            labels = _SESSION_LABELS[protocol]
            self.fresh[key] = {
                lab: make_name(lab, FRESH_NAMES[lab], self.ctx) for lab in labels
            }
        return self.fresh[key]

    def attacker_names(self) -> dict:
        if not self.attacker:
            for lab in sorted(l for l in FRESH_NAMES if l.startswith("att_")):
                self.attacker[lab] = make_name(lab, FRESH_NAMES[lab], self.ctx)
        return self.attacker

    def all_names(self) -> list[Term]:
        out: list[Term] = [free(l) for l in FREE_NAMES]
        for key in sorted(self.fresh):
            out.extend(self.fresh[key].values())
        out.extend(self.attacker.values())
        return out


_SESSION_LABELS = {
    "commissioner": (
        ["cr", "sr", "cr1", "noncea", "noncek", "comm_session"]
        + [f"x{i}" for i in range(1, 5)]
        + [f"v{i}" for i in range(1, 7)]
    ),
    "joiner": (
        ["crj", "srj"]
        + [f"xj{i}" for i in range(1, 5)]
        + [f"vj{i}" for i in range(1, 7)]
    ),
}
