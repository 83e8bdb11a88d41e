"""Schnorr proofs, cookies, key derivations and Finished messages as terms.

Everything here is structural: a proof verifies when its private parts are
consistent with the claimed public key, not through any arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .names import AES_CMAC_PRF
from .terms import (
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


@dataclass(frozen=True)
class ZkpPair:
    public_key: Term
    proof: Term

    def as_term(self) -> Term:
        return tup(self.public_key, self.proof)

    @classmethod
    def from_term(cls, t: Term) -> Optional["ZkpPair"]:
        parts = untup(t, 2)
        if parts is None or parts[0].sort is not Sort.ELEMENT:
            return None
        return cls(*parts)


@dataclass(frozen=True)
class Cookie:
    value: Term


def derive_pskc(ssp: Term, othervars: Term) -> Term:
    if ssp.sort is not Sort.BITSTRING:
        raise SortError(f"passphrase must be a bitstring, got {ssp.sort.value}")
    return apply("pkdf2", [AES_CMAC_PRF, ssp, othervars])


def derive_ms(cr: Term, sr: Term, ssp: Term) -> Term:
    return apply("get_ms", [cr, sr, ssp])


def proof_context(random: Term, id_h: Term) -> Term:
    """Bitstring a proof is bound to (sender random and masked id)."""
    return tup(apply("random_to_bitstring", [random]), apply("ID_to_bitstring", [id_h]))


def zkp_prove(v: Term, x: Term, ctx: Term, base: Term) -> ZkpPair:
    signature = apply("sigr", [v, x, ctx])
    return ZkpPair(apply("exp", [base, x]), apply("zk", [v, x, signature]))


def zkp_verify(pair: ZkpPair, base: Term) -> bool:
    proof = pair.proof
    if not (isinstance(proof, App) and proof.ctor == "zk"):
        return False
    v, x, sig = proof.args
    if not (isinstance(sig, App) and sig.ctor == "sigr"):
        return False
    if sig.args[0] != v or sig.args[1] != x:
        return False
    if pair.public_key.sort is not Sort.ELEMENT:
        return False
    return pair.public_key == apply("exp", [base, x])


def _cookie_key(srid_h: Term) -> Term:
    return apply("ID_to_bitstring", [srid_h])


def cookie_make(cr: Term, srid_h: Term) -> Cookie:
    return Cookie(apply("ssign", [apply("random_to_bitstring", [cr]), _cookie_key(srid_h)]))


def cookie_verify(c: Cookie, cr: Term, srid_h: Optional[Term] = None) -> bool:
    """Check the client random embedded in a cookie.

    With ``srid_h`` the signature is opened under the masked server id;
    without it only the embedded random is compared.
    """
    v = c.value
    if srid_h is not None:
        body = reduce_destructor("open_sign", [v, _cookie_key(srid_h)])
    elif isinstance(v, App) and v.ctor == "ssign":
        body = v.args[0]
    else:
        body = FAIL
    if body is FAIL:
        return False
    got = reduce_destructor("un_random_to_bitstring", [body])
    return got is not FAIL and got == cr


def make_finished(id_h: Term, cr: Term, sr: Term, g: Term, session: Term) -> Term:
    if session.sort is not Sort.ELEMENT:
        raise SortError("session key must be an element")
    body = tup(apply("ID_to_bitstring", [id_h]), cr, sr, g)
    return apply("fin", [apply("ssign", [body, apply("element_to_key", [session])])])


def group_generator(pubkeys) -> Term:
    """Gx = gen_h(X1, X2, X3, X4)."""
    return apply("gen_h", list(pubkeys))


def derive_session_key(g: Term, local_secret: Term, peer_contrib: Term) -> Term:
    base, _ = exp_parts(g)
    if not (isinstance(base, App) and base.ctor == "gen_h"):
        raise ShapeError(f"{g} is not a gen_h group generator")
    peer_base, _ = exp_parts(peer_contrib)
    if peer_base != base:
        raise ShapeError(f"peer contribution {peer_contrib} is not a tower over {g}")
    return apply("exp", [peer_contrib, local_secret])
