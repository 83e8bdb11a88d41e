"""Seeded random generator of raw (unnormalized) sort-correct terms."""
import random

from meshcop.terms import (
    App,
    Const,
    FAIL,
    Name,
    Sort,
    apply,
    equal_mod_theory,
    exp_parts,
    has_redex,
    normalize,
    raw,
    reduce_destructor,
)

B, K, E, R, I, S, P = (
    Sort.BITSTRING, Sort.KEY, Sort.ELEMENT, Sort.RANDOM, Sort.ID, Sort.SKEY, Sort.PRF,
)

ATOMS = {
    B: [Const("m", B), Const("OTHERVARS", B), Name("b", 0, B), Name("b", 1, B)],
    K: [Const("kk", K), Name("k", 0, K), Name("k", 1, K)],
    E: [Const("G1", E), Const("Gj1", E)],
    R: [Name("r", 0, R), Name("r", 1, R)],
    I: [Const("ccli_id", I), Name("ip", 0, I)],
    S: [Name("x", i, S) for i in range(4)],
    P: [Const("AES_CMAC_PRF", P)],
}
ANY = [B, K, E, R, I, S]


def gen_generator(rng, depth):
    if depth <= 0 or rng.random() < 0.7:
        return rng.choice(ATOMS[E])
    return raw("gen_h", *(gen_tower(rng, depth - 1) for _ in range(4)))


def gen_tower(rng, depth):
    t = gen_generator(rng, depth - 1)
    for _ in range(rng.randint(0, 3)):
        t = raw("exp", t, rng.choice(ATOMS[S]))
    return t


def gen(rng: random.Random, sort: Sort, depth: int = 3):
    """Raw term of ``sort``; may contain destructor redexes and unsorted towers."""
    if depth <= 0 or rng.random() < 0.25:
        return rng.choice(ATOMS[sort])
    d = depth - 1
    if rng.random() < 0.15:
        # redex wrapping a term of the wanted sort
        inner = gen(rng, sort, d)
        choice = rng.randrange(3)
        if choice == 0:
            k = gen(rng, K, d)
            return raw("sdec", raw("senc", inner, k), k)
        if choice == 1:
            return raw("proj1", raw("pair", inner, gen(rng, rng.choice(ANY), d)))
        return raw("proj2", raw("pair", gen(rng, rng.choice(ANY), d), inner))
    if sort is B:
        c = rng.randrange(8)
        if c == 0:
            return raw("senc", gen(rng, rng.choice(ANY), d), gen(rng, K, d))
        if c == 1:
            return raw("ssign", gen(rng, rng.choice(ANY), d), gen(rng, K, d))
        if c == 2:
            return raw("pair", gen(rng, rng.choice(ANY), d), gen(rng, rng.choice(ANY), d))
        if c == 3:
            return raw("fin", gen(rng, B, d))
        if c == 4:
            return raw("ID_to_bitstring", gen(rng, I, d))
        if c == 5:
            return raw("random_to_bitstring", gen(rng, R, d))
        return raw(rng.choice(["zk", "sigr"]), gen(rng, S, d), gen(rng, S, d), gen(rng, B, d))
    if sort is K:
        c = rng.randrange(4)
        if c == 0:
            return raw("pkdf2", gen(rng, P, d), gen(rng, B, d), gen(rng, B, d))
        if c == 1:
            return raw("get_ms", gen(rng, R, d), gen(rng, R, d), gen(rng, B, d))
        if c == 2:
            return raw("xx", gen(rng, S, d), gen(rng, K, d))
        return raw("element_to_key", gen(rng, E, d))
    if sort is E:
        c = rng.randrange(3)
        if c == 0:
            return gen_tower(rng, depth)
        if c == 1:
            return raw("key_to_element", gen(rng, K, d))
        return raw("exp", gen_tower(rng, d), rng.choice(ATOMS[S]))
    if sort is I:
        return raw("hash", gen(rng, rng.choice(ANY), d))
    return rng.choice(ATOMS[sort])


def random_term(rng: random.Random, depth: int = 3):
    return gen(rng, rng.choice(ANY), depth)


def random_base(rng: random.Random):
    """G1, Gj1 or a gen_h application, normalized."""
    c = rng.randrange(3)
    if c == 0:
        return Const("G1", E)
    if c == 1:
        return Const("Gj1", E)
    return normalize(raw("gen_h", *(gen_tower(rng, 1) for _ in range(4))))


# -- properties; each returns None on success or a failure description

def prop_idempotent(t):
    n = normalize(t)
    if normalize(n) != n:
        return f"not idempotent: {t}"
    if has_redex(n):
        return f"redex left in {n}"
    return None


def _variant(rng, t):
    """A raw term equal to ``t`` modulo the theory but built differently."""
    n = normalize(t)
    if isinstance(n, App) and n.ctor == "exp" and len(n.args) > 2:
        base, exps = exp_parts(n)
        exps = list(exps)
        rng.shuffle(exps)
        out = base
        for e in exps:
            out = raw("exp", out, e)
        return out
    return raw("proj1", raw("pair", t, rng.choice(ATOMS[B])))


# one-hole contexts; ``s`` is the sort of the hole's normal form
_WRAPPERS = [
    lambda a, s, rng: raw("pair", a, rng.choice(ATOMS[B])),
    lambda a, s, rng: raw("pair", rng.choice(ATOMS[R]), a),
    lambda a, s, rng: raw("senc", a, rng.choice(ATOMS[K])),
    lambda a, s, rng: raw("ssign", rng.choice(ATOMS[B]), raw("element_to_key", a))
    if s is E else raw("ssign", a, rng.choice(ATOMS[K])),
    lambda a, s, rng: raw("hash", a),
]


def prop_congruence(rng, t):
    v = _variant(rng, t)
    if not equal_mod_theory(t, v):
        return f"variant not equal: {t} vs {v}"
    if not equal_mod_theory(v, t) or not equal_mod_theory(t, t):
        return "not symmetric/reflexive"
    w = _variant(rng, v)
    if not (equal_mod_theory(v, w) and equal_mod_theory(t, w)):
        return "not transitive"
    f = rng.choice(_WRAPPERS)
    sort = normalize(t).sort
    state = rng.getstate()
    a = f(t, sort, rng)
    rng.setstate(state)
    b = f(v, sort, rng)
    if not equal_mod_theory(a, b):
        return f"not a congruence for {t}"
    return None


def prop_roundtrip(rng, t):
    m = normalize(t)
    k1, k2 = rng.sample(ATOMS[K], 2)
    if reduce_destructor("sdec", [apply("senc", [m, k1]), k1]) != m:
        return "sdec(senc) failed"
    if reduce_destructor("open_sign", [apply("ssign", [m, k1]), k1]) != m:
        return "open_sign(ssign) failed"
    if reduce_destructor("sdec", [apply("senc", [m, k1]), k2]) is not FAIL:
        return "wrong key decrypted"
    if reduce_destructor("open_sign", [apply("ssign", [m, k1]), k2]) is not FAIL:
        return "wrong key opened"
    p = apply("pair", [m, k1])
    if reduce_destructor("proj1", [p]) != m or reduce_destructor("proj2", [p]) != k1:
        return "projection failed"
    conv = {E: "element_to_key", K: "key_to_element", I: "ID_to_bitstring",
            R: "random_to_bitstring"}.get(m.sort)
    if conv and reduce_destructor(f"un_{conv}", [apply(conv, [m])]) != m:
        return f"{conv} inverse failed"
    return None


def prop_commutation(rng):
    base = random_base(rng)
    x, y = rng.sample(ATOMS[S], 2)
    a = raw("exp", raw("exp", base, x), y)
    b = raw("exp", raw("exp", base, y), x)
    if not equal_mod_theory(a, b):
        return f"exp does not commute over {base}"
    if apply("exp", [apply("exp", [base, x]), y]) != apply("exp", [apply("exp", [base, y]), x]):
        return "apply does not commute"
    return None


def run_all(seed: int, count: int):
    """Check all algebra properties on ``count`` random terms; returns failures."""
    rng = random.Random(seed)
    failures = []
    for _ in range(count):
        t = random_term(rng)
        for res in (prop_idempotent(t), prop_congruence(rng, t), prop_roundtrip(rng, t),
                    prop_commutation(rng)):
            if res is not None:
                failures.append(res)
    return failures
