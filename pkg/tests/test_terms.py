import random

import pytest
from hypothesis import given, settings, strategies as st

import termgen
from meshcop.names import sort_of
from meshcop.terms import (
    FAIL,
    ArityError,
    Const,
    Freshness,
    Name,
    ShapeError,
    Sort,
    SortError,
    TermSyntaxError,
    apply,
    equal_mod_theory,
    exp_parts,
    format_term,
    has_redex,
    make_name,
    normalize,
    parse_term,
    raw,
    reduce_destructor,
    tup,
    untup,
)

G1 = Const("G1", Sort.ELEMENT)
Gj1 = Const("Gj1", Sort.ELEMENT)
m = Const("m", Sort.BITSTRING)
k = Name("k", 0, Sort.KEY)
k2 = Name("k", 1, Sort.KEY)
x = Name("x", 0, Sort.SKEY)
y = Name("x", 1, Sort.SKEY)


def test_make_name_first_and_fresh():
    ctx = Freshness()
    a = make_name("cr", Sort.RANDOM, ctx)
    b = make_name("cr", Sort.RANDOM, ctx)
    assert a == Name("cr", 0, Sort.RANDOM)
    assert a != b and b.index == 1


def test_make_name_rejects_empty_label():
    with pytest.raises(ValueError):
        make_name("", Sort.RANDOM, Freshness())


def test_apply_checks_sorts_and_arity():
    with pytest.raises(SortError):
        apply("exp", [m, x])
    with pytest.raises(ArityError):
        apply("hash", [m, m])
    with pytest.raises(SortError):
        apply("pkdf2", [m, m, m])


def test_senc_is_normal():
    t = apply("senc", [m, k])
    assert t.text == "(senc m k#0)"
    assert normalize(t) == t


def test_exp_commutes_over_g1():
    a = apply("exp", [apply("exp", [G1, x]), y])
    b = apply("exp", [apply("exp", [G1, y]), x])
    assert a == b
    assert exp_parts(a) == (G1, (x, y))


def test_exp_commutes_over_gen_h():
    pubs = [apply("exp", [G1, Name("x", i, Sort.SKEY)]) for i in range(2, 6)]
    g = apply("gen_h", pubs)
    a = raw("exp", raw("exp", g, x), y)
    b = raw("exp", raw("exp", g, y), x)
    assert equal_mod_theory(a, b)


def test_exp_over_distinct_bases_differs():
    assert apply("exp", [G1, x]) != apply("exp", [Gj1, x])


def test_exp_parts_rejects_non_tower():
    with pytest.raises(ShapeError):
        exp_parts(apply("key_to_element", [k]))


def test_pskc_shape():
    psk = apply("pkdf2", [Const("AES_CMAC_PRF", Sort.PRF), Const("sspcommissioner", Sort.BITSTRING),
                          Const("OTHERVARS", Sort.BITSTRING)])
    assert psk.sort is Sort.KEY
    assert psk.text == "(pkdf2 AES_CMAC_PRF sspcommissioner OTHERVARS)"


def test_destructors():
    assert reduce_destructor("sdec", [apply("senc", [m, k]), k]) == m
    assert reduce_destructor("sdec", [apply("senc", [m, k]), k2]) is FAIL
    assert reduce_destructor("sdec", [m, k]) is FAIL
    assert reduce_destructor("proj1", [FAIL]) is FAIL
    assert normalize(raw("sdec", raw("senc", m, k), k)) == m


def test_fail_propagates_through_normalize():
    assert normalize(raw("pair", raw("sdec", apply("senc", [m, k]), k2), m)) is FAIL


def test_open_sign_round_trip_fifty_pairs():
    rng = random.Random(50)
    for _ in range(50):
        payload = termgen.normalize(termgen.random_term(rng))
        key = termgen.normalize(termgen.gen(rng, Sort.KEY))
        assert reduce_destructor("open_sign", [apply("ssign", [payload, key]), key]) == payload


def test_tuples():
    t = tup(m, k, x)
    assert untup(t, 3) == (m, k, x)
    assert untup(t, 2) == (m, apply("pair", [k, x]))
    assert untup(m, 2) is None
    assert tup(m) == m


def test_senc_keys_matter():
    assert not equal_mod_theory(apply("senc", [m, k]), apply("senc", [m, k2]))


def test_parse_round_trip():
    t = apply("senc", [tup(Name("cr", 3, Sort.RANDOM), m),
                       apply("pkdf2", [Const("AES_CMAC_PRF", Sort.PRF),
                                       Const("sspcommissioner", Sort.BITSTRING),
                                       Const("OTHERVARS", Sort.BITSTRING)])])
    assert parse_term(format_term(t), sort_of) == t


def test_parse_normalizes_and_rejects_garbage():
    assert parse_term("(proj1 (pair m n))", lambda _: Sort.BITSTRING) == m
    for bad in ["", "(", "(frob m)", "(pair m", "m n", ")", "x#y", "fail"]:
        with pytest.raises(TermSyntaxError):
            parse_term(bad, sort_of)


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_normalize_idempotent(rng):
    assert termgen.prop_idempotent(termgen.random_term(rng)) is None


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_equal_mod_theory_is_congruence(rng):
    assert termgen.prop_congruence(rng, termgen.random_term(rng)) is None


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_destructor_round_trips(rng):
    assert termgen.prop_roundtrip(rng, termgen.random_term(rng)) is None


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_commutation_equations(rng):
    assert termgen.prop_commutation(rng) is None


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_text_syntax_round_trip(rng):
    t = normalize(termgen.random_term(rng))
    if t is FAIL:
        return
    sorts = {a.label if hasattr(a, "label") else a.text: a.sort for a in t.subterms()
             if not hasattr(a, "ctor")}
    assert parse_term(t.text, lambda lab: sorts[lab]) == t
    assert not has_redex(t)
