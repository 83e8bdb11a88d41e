"""Sorted symbolic term language with a canonical normal form.

Terms are immutable and hashable.  Every term handed out by :func:`apply`,
:func:`normalize` or :func:`parse_term` is already in normal form, so equality
modulo the equational theory is plain ``==`` on those values.

The only equations are exponent swaps over generator-shaped bases (``G1``,
``Gj1`` and any ``gen_h`` application).  They are handled by flattening an
exponent tower into ``(exp base e1 e2 ...)`` with the exponents sorted by
their printed form.
"""
from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union


class Sort(enum.Enum):
    BITSTRING = "bitstring"
    KEY = "key"
    ELEMENT = "element"
    RANDOM = "random"
    ID = "id"
    SKEY = "skey"
    PKEY = "pkey"
    PRF = "prf"


class SortError(TypeError):
    pass


class ArityError(TypeError):
    pass


class ShapeError(ValueError):
    pass


class TermSyntaxError(ValueError):
    pass


class Term:
    """Base class for closed terms."""

    __slots__ = ("sort", "_hash", "_text")

    def __repr__(self) -> str:
        return self._text

    def __str__(self) -> str:
        return self._text

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "Term") -> bool:
        return self._text < other._text

    @property
    def text(self) -> str:
        return self._text

    def size(self) -> int:
        return 1

    def subterms(self) -> Iterator["Term"]:
        yield self


class Name(Term):
    """A restricted (fresh) name: ``label#index``."""

    __slots__ = ("label", "index")

    def __init__(self, label: str, index: int, sort: Sort):
        self.label = label
        self.index = index
        self.sort = sort
        self._text = f"{label}#{index}"
        self._hash = hash(("N", label, index))

    def __eq__(self, other):
        return (
            isinstance(other, Name)
            and self.index == other.index
            and self.label == other.label
        )

    __hash__ = Term.__hash__


class Const(Term):
    """A free name / public or private constant."""

    __slots__ = ("label",)

    def __init__(self, label: str, sort: Sort):
        self.label = label
        self.sort = sort
        self._text = label
        self._hash = hash(("C", label))

    def __eq__(self, other):
        return isinstance(other, Const) and self.label == other.label

    __hash__ = Term.__hash__


class App(Term):
    """Constructor application.  Build through :func:`apply`, not directly."""

    __slots__ = ("ctor", "args", "_size")

    def __init__(self, ctor: str, args: tuple, sort: Sort):
        self.ctor = ctor
        self.args = args
        self.sort = sort
        self._text = "(" + " ".join([ctor] + [a._text for a in args]) + ")"
        self._hash = hash(self._text)
        self._size = 1 + sum(a.size() for a in args)

    def __eq__(self, other):
        if self is other:
            return True
        return (
            isinstance(other, App)
            and self._hash == other._hash
            and self._text == other._text
        )

    __hash__ = Term.__hash__

    def size(self) -> int:
        return self._size

    def subterms(self) -> Iterator[Term]:
        yield self
        for a in self.args:
            yield from a.subterms()


class _Fail:
    """Result of a failed destructor application (a value, not an error)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "fail"

    def __bool__(self):
        return False


FAIL = _Fail()
MaybeTerm = Union[Term, _Fail]


# --------------------------------------------------------------------------
# Signature

@dataclass(frozen=True)
class CtorSpec:
    name: str
    arg_sorts: tuple  # Sort or None (any sort accepted)
    result: Sort
    public: bool = True
    data: bool = False  # invertible by anybody (tuples, type converters)

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)


B, K, E, R, I, S, P = (
    Sort.BITSTRING, Sort.KEY, Sort.ELEMENT, Sort.RANDOM, Sort.ID, Sort.SKEY, Sort.PRF,
)

CONSTRUCTORS: dict[str, CtorSpec] = {
    c.name: c
    for c in [
        CtorSpec("senc", (None, None), B),
        CtorSpec("ssign", (None, None), B),
        CtorSpec("exp", (E, S), E),
        CtorSpec("gen_h", (E, E, E, E), E),
        CtorSpec("hash", (None,), I),
        CtorSpec("pkdf2", (P, B, B), K),
        CtorSpec("get_ms", (R, R, B), K),
        CtorSpec("xx", (S, K), K),
        CtorSpec("zk", (S, S, B), B, public=False),
        CtorSpec("sigr", (S, S, B), B, public=False),
        CtorSpec("fin", (B,), B),
        CtorSpec("pair", (None, None), B, data=True),
        CtorSpec("element_to_key", (E,), K, data=True),
        CtorSpec("key_to_element", (K,), E, data=True),
        CtorSpec("ID_to_bitstring", (I,), B, data=True),
        CtorSpec("random_to_bitstring", (R,), B, data=True),
    ]
}

CONVERTERS = ("element_to_key", "key_to_element", "ID_to_bitstring", "random_to_bitstring")

# destructor id -> (arity, constructor it inverts)
DESTRUCTORS: dict[str, tuple[int, str]] = {
    "sdec": (2, "senc"),
    "open_sign": (2, "ssign"),
    "proj1": (1, "pair"),
    "proj2": (1, "pair"),
    **{f"un_{c}": (1, c) for c in CONVERTERS},
}

GENERATOR_LABELS = frozenset({"G1", "Gj1"})


def is_generator(t: Term) -> bool:
    """Bases over which exponents commute."""
    if isinstance(t, Const):
        return t.label in GENERATOR_LABELS
    return isinstance(t, App) and t.ctor == "gen_h"


def is_flat_exp(t: Term) -> bool:
    return isinstance(t, App) and t.ctor == "exp" and is_generator(t.args[0])


def exp_parts(t: Term) -> tuple[Term, tuple]:
    """Split an element into (generator base, exponent multiset).

    Generators come back with an empty multiset.  Raises ShapeError for
    elements that are not towers over a generator.
    """
    if is_generator(t):
        return t, ()
    if is_flat_exp(t):
        return t.args[0], t.args[1:]
    raise ShapeError(f"{t} is not an exponent tower over a generator")


# --------------------------------------------------------------------------
# Construction and normalization

def _check_sorts(ctor: str, args: Sequence[Term]) -> CtorSpec:
    spec = CONSTRUCTORS.get(ctor)
    if spec is None:
        raise KeyError(f"unknown constructor {ctor!r}")
    if len(args) != spec.arity:
        raise ArityError(f"{ctor} expects {spec.arity} args, got {len(args)}")
    for pos, (want, arg) in enumerate(zip(spec.arg_sorts, args)):
        if not isinstance(arg, Term):
            raise SortError(f"{ctor} arg {pos} is not a term: {arg!r}")
        if want is not None and arg.sort is not want:
            raise SortError(
                f"{ctor} arg {pos} must be {want.value}, got {arg.sort.value} ({arg})"
            )
    return spec


def _mk_exp(base: Term, exps: Iterable[Term]) -> Term:
    exps = tuple(sorted(exps, key=lambda e: e._text))
    if not exps:
        return base
    return App("exp", (base,) + exps, Sort.ELEMENT)


def _build(ctor: str, args: tuple) -> Term:
    """Assemble an application whose arguments are already normal."""
    if ctor == "exp":
        base, e = args
        if is_generator(base):
            return _mk_exp(base, (e,))
        if is_flat_exp(base):
            return _mk_exp(base.args[0], base.args[1:] + (e,))
        return App("exp", (base, e), Sort.ELEMENT)
    return App(ctor, args, CONSTRUCTORS[ctor].result)


def apply(ctor: str, args: Sequence[Term]) -> Term:
    """Sort-checked constructor application, returned in normal form."""
    args = tuple(args)
    _check_sorts(ctor, args)
    return _build(ctor, args)


def reduce_destructor(rule: str, args: Sequence[Term]) -> MaybeTerm:
    if rule not in DESTRUCTORS:
        raise KeyError(f"unknown destructor {rule!r}")
    arity, inverts = DESTRUCTORS[rule]
    if len(args) != arity:
        raise ArityError(f"{rule} expects {arity} args, got {len(args)}")
    if any(a is FAIL for a in args):
        return FAIL
    src = args[0]
    if not (isinstance(src, App) and src.ctor == inverts):
        return FAIL
    if rule in ("sdec", "open_sign"):
        return src.args[0] if src.args[1] == args[1] else FAIL
    if rule == "proj2":
        return src.args[1]
    return src.args[0]


def normalize(t) -> MaybeTerm:
    """Canonical form of a possibly non-normal term tree.

    Accepts raw ``App`` nodes (including destructor applications, e.g. from
    parsed text) and rebuilds them bottom-up.
    """
    if t is FAIL:
        return FAIL
    if not isinstance(t, App):
        return t
    args = []
    for a in t.args:
        na = normalize(a)
        if na is FAIL:
            return FAIL
        args.append(na)
    if t.ctor in DESTRUCTORS:
        return reduce_destructor(t.ctor, args)
    if t.ctor == "exp" and len(args) > 2:
        base = args[0]
        if not is_generator(base) and not is_flat_exp(base):
            raise ShapeError(f"flattened exp over non-generator base {base}")
        out = base
        for e in args[1:]:
            out = _build("exp", (out, e))
        return out
    return _build(t.ctor, tuple(args))


def equal_mod_theory(a: Term, b: Term) -> bool:
    return normalize(a) == normalize(b)


def raw(ctor: str, *args: Term) -> App:
    """Unnormalized node, used to express destructor applications as data."""
    if ctor in DESTRUCTORS:
        return App(ctor, tuple(args), Sort.BITSTRING)
    return App(ctor, tuple(args), CONSTRUCTORS[ctor].result)


def has_redex(t: Term) -> bool:
    """True if a destructor node or an unflattened exponent tower remains."""
    for s in t.subterms():
        if isinstance(s, App):
            if s.ctor in DESTRUCTORS:
                return True
            if s.ctor == "exp" and len(s.args) == 2 and is_flat_exp(s.args[0]):
                return True
            if s.ctor == "exp" and len(s.args) > 2:
                exps = [e._text for e in s.args[1:]]
                if exps != sorted(exps):
                    return True
    return False


# --------------------------------------------------------------------------
# Tuples

def tup(*items: Term) -> Term:
    """Right-nested pair tuple; a single item is returned unchanged."""
    if not items:
        raise ArityError("empty tuple")
    out = items[-1]
    for it in reversed(items[:-1]):
        out = apply("pair", [it, out])
    return out


def untup(t: MaybeTerm, n: int) -> Optional[tuple]:
    """Inverse of :func:`tup` for an n-tuple; None when the shape is wrong."""
    if t is FAIL:
        return None
    items = []
    for _ in range(n - 1):
        if not (isinstance(t, App) and t.ctor == "pair"):
            return None
        items.append(t.args[0])
        t = t.args[1]
    items.append(t)
    return tuple(items)


# --------------------------------------------------------------------------
# Fresh names

class Freshness:
    """Per-scenario counter backing ``new a : T``."""

    def __init__(self, start: int = 0):
        self._counter = itertools.count(start)

    def next(self) -> int:
        return next(self._counter)


def make_name(label: str, sort: Sort, ctx: Freshness) -> Name:
    if not label:
        raise ValueError("name label must be nonempty")
    return Name(label, ctx.next(), sort)


# --------------------------------------------------------------------------
# Text syntax: (ctor arg ...), names as label#index, constants bare.

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def format_term(t: MaybeTerm) -> str:
    return "fail" if t is FAIL else t._text


def parse_term(text: str, sort_of: Callable[[str], Sort]) -> MaybeTerm:
    """Parse the s-expression syntax back into a normalized term.

    ``sort_of`` maps a name/constant label to its sort; the syntax does not
    carry sorts for atoms.
    """
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise TermSyntaxError("empty term")
    pos = 0

    def atom(tok: str) -> Term:
        if tok == "fail":
            raise TermSyntaxError("fail is not a term")
        if "#" in tok:
            label, _, idx = tok.rpartition("#")
            if not label or not idx.isdigit():
                raise TermSyntaxError(f"bad name token {tok!r}")
            return Name(label, int(idx), sort_of(label))
        return Const(tok, sort_of(tok))

    def node():
        nonlocal pos
        if pos >= len(tokens):
            raise TermSyntaxError("unexpected end of term")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            raise TermSyntaxError("unexpected ')'")
        if tok != "(":
            return atom(tok)
        if pos >= len(tokens):
            raise TermSyntaxError("unexpected end of term")
        ctor = tokens[pos]
        pos += 1
        if ctor not in CONSTRUCTORS and ctor not in DESTRUCTORS:
            raise TermSyntaxError(f"unknown function symbol {ctor!r}")
        args = []
        while True:
            if pos >= len(tokens):
                raise TermSyntaxError("missing ')'")
            if tokens[pos] == ")":
                pos += 1
                break
            args.append(node())
        if ctor in DESTRUCTORS:
            return raw(ctor, *args)
        if ctor == "exp" and len(args) > 2:
            return App("exp", tuple(args), Sort.ELEMENT)
        _check_sorts(ctor, args)
        return App(ctor, tuple(args), CONSTRUCTORS[ctor].result)

    t = node()
    if pos != len(tokens):
        raise TermSyntaxError(f"trailing tokens after term: {tokens[pos:]}")
    return normalize(t)
