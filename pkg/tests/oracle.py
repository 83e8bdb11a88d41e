"""Brute-force correspondence checker over small synthetic event traces."""
import itertools

from meshcop.queries import Query, check_correspondence, pat
from meshcop.roles import Event
from meshcop.terms import Const, Sort

VALUES = [Const("a", Sort.BITSTRING), Const("b", Sort.BITSTRING)]
CONCL, PREM = "cclircvck", "bsrvsntck"

QUERIES = [
    Query("inj-same", "correspondence", "commissioner", "Holds",
          conclusion=pat(CONCL, "x"), premises=(pat(PREM, "x"),), injective=True),
    Query("same", "correspondence", "commissioner", "Holds",
          conclusion=pat(CONCL, "x"), premises=(pat(PREM, "x"),)),
    Query("inj-any", "correspondence", "commissioner", "Holds",
          conclusion=pat(CONCL, "x"), premises=(pat(PREM, "y"),), injective=True),
    Query("pair", "correspondence", "commissioner", "Holds",
          conclusion=pat(CONCL, "x"), premises=(pat(PREM, "x"), pat(PREM, "y"))),
]


def _fits(p, ev, binding):
    return p.match(ev, binding)


def brute_force(events, q) -> bool:
    """True iff some assignment of earlier premise events to every conclusion works."""
    concls = []
    for ev in events:
        b = _fits(q.conclusion, ev, {})
        if b is not None:
            concls.append((ev, b))
    per_concl = []
    for ev, b in concls:
        earlier = [e for e in events if e.pos < ev.pos]
        combos = []
        for chosen in itertools.product(earlier, repeat=len(q.premises)):
            bb = b
            for p, e in zip(q.premises, chosen):
                bb = _fits(p, e, bb) if bb is not None else None
            if bb is not None:
                combos.append(chosen)
        per_concl.append(combos)
    for assignment in itertools.product(*per_concl):
        if q.injective:
            firsts = [a[0].pos for a in assignment]
            if len(set(firsts)) != len(firsts):
                continue
        return True
    return not concls


def synthetic_traces(max_len: int = 5, max_candidates: int = 3):
    """Every trace of <= max_len conclusion/premise events over two values in
    which no conclusion has more than ``max_candidates`` earlier premises."""
    letters = [(t, v) for t in (CONCL, PREM) for v in VALUES]
    for n in range(1, max_len + 1):
        for combo in itertools.product(letters, repeat=n):
            events = [Event(t, (v,), i) for i, (t, v) in enumerate(combo)]
            ok = True
            for ev in events:
                if ev.tag == CONCL:
                    cands = [e for e in events[: ev.pos] if e.tag == PREM]
                    if len(cands) > max_candidates:
                        ok = False
                        break
            if ok:
                yield events


def compare_all():
    """(cases, disagreements) between check_correspondence and brute_force."""
    cases = 0
    bad = []
    for events in synthetic_traces():
        for q in QUERIES:
            cases += 1
            fast = check_correspondence(events, q) is None
            slow = brute_force(events, q)
            if fast != slow:
                bad.append((q.id, [str(e) for e in events], fast, slow))
    return cases, bad
