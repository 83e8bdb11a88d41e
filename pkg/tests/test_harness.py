import pytest

from meshcop.adversary import UnderivableInjection, initial_knowledge
from meshcop.harness import (
    Deliver,
    Drop,
    EnvelopeStep,
    ExplorationConfig,
    Fabric,
    Inject,
    Intercept,
    Replay,
    Schedule,
    deliver,
    enumerate_schedules,
    explore,
    parse_dump,
    replay_dump,
    run_schedule,
)
from meshcop.messages import RoleId
from meshcop.crypto import make_finished
from meshcop.names import free, masked
from meshcop.roles import CATALOG_EVENTS
from meshcop.terms import apply, has_redex

HONEST = ExplorationConfig(scenario="full", mode="honest")
ADV_C1 = ExplorationConfig(scenario="commissioner", mode="adversarial", sessions=1)
ADV_C2 = ExplorationConfig(scenario="commissioner", mode="adversarial", sessions=2)


def advance_until(fab, pred):
    while not pred(fab):
        assert fab.advance(), "ran out of honest steps"
    return fab


@pytest.mark.parametrize("policy", ["sequential", "interleaved"])
def test_honest_run_completes(policy):
    t = run_schedule(HONEST, Schedule(policy))
    assert t.outcome.status == "Completed"
    assert set(CATALOG_EVENTS) <= t.tags()


def test_run_schedule_is_deterministic():
    a = run_schedule(HONEST, Schedule("interleaved"))
    b = run_schedule(HONEST, Schedule("interleaved"))
    assert a.dump() == b.dump() and a.digest() == b.digest()


def test_final_kb_is_fold_of_observations():
    t = run_schedule(HONEST, Schedule("sequential"))
    kb = initial_knowledge(t.catalog.attacker_names().values())
    for env in t.envelopes():
        kb.observe_term(env.payload, None)
    assert kb.digest() == t.final_kb.digest()


def test_payloads_are_normal_forms():
    for t in explore(ADV_C1):
        for env in t.envelopes():
            assert not has_redex(env.payload), env


def test_dropping_cookie_blocks_receipt():
    fab = Fabric(ADV_C1, "sequential").start()
    advance_until(fab, lambda f: f.pending_for((RoleId.CCLI, 1), "C_M2"))
    fab.apply_action(Drop(fab.tick, "C_M2", 1))
    t = fab.run_to_end().trace()
    assert t.outcome.status in ("Rejected", "Exhausted")
    assert "cclircvck" not in t.tags()


def test_schedule_with_drop_replays():
    fab = Fabric(ADV_C1, "sequential").start()
    advance_until(fab, lambda f: f.pending_for((RoleId.CCLI, 1), "C_M2"))
    fab.apply_action(Drop(fab.tick, "C_M2", 1))
    t = fab.run_to_end().trace()
    assert replay_dump(t.dump()).dump() == t.dump()


def test_replayed_petition_rejected_in_new_session():
    fab = Fabric(ADV_C2, "sequential").start()
    advance_until(fab, lambda f: f.roles.get((RoleId.BSRV, 2)) is not None
                  and f.roles[(RoleId.BSRV, 2)].expects == "C_M7")
    (idx,) = [s.index for s in fab.steps
              if isinstance(s, EnvelopeStep) and s.envelope.kind == "C_M7" and s.envelope.session == 1]
    fab.apply_action(Replay(fab.tick, idx, 2))
    t = fab.trace()
    assert t.outcome.status == "Rejected" and t.outcome.role == "BSRV/2"
    assert (RoleId.BSRV, 2) in fab.halted


def test_intercept_then_deliver():
    fab = Fabric(ADV_C1, "sequential").start()
    advance_until(fab, lambda f: f.pending_for((RoleId.CCLI, 1), "C_M2"))
    held = deliver(fab, Intercept(fab.tick, "C_M2", 1))
    assert not held.pending_for((RoleId.CCLI, 1), "C_M2")
    assert fab.pending_for((RoleId.CCLI, 1), "C_M2")
    after = deliver(held, Deliver(fab.tick, "C_M2", 1))
    assert after.roles[(RoleId.CCLI, 1)].expects == "C_M4"


def test_deliver_of_dropped_envelope_fails():
    fab = Fabric(ADV_C1, "sequential").start()
    advance_until(fab, lambda f: f.pending_for((RoleId.CCLI, 1), "C_M2"))
    dropped = deliver(fab, Drop(fab.tick, "C_M2", 1))
    with pytest.raises(UnderivableInjection):
        deliver(dropped, Deliver(fab.tick, "C_M2", 1))


def test_replayed_hello_is_accepted():
    fab = Fabric(ADV_C1, "sequential").start()
    hello = fab.pending_for((RoleId.BSRV, 1), "C_M1")[0]
    out = deliver(fab, Inject(0, "C_M1", 1, hello))
    assert out.roles[(RoleId.BSRV, 1)].expects == "C_M3"


def test_fabricated_finished_is_underivable():
    fab = Fabric(ADV_C1, "sequential").start()
    names = fab.catalog.session("commissioner", 1)
    session = apply("exp", [apply("exp", [free("G1"), names["x1"]]), names["x3"]])
    fake = make_finished(masked(free("ccli_id")), names["cr"], names["sr"], free("G1"), session)
    with pytest.raises(UnderivableInjection):
        deliver(fab, Inject(0, "C_M5", 1, fake))


def test_honest_mode_forbids_actions():
    fab = Fabric(HONEST, "sequential").start()
    with pytest.raises(ValueError):
        fab.apply_action(Drop(0, "C_M1", 1))


def test_bound_zero_gives_honest_interleavings_only():
    cfg = ADV_C2.with_(schedule_bound=0)
    scheds = list(enumerate_schedules(cfg))
    assert [s.policy for s in scheds] == ["sequential", "interleaved"]
    assert all(s.actions == () for s in scheds)


def test_bound_one_is_finite_and_stable():
    cfg = ADV_C2.with_(schedule_bound=1)
    first = [s.to_json() for s in enumerate_schedules(cfg)]
    second = [s.to_json() for s in enumerate_schedules(cfg)]
    assert first == second
    assert len(first) > 2
    assert all(len(Schedule.from_json(s).actions) <= 1 for s in first)


def test_seeded_streams_reproduce():
    cfg = ADV_C1.with_(seeds=(7,), systematic=False)
    a = [s.to_json() for s in enumerate_schedules(cfg)]
    b = [s.to_json() for s in enumerate_schedules(cfg)]
    assert a == b and len(a) == 16
    other = [s.to_json() for s in enumerate_schedules(cfg.with_(seeds=(8,)))]
    assert other != a


def test_enumerate_needs_a_mode():
    with pytest.raises(ValueError):
        list(enumerate_schedules(ADV_C1.with_(systematic=False)))


def test_schedules_replay_to_same_trace():
    for t in explore(ADV_C1.with_(schedule_bound=1)):
        again = run_schedule(t.config, t.schedule)
        assert again.dump() == t.dump()


@pytest.mark.parametrize("bad", [dict(scenario="x"), dict(mode="x"), dict(sessions=0),
                                 dict(depth_bound=-1), dict(mutations={"nope"})])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ExplorationConfig(**bad)


def test_config_json_round_trip():
    cfg = ExplorationConfig(scenario="joiner", mutations={"allow-zkp-forge"}, seeds=(1, 2))
    assert ExplorationConfig.from_json(cfg.to_json()) == cfg
    assert cfg.digest() == ExplorationConfig.from_json(cfg.to_json()).digest()


def test_parse_dump_rejects_garbage():
    with pytest.raises(ValueError):
        parse_dump("hello\n")


def test_full_adversarial_splits_protocols():
    cfg = ExplorationConfig(scenario="full", mode="adversarial", schedule_bound=0)
    scenarios = [t.config.scenario for t in explore(cfg)]
    assert scenarios[:2] == ["full", "full"]
    assert set(scenarios[2:]) == {"commissioner", "joiner"}
