import pytest

from conftest import make_election
from scvote.simulation import (
    ComponentKeys,
    Scenario,
    VoteScript,
    build_components,
    run_direct,
    run_scenario,
    topology,
)
from scvote.setup_component import run_setup
from scvote.transport import (
    AUTHENTIC,
    INSECURE,
    SECURE,
    AdversaryAction,
    AdversaryScript,
    Bus,
    Channel,
    ConfigError,
    Gateway,
)

V1, V2, V3, V4 = "V1AAAAAAAAAA", "V2BBBBBBBBBB", "V3CCCCCCCCCC", "V4DDDDDDDDDD"


def script(corrupted=(), **action):
    return AdversaryScript(frozenset(corrupted), [AdversaryAction(**action)])


# -- capability checks

@pytest.mark.parametrize("action,corrupted", [
    ({"kind": "modify", "src": "cc1", "dst": "cc2", "modifier": "vv-offset"}, ()),
    ({"kind": "inject", "src": "cc1", "dst": "cc2", "payload": {"type": "announce"}}, ()),
    ({"kind": "modify", "src": "cc1", "dst": "cc2", "modifier": "vv-offset"}, ("cc2",)),
    ({"kind": "read", "src": "setup", "dst": "cc1"}, ()),
    ({"kind": "read", "src": "setup", "dst": "voter"}, ("cc1",)),
    ({"kind": "drop", "src": "cc1", "dst": "bulletin"}, ()),
    ({"kind": "drop", "src": "setup", "dst": "*"}, ()),
    ({"kind": "drop", "src": "voter", "dst": "cc1"}, ()),
])
def test_forbidden_capabilities(action, corrupted):
    with pytest.raises(ConfigError):
        Bus(topology(2), script(corrupted, **action))


@pytest.mark.parametrize("action,corrupted", [
    ({"kind": "modify", "src": "gateway", "dst": "voter", "modifier": "vv-offset"}, ()),
    ({"kind": "inject", "src": "voter", "dst": "gateway", "payload": {"type": "cast", "id": "x"}}, ()),
    ({"kind": "modify", "src": "cc1", "dst": "cc2", "modifier": "vv-offset"}, ("cc1",)),
    ({"kind": "read", "src": "setup", "dst": "cc1"}, ("cc1",)),
    ({"kind": "read", "src": "cc1", "dst": "cc2"}, ()),
    ({"kind": "drop", "src": "cc1", "dst": "cc2"}, ()),
    ({"kind": "reorder", "src": "*", "dst": "*"}, ()),
])
def test_permitted_capabilities(action, corrupted):
    Bus(topology(2), script(corrupted, **action))


def test_action_validation():
    with pytest.raises(ConfigError):
        AdversaryAction("teleport")
    with pytest.raises(ConfigError):
        AdversaryAction("modify")
    with pytest.raises(ConfigError):
        AdversaryAction("modify", modifier="nonsense")
    with pytest.raises(ConfigError):
        AdversaryAction("inject", src="*", dst="cc1", payload={})


def test_topology_attributes():
    chans = {ch.name: ch for ch in topology(3)}
    assert chans["setup->cc1"].attributes == SECURE and chans["setup->cc1"].reliable
    assert chans["cc1->cc3"].attributes == AUTHENTIC
    assert chans["voter->gateway"].attributes == INSECURE
    assert chans["gateway->cc2"].attributes == INSECURE
    assert "voter->cc1" not in chans


# -- the bus

def echo_bus(script=None, seed=0):
    bus = Bus([Channel("a", "b"), Channel("b", "a")], script, seed)
    got = []
    bus.register("b", lambda m: (got.append(m.payload["n"]), bus.send("b", "a", "ack", {"n": m.payload["n"]})))
    bus.register("a", lambda m: got.append(("ack", m.payload["n"])))
    return bus, got


def test_bus_delivers_in_order_and_traces():
    bus, got = echo_bus()
    for n in range(3):
        bus.send("a", "b", "ping", {"n": n})
    bus.run()
    assert got[:3] == [0, 1, 2]
    assert len([t for t in bus.trace if t.action == "deliver"]) == 6


def test_bus_determinism_under_reorder():
    runs = []
    for _ in range(2):
        bus, got = echo_bus(script(kind="reorder", delay=5), seed=7)
        for n in range(10):
            bus.send("a", "b", "ping", {"n": n})
        bus.run()
        runs.append((got, bus.trace_lines()))
    assert runs[0] == runs[1]
    assert runs[0][0][:10] != list(range(10))
    other, got = echo_bus(script(kind="reorder", delay=5), seed=8)
    for n in range(10):
        other.send("a", "b", "ping", {"n": n})
    other.run()
    assert other.trace_lines() != runs[0][1]


def test_bus_drop_modify_read_inject():
    bus, got = echo_bus(AdversaryScript(frozenset(), [
        AdversaryAction("read", "a", "b"),
        AdversaryAction("drop", "a", "b", message="ping", limit=1),
        AdversaryAction("modify", "b", "a", modifier=lambda p: {**p, "n": -p["n"]}),
        AdversaryAction("inject", "a", "b", payload={"type": "ping", "n": 99}),
    ]))
    bus.send("a", "b", "ping", {"n": 1})
    bus.send("a", "b", "ping", {"n": 2})
    bus.run()
    assert 1 not in got and 2 in got and 99 in got
    assert ("ack", -2) in got
    assert [v["n"] for _, v in bus.adversary_view] == [1, 2]
    assert {t.action for t in bus.trace} >= {"send", "drop", "modify", "inject", "deliver"}


def test_unknown_channel():
    bus, _ = echo_bus()
    with pytest.raises(ConfigError):
        bus.send("a", "c", "x", {})


# -- gateway

@pytest.fixture
def world(setup_out, keys):
    return setup_out, keys


def direct_calls(setup_out, components, vid, choices, confirm=True):
    from scvote.control_component import CastRequest, ConfirmRequest

    sheet = setup_out.sheets[vid]
    req = CastRequest(vid, {q: [dict(sheet.questions[q].ptc.pairs)[p].token for p in ps] for q, ps in choices.items()})
    anns = [cc.cast_begin(req) for cc in components]
    for cc in components:
        cc.cast_collect(vid, anns)
    if confirm:
        for cc in components:
            cc.confirm(ConfirmRequest(vid, sheet.ca.token))


VOTES = [VoteScript(V1, {"q1": ["Yes"], "q2": ["Ada", "Ben"]}), VoteScript(V3, {"q1": ["No"]}, confirm=False)]


def state(cc):
    return cc.sync, cc.cast, cc.conf


def test_gateway_equals_direct_calls(world):
    setup_out, keys = world
    via_gateway, sessions = run_direct(setup_out, keys, VOTES, seed="g")
    assert [s.outcome for s in sessions.values()] == ["ok", "pending"]
    direct = list(build_components(setup_out, keys, seed="d").values())
    for v in VOTES:
        direct_calls(setup_out, direct, v.id, v.choices, v.confirm)
    for a, b in zip(via_gateway.values(), direct):
        assert state(a) == state(b)


def test_bus_equals_direct_calls():
    scenario = Scenario.from_dict({
        "format": "scv-scenario/1", "seed": "eq", "election": make_election().to_dict(),
        "votes": [v.to_dict() for v in VOTES],
    })
    result = run_scenario(scenario)
    assert result.failures == []
    direct, _ = run_direct(result.setup, result.keys, VOTES, seed="other")
    for i, cc in direct.items():
        assert state(cc) == state(result.components[i])


class Spy:
    def __init__(self, inner):
        self.inner = inner
        self.index = inner.index
        self.calls = []

    def __getattr__(self, name):
        def call(*args):
            self.calls.append(name)
            return getattr(self.inner, name)(*args)
        return call


@pytest.mark.parametrize("payload,code", [
    ({"id": V1, "codes": {"q1": ["Q"], "q2": ["3", "4"]}}, "bad-code"),
    ({"id": V1, "codes": {"q1": ["0"], "q2": ["3"]}}, "bad-count"),
    ({"id": "NOBODY", "codes": {"q1": ["0"]}}, "unknown-id"),
    ({"id": V3, "codes": {"q1": ["0"], "q2": ["3", "4"]}}, "bad-code"),
    ({"id": V1, "codes": "0"}, "bad-code"),
    ({"codes": {}}, "bad-code"),
])
def test_gateway_sheds_invalid_casts(setup_out, components, payload, code):
    spies = [Spy(cc) for cc in components]
    reply = Gateway(setup_out.config, spies).cast(payload)
    assert reply["error"] == code and reply["source"] == "gateway"
    assert all(s.calls == [] for s in spies)


def test_gateway_duplicate_and_confirm_errors(setup_out, components):
    gw = Gateway(setup_out.config, components)
    sheet = setup_out.sheets[V4]
    codes = {"q2": [c.token for c in sheet.questions["q2"].ptc.codes[:2]]}
    assert "perCC" in gw.cast({"id": V4, "codes": codes})
    spies = [Spy(cc) for cc in components]
    gw.components = spies
    assert gw.cast({"id": V4, "codes": codes})["error"] == "duplicate-cast"
    assert all(s.calls == [] for s in spies)
    assert gw.confirm({"id": V4, "ca": 5})["error"] == "bad-ca"
    assert gw.confirm({"id": "NOBODY", "ca": "AAAA"})["error"] == "unknown-id"
    assert gw.confirm({"id": V1, "ca": setup_out.sheets[V1].ca.token})["error"] == "not-cast"
    reply = gw.confirm({"id": V4, "ca": sheet.ca.token})
    assert [e["index"] for e in reply["perCC"]] == [1, 2]


def test_gateway_retired_ids(setup_out, components):
    gw = Gateway(setup_out.config, components, retired={V1})
    assert gw.cast({"id": V1, "codes": {"q1": ["0"], "q2": ["3", "4"]}})["error"] == "unknown-id"


def test_unreachable_component_is_a_timeout(setup_out, components):
    class Down:
        index = 2

        def cast_begin(self, req):
            raise OSError("connection refused")

    reply = Gateway(setup_out.config, [components[0], Down()]).cast(
        {"id": V3, "codes": {"q1": [setup_out.sheets[V3].questions["q1"].ptc.codes[0].token]}})
    assert reply["error"] == "timeout" and reply["source"] == 2


# -- scenarios on the bus

def scenario(adversary, votes=None, seed="s", **extra):
    return Scenario.from_dict({
        "format": "scv-scenario/1", "seed": seed, "election": make_election().to_dict(),
        "votes": votes or [v.to_dict() for v in VOTES], "adversary": adversary,
        "expect": {"default_outcome": "any"}, **extra,
    })


def test_same_seed_same_trace():
    adv = {"network": [{"kind": "reorder", "delay": 7}]}
    a, b = run_scenario(scenario(adv)), run_scenario(scenario(adv))
    assert a.trace == b.trace and a.report_json() == b.report_json()
    assert run_scenario(scenario(adv, seed="t")).trace != a.trace


def test_drop_all_peer_traffic_aborts_cast():
    result = run_scenario(scenario({"network": [{"kind": "drop", "src": "cc1", "dst": "cc2"}]}))
    assert result.rejections[V1]["error"] == "peer-signature-failure"
    assert result.rejections[V1]["source"] == 2
    drops = [line for line in result.trace if '"cc1->cc2"' in line and '"drop"' in line]
    assert drops
    assert any('"cc2->gateway", "reject"' in line for line in result.trace)
    assert all(V1 not in ids for ids in result.agreed.values())
    assert V1 in result.components[2].sync and V1 not in result.components[2].cast


def test_dropped_reply_is_a_timeout():
    result = run_scenario(scenario({"network": [{"kind": "drop", "src": "cc2", "dst": "gateway",
                                                 "message": "vv"}]}))
    assert result.rejections[V1]["error"] == "timeout"
    assert result.outcomes[V1] == "rejected"


def test_corrupt_gateway_modifying_share_is_caught():
    result = run_scenario(scenario({"network": [{"kind": "modify", "src": "gateway", "dst": "voter",
                                                 "message": "cast-reply", "modifier": "vv-offset"}]}))
    assert result.outcomes[V1] == "vv-mismatch"
    assert result.components[1].conf == {}


def test_adversary_reading_insecure_channels_sees_only_codes():
    result = run_scenario(scenario({"network": [{"kind": "read", "src": "voter", "dst": "gateway"}]}))
    assert result.outcomes[V1] == "ok"
    assert [ch for ch, _ in result.adversary_view] == ["voter->gateway"] * 3
    # the intended options never appear on the wire, only codes
    seen = repr(result.adversary_view)
    assert "Yes" not in seen and "Ada" not in seen and "Ben" not in seen
    assert result.adversary_view[0][1]["codes"]["q1"] == [
        dict(result.setup.sheets[V1].questions["q1"].ptc.pairs)["Yes"].token]
