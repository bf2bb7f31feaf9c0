import pytest
from fastapi.testclient import TestClient

from scvote.service import HttpGatewayClient, RemoteComponent, component_app, gateway_app
from scvote.transport import Gateway
from scvote.voter import VoterSession

V1, V2, V3, V4 = "V1AAAAAAAAAA", "V2BBBBBBBBBB", "V3CCCCCCCCCC", "V4DDDDDDDDDD"


@pytest.fixture
def deployment(setup_out, components):
    remotes = [RemoteComponent(cc.index, "http://cc", setup_out.config, client=TestClient(component_app(cc)))
               for cc in components]
    gateway = Gateway(setup_out.config, remotes)
    http = TestClient(gateway_app(gateway))
    return http, HttpGatewayClient("http://gw", client=http), components


def test_election_description(deployment, setup_out):
    http, _, _ = deployment
    d = http.get("/api/v1/election").json()
    assert d["election_id"] == "e1" and d["ncc"] == 2
    assert [q["id"] for q in d["questions"]] == ["q1", "q2"]
    assert d["questions"][1]["k"] == 2


def test_vote_over_http(deployment, setup_out):
    _, client, components = deployment
    session = VoterSession(setup_out.sheets[V1], 2, client)
    assert session.cast({"q1": ["No"], "q2": ["Ada", "Chiara"]})
    assert session.confirm()
    assert all(V1 in cc.conf for cc in components)


def test_http_state_equals_in_process(deployment, setup_out, keys):
    from scvote.simulation import VoteScript, run_direct

    _, client, components = deployment
    votes = [VoteScript(V2, {"q1": ["Yes"], "q2": ["Ben", "Chiara"]}), VoteScript(V3, {"q1": ["No"]}, False)]
    for v in votes:
        s = VoterSession(setup_out.sheets[v.id], 2, client)
        if s.cast(v.choices) and v.confirm:
            s.confirm()
    direct, _ = run_direct(setup_out, keys, votes, seed="svc")
    for cc in components:
        other = direct[cc.index]
        assert (cc.sync, cc.cast, cc.conf) == (other.sync, other.cast, other.conf)


def test_error_statuses(deployment, setup_out):
    http, _, _ = deployment
    r = http.post("/api/v1/cast", json={"id": V1, "codes": {"q1": ["Z"], "q2": ["3", "4"]}})
    assert r.status_code == 409 and r.json() == {"error": "bad-code", "source": "gateway",
                                                 "detail": r.json()["detail"]}
    r = http.post("/api/v1/confirm", json={"id": V1, "ca": setup_out.sheets[V1].ca.token})
    assert r.status_code == 409 and r.json()["error"] == "not-cast" and r.json()["source"] == 1
    sheet = setup_out.sheets[V3]
    code = sheet.questions["q1"].ptc.codes[0].token
    assert http.post("/api/v1/cast", json={"id": V3, "codes": {"q1": [code]}}).status_code == 200
    r = http.post("/api/v1/confirm", json={"id": V3, "ca": "AAAA-AAAA"})
    assert r.status_code == 409 and r.json()["error"] == "bad-ca"
    r = http.post("/api/v1/cast", json={"id": V3, "codes": {"q1": [code]}})
    assert r.json()["error"] == "duplicate-cast"


def test_component_down_gives_504(setup_out, components):
    remotes = [RemoteComponent(1, "http://cc1", setup_out.config, client=TestClient(component_app(components[0]))),
               RemoteComponent(2, "http://127.0.0.1:9", setup_out.config, timeout=0.5)]
    http = TestClient(gateway_app(Gateway(setup_out.config, remotes)))
    code = setup_out.sheets[V3].questions["q1"].ptc.codes[0].token
    r = http.post("/api/v1/cast", json={"id": V3, "codes": {"q1": [code]}})
    assert r.status_code == 504 and r.json()["error"] == "timeout" and r.json()["source"] == 2


def test_component_api_directly(setup_out, components):
    http = TestClient(component_app(components[0]))
    assert http.get("/cc/status").json() == {"index": 1, "closed": False, "sync": 0, "cast": 0, "conf": 0}
    r = http.post("/cc/cast_collect", json={"id": V1, "announcements": []})
    assert r.status_code == 409 and r.json()["error"] == "not-cast"
    r = http.post("/cc/cast_begin", json={"id": V1, "codes": "nope"})
    assert r.status_code == 400
    components[0].close()
    r = http.post("/cc/confirm", json={"id": V1, "ca": "AAAA"})
    assert r.status_code == 409 and r.json()["error"] == "phase"


def test_client_reports_unreachable_gateway():
    client = HttpGatewayClient("http://127.0.0.1:9", timeout=0.5)
    assert client.cast({"id": "x", "codes": {}})["error"] == "timeout"
