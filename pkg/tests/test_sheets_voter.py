import json
import random

import pytest

from conftest import make_election
from scvote.codespace import CodeSpace, PlainToCode, lookup_code
from scvote.crypto import counter_encode
from scvote.errors import ParseError, PhaseError
from scvote.setup_component import run_setup
from scvote.sheets import parse_qr, parse_sheet, render_sheet_document, render_sheet_text
from scvote.transport import Gateway
from scvote.voter import (
    CONFIRMED,
    OTHER_CHANNEL,
    VV_CHECKED,
    VoterSession,
    check_confirm_verification,
    check_vote_verification,
    select_codes,
)


class RecordingClient:
    """Passes requests to a gateway, optionally rewriting replies."""

    def __init__(self, gateway, rewrite=None):
        self.gateway = gateway
        self.rewrite = rewrite or (lambda kind, reply: reply)
        self.sent = []

    def cast(self, payload):
        self.sent.append(json.dumps(payload))
        return self.rewrite("cast", self.gateway.cast(payload))

    def confirm(self, payload):
        self.sent.append(json.dumps(payload))
        return self.rewrite("confirm", self.gateway.confirm(payload))


# -- documents

def test_sheet_document_round_trip(setup_out):
    for sheet in setup_out.sheets.values():
        doc = render_sheet_document(sheet)
        assert parse_sheet(doc) == sheet
        assert parse_sheet(json.loads(doc)) == sheet


def test_sheet_parse_errors(setup_out):
    sheet = next(iter(setup_out.sheets.values()))
    doc = json.loads(render_sheet_document(sheet))
    with pytest.raises(ParseError):
        parse_sheet("{not json")
    with pytest.raises(ParseError):
        parse_sheet({**doc, "format": "other"})
    with pytest.raises(ParseError):
        parse_sheet({k: v for k, v in doc.items() if k != "ca"})
    with pytest.raises(ParseError):
        parse_sheet({**doc, "qr": "scv1:e1:SOMEONEELSE"})
    broken = json.loads(json.dumps(doc))
    broken["questions"][0]["codes"][0]["vv"] = "99999"
    with pytest.raises(ParseError):
        parse_sheet(broken)


def test_text_layout(setup_out):
    sheet = setup_out.sheets["V1AAAAAAAAAA"]
    text = render_sheet_text(sheet)
    assert "scv1:e1:V1AAAAAAAAAA" in text
    assert sheet.ca.token in text and sheet.cv.token in text
    for sq in sheet.questions.values():
        for plain, code in sq.ptc.pairs:
            assert any(plain in line and sq.ctvv[code].token in line for line in text.splitlines())


def test_parse_qr():
    assert parse_qr("scv1:e1:K7RM2QXAVB4D") == ("e1", "K7RM2QXAVB4D")
    for bad, pos in [("scv1:e1", 7), ("scv2:e1:X", 0), ("scv1::X", 5), ("scv1:e1:A B", 9)]:
        with pytest.raises(ParseError) as info:
            parse_qr(bad)
        assert info.value.position == pos
    with pytest.raises(ParseError):
        parse_qr("scv1:e1:X:extra")


def test_login_checks_payload(setup_out):
    sheet = setup_out.sheets["V1AAAAAAAAAA"]
    VoterSession.login("scv1:e1:V1AAAAAAAAAA", sheet, 2, None)
    with pytest.raises(ParseError):
        VoterSession.login("scv1:e1:V2BBBBBBBBBB", sheet, 2, None)


# -- choosing codes

def test_select_codes_uses_printed_table():
    s = CodeSpace(3, "code")
    A, B, C = s(0), s(1), s(2)
    ptc = PlainToCode((("Yes", A), ("No", B), ("Abstain", C)))
    assert lookup_code(ptc, "No") == B


def test_select_codes(setup_out):
    sheet = setup_out.sheets["V1AAAAAAAAAA"]
    codes = select_codes(sheet, {"q1": ["No"], "q2": ["Ada", "Chiara"]})
    assert codes["q1"] == [lookup_code(sheet.questions["q1"].ptc, "No").token]
    assert len(codes["q2"]) == 2
    with pytest.raises(ValueError):
        select_codes(sheet, {"q1": ["No"], "q2": ["Ada"]})
    with pytest.raises(ValueError):
        select_codes(sheet, {"q1": ["Maybe"], "q2": ["Ada", "Ben"]})
    with pytest.raises(ValueError):
        select_codes(sheet, {"q1": ["No"]})
    with pytest.raises(ValueError):
        select_codes(sheet, {"q1": ["No"], "q2": ["Ada", "Ada"]})


def test_same_option_different_codes_across_sheets(setup_out):
    tokens = {vid: sheet.questions["q1"].ptc for vid, sheet in setup_out.sheets.items() if "q1" in sheet.questions}
    assert len({tuple(ptc.codes) for ptc in tokens.values()}) > 1


# -- verification checks

def honest_vv_shares(setup_out, vid, qid, code):
    return {i: recs[vid].partial.questions[qid].ctvv[code] for i, recs in setup_out.records.items()}


def test_vote_verification(setup_out):
    sheet = setup_out.sheets["V1AAAAAAAAAA"]
    code = sheet.questions["q1"].ptc.codes[0]
    shares = honest_vv_shares(setup_out, sheet.id, "q1", code)
    assert check_vote_verification(sheet, "q1", code, shares, 2)
    bumped = dict(shares)
    bumped[2] = bumped[2] + bumped[2].space(1)
    assert not check_vote_verification(sheet, "q1", code, bumped, 2)
    assert not check_vote_verification(sheet, "q1", code, {1: shares[1]}, 2)


def test_confirm_verification(setup_out):
    sheet = setup_out.sheets["V2BBBBBBBBBB"]
    shares = {i: recs[sheet.id].partial.cv for i, recs in setup_out.records.items()}
    assert check_confirm_verification(sheet, shares, 2)
    for i in shares:
        tampered = dict(shares)
        tampered[i] = tampered[i] + tampered[i].space(3)
        assert not check_confirm_verification(sheet, tampered, 2)
    assert not check_confirm_verification(sheet, {2: shares[2]}, 2)


@pytest.fixture(scope="module")
def z16():
    return run_setup(make_election(zv=16), 1, seed="z16")


def test_wrong_code_shares_accept_rate_z16(z16):
    sheet = z16.sheets["V1AAAAAAAAAA"]
    codes = sheet.questions["q1"].ptc.codes
    rng = random.Random(1616)
    accepted = 0
    for _ in range(1000):
        target = rng.choice(codes)
        # shares released for some other code look uniform to the checker
        shares = {i: z16.config.vv_space.random(rng) for i in (1, 2)}
        accepted += check_vote_verification(sheet, "q1", target, shares, 2)
    assert 62.5 - 30 <= accepted <= 62.5 + 30


def test_random_cv_shares_accept_rate_z16(z16):
    sheet = z16.sheets["V2BBBBBBBBBB"]
    rng = random.Random(1717)
    accepted = sum(check_confirm_verification(sheet, {i: z16.config.cv_space.random(rng) for i in (1, 2)}, 2)
                   for _ in range(1000))
    assert 62.5 - 30 <= accepted <= 62.5 + 30


# -- sessions against a real gateway

def test_session_happy_path_and_taint(setup_out, components, secret, keys):
    gw = Gateway(setup_out.config, components)
    sheet = setup_out.sheets["V1AAAAAAAAAA"]
    client = RecordingClient(gw)
    session = VoterSession(sheet, 2, client)
    choices = {"q1": ["Abstain"], "q2": ["Ben", "Chiara"]}
    assert session.cast(choices)
    assert session.state == VV_CHECKED
    assert session.confirm()
    assert session.state == CONFIRMED and session.outcome == "ok"
    for message in client.sent:
        for plain in ("Abstain", "Ben", "Chiara"):
            assert plain not in message
    # each component holds the encryption of what the voter meant
    cfg = setup_out.config
    for cc in components:
        cts = dict(cc.cast[sheet.id].ciphertexts)
        for qid, picks in choices.items():
            q = cfg.question(qid)
            got = sorted(ct.c2 * keys.group.inv(keys.group.exp(ct.c1, secret)) % keys.group.p for ct in cts[qid])
            want = sorted(counter_encode(q.option_index(p), cfg.counter_base) for p in picks)
            assert got == want


def test_session_refuses_ca_after_vv_mismatch(setup_out, components):
    gw = Gateway(setup_out.config, components)

    def shift(kind, reply):
        if kind == "cast" and "perCC" in reply:
            vv = reply["perCC"][0]["vv"]
            for code, token in vv.items():
                vv[code] = setup_out.config.vv_space.render((int(token) + 1) % setup_out.config.zv)
        return reply

    client = RecordingClient(gw, shift)
    session = VoterSession(setup_out.sheets["V2BBBBBBBBBB"], 2, client)
    assert not session.cast({"q1": ["Yes"], "q2": ["Ada", "Ben"]})
    assert session.state == OTHER_CHANNEL and session.outcome == "vv-mismatch"
    with pytest.raises(PhaseError):
        session.confirm()
    assert all('"ca"' not in m for m in client.sent)


def test_session_reports_cv_mismatch(setup_out, components):
    gw = Gateway(setup_out.config, components)

    def shift(kind, reply):
        if kind == "confirm" and "perCC" in reply:
            entry = reply["perCC"][1]
            cv = setup_out.config.cv_space.parse(entry["cv"])
            entry["cv"] = (cv + cv.space(1)).token
        return reply

    session = VoterSession(setup_out.sheets["V3CCCCCCCCCC"], 2, RecordingClient(gw, shift))
    assert session.cast({"q1": ["No"]})
    assert not session.confirm()
    assert session.outcome == "cv-mismatch"


def test_session_rejection(setup_out, components):
    gw = Gateway(setup_out.config, components)
    sheet = setup_out.sheets["V4DDDDDDDDDD"]
    assert VoterSession(sheet, 2, RecordingClient(gw)).cast({"q2": ["Ada", "Ben"]})
    second = VoterSession(sheet, 2, RecordingClient(gw))
    assert not second.cast({"q2": ["Ada", "Ben"]})
    assert second.outcome == "rejected" and second.rejection["error"] == "duplicate-cast"
