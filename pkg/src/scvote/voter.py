"""Voter-side logic: choosing codes, checking returned verification codes, and
the small session state machine shared by the scripted voter and the gateway client.
"""

from __future__ import annotations

import logging
from typing import Mapping, Protocol, Sequence

from .codespace import CodeElement, combine_shares, lookup_code
from .errors import AbortError, ParseError, PhaseError
from .setup_component import BallotSheet
from .sheets import parse_qr, parse_sheet  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)


def select_codes(sheet: BallotSheet, choices: Mapping[str, Sequence[str]]) -> dict[str, list[str]]:
    """Plain choices per question to the code tokens printed on ``sheet``."""
    if set(choices) != set(sheet.questions):
        raise ValueError(f"choices must cover exactly the questions {sorted(sheet.questions)}")
    out = {}
    for qid, picks in choices.items():
        sq = sheet.questions[qid]
        if len(picks) != sq.k or len(set(picks)) != len(picks):
            raise ValueError(f"{qid}: choose exactly {sq.k} distinct options")
        try:
            out[qid] = [lookup_code(sq.ptc, p).token for p in picks]
        except AbortError:
            raise ValueError(f"{qid}: unknown option in {list(picks)}") from None
    return out


def check_vote_verification(sheet: BallotSheet, qid: str, code: CodeElement,
                            shares: Mapping[int, CodeElement], ncc: int) -> bool:
    if set(shares) != set(range(1, ncc + 1)):
        return False
    expected = sheet.questions[qid].ctvv.get(code)
    try:
        return expected is not None and combine_shares(shares.values()) == expected
    except ValueError:
        return False


def check_confirm_verification(sheet: BallotSheet, shares: Mapping[int, CodeElement], ncc: int) -> bool:
    if set(shares) != set(range(1, ncc + 1)):
        return False
    try:
        return combine_shares(shares.values()) == sheet.cv
    except ValueError:
        return False


class GatewayClient(Protocol):
    def cast(self, payload: dict) -> dict: ...

    def confirm(self, payload: dict) -> dict: ...


LOGGED_IN = "logged-in"
VV_CHECKED = "vv-checked"
CONFIRMED = "confirmed"
OTHER_CHANNEL = "use-other-channel"

# outcome -> short name used for exit codes and reports
OUTCOMES = ("ok", "vv-mismatch", "cv-mismatch", "rejected", "pending")


class VoterSession:
    """One voter's pass through cast and confirm.

    After a failed check the session is terminal: the CA is never sent and the
    voter is told to use a different voting channel.
    """

    def __init__(self, sheet: BallotSheet, ncc: int, client: GatewayClient):
        self.sheet = sheet
        self.ncc = ncc
        self.client = client
        self.state = LOGGED_IN
        self.outcome = "pending"
        self.rejection: dict | None = None
        self.sent: list[dict] = []
        self.cast_codes: dict[str, list[str]] = {}

    @classmethod
    def login(cls, qr_payload: str, sheet: BallotSheet, ncc: int, client: GatewayClient) -> VoterSession:
        election_id, voter_id = parse_qr(qr_payload)
        if (election_id, voter_id) != (sheet.election_id, sheet.id):
            raise ParseError("QR payload belongs to a different sheet")
        return cls(sheet, ncc, client)

    def _send(self, kind: str, payload: dict) -> dict:
        self.sent.append(payload)
        return getattr(self.client, kind)(payload)

    def _fail(self, outcome: str, reply: dict | None = None):
        self.state = OTHER_CHANNEL
        self.outcome = outcome
        self.rejection = reply
        log.info("voter %s: %s, directed to another channel", self.sheet.id, outcome)

    def cast(self, choices: Mapping[str, Sequence[str]]) -> bool:
        if self.state != LOGGED_IN:
            raise PhaseError(f"cannot cast in state {self.state}")
        self.cast_codes = select_codes(self.sheet, choices)
        reply = self._send("cast", {"id": self.sheet.id, "codes": self.cast_codes})
        if "error" in reply:
            self._fail("rejected", reply)
            return False
        shares: dict[int, dict[str, str]] = {}
        for entry in reply.get("perCC", []):
            shares.setdefault(int(entry["index"]), entry.get("vv", {}))
        for qid, tokens in self.cast_codes.items():
            space = self.sheet.questions[qid].ptc.codes[0].space
            vv_space = next(iter(self.sheet.questions[qid].ctvv.values())).space
            for token in tokens:
                try:
                    per_cc = {i: vv_space.parse(v[token]) for i, v in shares.items() if token in v}
                except ParseError:
                    per_cc = {}
                if not check_vote_verification(self.sheet, qid, space.parse(token), per_cc, self.ncc):
                    self._fail("vv-mismatch", reply)
                    return False
        self.state = VV_CHECKED
        return True

    def confirm(self) -> bool:
        if self.state != VV_CHECKED:
            raise PhaseError(f"confirmation is only allowed after matching verification codes (state {self.state})")
        reply = self._send("confirm", {"id": self.sheet.id, "ca": self.sheet.ca.token})
        if "error" in reply:
            self._fail("rejected", reply)
            return False
        per_cc = {}
        try:
            for entry in reply.get("perCC", []):
                per_cc.setdefault(int(entry["index"]), self.sheet.cv.space.parse(entry["cv"]))
        except (ParseError, KeyError):
            per_cc = {}
        if not check_confirm_verification(self.sheet, per_cc, self.ncc):
            self._fail("cv-mismatch", reply)
            return False
        self.state = CONFIRMED
        self.outcome = "ok"
        return True
