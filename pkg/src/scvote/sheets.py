"""Printable and machine-readable ballot sheets."""

from __future__ import annotations

import json

from .codespace import CodeSpace, PlainToCode
from .errors import ParseError
from .setup_component import BallotSheet, SheetQuestion

SHEET_FORMAT = "scv-sheet/1"
QR_PREFIX = "scv1"


def sheet_to_dict(sheet: BallotSheet) -> dict:
    some_q = next(iter(sheet.questions.values()))
    zv = next(iter(some_q.ctvv.values())).space.size
    questions = []
    for qid, sq in sheet.questions.items():
        space = sq.ptc.codes[0].space
        questions.append({
            "id": qid,
            "label": sq.label,
            "k": sq.k,
            "offset": space.offset,
            "size": space.size,
            "codes": [{"option": plain, "code": code.token, "vv": sq.ctvv[code].token}
                      for plain, code in sq.ptc.pairs],
        })
    return {
        "format": SHEET_FORMAT,
        "election_id": sheet.election_id,
        "id": sheet.id,
        "qr": sheet.qr_payload,
        "zv": zv,
        "za": sheet.ca.space.size,
        "questions": questions,
        "ca": sheet.ca.token,
        "cv": sheet.cv.token,
    }


def render_sheet_document(sheet: BallotSheet) -> str:
    return json.dumps(sheet_to_dict(sheet), indent=2) + "\n"


def parse_sheet(document: str | dict) -> BallotSheet:
    try:
        d = json.loads(document) if isinstance(document, str) else document
    except json.JSONDecodeError as exc:
        raise ParseError(f"sheet is not valid JSON: {exc.msg}", exc.pos) from None
    try:
        if d["format"] != SHEET_FORMAT:
            raise ParseError(f"unsupported sheet format {d['format']!r}")
        vv_space = CodeSpace(int(d["zv"]), "decimal")
        cv_space = CodeSpace(int(d["zv"]), "base32")
        ca_space = CodeSpace(int(d["za"]), "base32")
        questions = {}
        for q in d["questions"]:
            space = CodeSpace(int(q["size"]), "code", int(q["offset"]))
            pairs, ctvv = [], {}
            for row in q["codes"]:
                code = space.parse(row["code"])
                pairs.append((row["option"], code))
                ctvv[code] = vv_space.parse(row["vv"])
            questions[q["id"]] = SheetQuestion(q["label"], int(q["k"]), ctvv, PlainToCode(tuple(pairs)))
        sheet = BallotSheet(d["election_id"], d["id"], questions, ca_space.parse(d["ca"]), cv_space.parse(d["cv"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"sheet is missing or mistypes field {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc)) from None
    if d.get("qr") not in (None, sheet.qr_payload):
        raise ParseError("QR payload does not match the sheet id")
    return sheet


def parse_qr(payload: str) -> tuple[str, str]:
    """``scv1:<election-id>:<Id>`` to ``(election_id, voter_id)``."""
    if not isinstance(payload, str):
        raise ParseError("QR payload must be text", 0)
    parts = payload.strip().split(":")
    if parts[0] != QR_PREFIX:
        raise ParseError(f"QR payload must start with {QR_PREFIX!r}", 0)
    if len(parts) != 3:
        raise ParseError(f"expected 3 colon-separated fields, found {len(parts)}", len(payload))
    pos = len(QR_PREFIX) + 1
    for part in parts[1:]:
        if not part:
            raise ParseError("empty field in QR payload", pos)
        bad = next((i for i, ch in enumerate(part) if not (ch.isascii() and (ch.isalnum() or ch in "_-"))), None)
        if bad is not None:
            raise ParseError(f"invalid character {part[bad]!r} in QR payload", pos + bad)
        pos += len(part) + 1
    return parts[1], parts[2]


def render_sheet_text(sheet: BallotSheet) -> str:
    """Plain-text layout: (1) login payload, (2) codes per question, (3) confirmation strings."""
    lines = [f"VOTING SHEET  election {sheet.election_id}", "",
             f"(1) Scan to log in: {sheet.qr_payload}", ""]
    for qid, sq in sheet.questions.items():
        choose = "choose 1" if sq.k == 1 else f"choose {sq.k}"
        lines.append(f"(2) {sq.label} [{qid}]  ({choose})")
        width = max(len(str(p)) for p in sq.ptc.plains)
        lines.append(f"    {'Option'.ljust(width)}  Code  Verification")
        for plain, code in sq.ptc.pairs:
            lines.append(f"    {str(plain).ljust(width)}  {code.token.rjust(4)}  {sq.ctvv[code].token}")
        lines.append("")
    lines.append(f"(3) Confirm with:        {sheet.ca.token}")
    lines.append(f"    Confirmation shows:  {sheet.cv.token}")
    return "\n".join(lines) + "\n"
