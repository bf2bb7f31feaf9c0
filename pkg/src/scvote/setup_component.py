"""Ballot generation: partial ballots, merging into sheets, and the records each
control component receives. Also the audit procedure for the setup component.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import crypto
from .codespace import (
    CodeElement,
    Permutation,
    PlainToCode,
    combine_shares,
    lookup_plain,
    perm_apply_pairs,
    perm_product,
    perm_random,
)
from .crypto import DEFAULT_GROUP, EgCiphertext, SchnorrGroup
from .election import ElectionConfig, Question
from .errors import AbortError

MODES = ("central", "cc-generated")


@dataclass(frozen=True)
class QuestionShare:
    ctvv: dict[CodeElement, CodeElement]
    perm: Permutation


@dataclass(frozen=True)
class PartialBallot:
    questions: dict[str, QuestionShare]
    ca: CodeElement
    cv: CodeElement


@dataclass(frozen=True)
class SheetQuestion:
    label: str
    k: int
    ctvv: dict[CodeElement, CodeElement]
    ptc: PlainToCode


@dataclass(frozen=True)
class BallotSheet:
    election_id: str
    id: str
    questions: dict[str, SheetQuestion]
    ca: CodeElement
    cv: CodeElement

    @property
    def qr_payload(self) -> str:
        return f"scv1:{self.election_id}:{self.id}"


@dataclass(frozen=True)
class CcInitRecord:
    id: str
    index: int
    partial: PartialBallot
    hca: bytes
    cte: dict[str, dict[CodeElement, EgCiphertext]]


@dataclass
class SetupOutput:
    config: ElectionConfig
    public_key: int
    sheets: dict[str, BallotSheet]
    records: dict[int, dict[str, CcInitRecord]]
    # encryption randomness per Id; sealed at the setup component, opened only for audits
    audit_randomness: dict[str, dict[str, dict[CodeElement, int]]] = field(repr=False)

    @property
    def hca_table(self) -> dict[str, bytes]:
        return {vid: rec.hca for vid, rec in self.records[1].items()}

    @property
    def cte_table(self) -> dict[str, dict[str, dict[CodeElement, EgCiphertext]]]:
        return {vid: rec.cte for vid, rec in self.records[1].items()}


def hash_ca(election_id: str, voter_id: str, ca: CodeElement | int) -> bytes:
    value = ca.value if isinstance(ca, CodeElement) else ca
    return crypto.digest(crypto.encode_fields(crypto.TAG_CA, election_id, voter_id, value))


def gen_partial_ballot(config: ElectionConfig, questions: Sequence[Question], rng: random.Random) -> PartialBallot:
    shares = {}
    for q in questions:
        ctvv = {c: config.vv_space.random(rng) for c in q.code_space}
        shares[q.id] = QuestionShare(ctvv, perm_random(len(q.options), rng))
    return PartialBallot(shares, config.ca_space.random(rng), config.cv_space.random(rng))


def cc_seed(seed, index: int) -> str:
    """Seed of component ``index``'s partial-ballot stream derived from an election seed."""
    return f"{seed}/cc{index}"


def gen_cc_partials(config: ElectionConfig, seed) -> dict[str, PartialBallot]:
    """All partial ballots one component contributes, one dedicated stream per Id."""
    return {
        v.id: gen_partial_ballot(config, config.eligible_questions(v.id), crypto.derive_rng(seed, "partial", v.id))
        for v in config.all_voters
    }


def merge_partial_ballots(partials: Sequence[PartialBallot], config: ElectionConfig,
                          voter_id: str) -> BallotSheet:
    if not partials:
        raise AbortError("no partial ballots to merge")
    qids = list(partials[0].questions)
    for b in partials:
        if list(b.questions) != qids:
            raise AbortError("partial ballots cover different questions")
        if b.ca.space != config.ca_space or b.cv.space != config.cv_space:
            raise AbortError("partial ballot uses the wrong code space")
    questions = {}
    for qid in qids:
        q = config.question(qid)
        codes = list(q.code_space)
        for b in partials:
            share = b.questions[qid]
            if set(share.ctvv) != set(codes) or share.perm.size != len(codes):
                raise AbortError(f"partial ballot for {qid!r} does not cover the code set")
            if any(v.space != config.vv_space for v in share.ctvv.values()):
                raise AbortError("vote verification share in the wrong space")
        ctvv = {c: combine_shares(b.questions[qid].ctvv[c] for b in partials) for c in codes}
        perm = perm_product([b.questions[qid].perm for b in partials])
        questions[qid] = SheetQuestion(q.label, q.k, ctvv, perm_apply_pairs(q.base_ptc, perm))
    return BallotSheet(
        config.election_id,
        voter_id,
        questions,
        combine_shares(b.ca for b in partials),
        combine_shares(b.cv for b in partials),
    )


def encrypt_code_table(sheet: BallotSheet, config: ElectionConfig, public_key: int, rng: random.Random,
                       group: SchnorrGroup = DEFAULT_GROUP, randomness=None):
    """CtE for one sheet: each code maps to an encryption of its plain option's counter."""
    cte, used = {}, {}
    base = config.counter_base
    for qid, sq in sheet.questions.items():
        q = config.question(qid)
        cte[qid], used[qid] = {}, {}
        for c in q.code_space:
            r = randomness[qid][c] if randomness is not None else group.random_scalar(rng)
            m = crypto.counter_encode(q.option_index(lookup_plain(sq.ptc, c)), base, group)
            cte[qid][c] = crypto.eg_encrypt(public_key, m, r, group)
            used[qid][c] = r
    return cte, used


def build_cc_record(sheet: BallotSheet, partial: PartialBallot, index: int, public_key: int,
                    config: ElectionConfig, rng: random.Random, group: SchnorrGroup = DEFAULT_GROUP):
    cte, randomness = encrypt_code_table(sheet, config, public_key, rng, group)
    return CcInitRecord(sheet.id, index, partial, hash_ca(config.election_id, sheet.id, sheet.ca), cte), randomness


def run_setup(config: ElectionConfig, public_key: int, *, seed, mode: str = "central",
              cc_partials: Sequence[dict[str, PartialBallot]] | None = None,
              group: SchnorrGroup = DEFAULT_GROUP) -> SetupOutput:
    """Generate every sheet and every component's initial record.

    In ``central`` mode the setup component draws the partial ballots itself,
    one stream per (component, Id) derived from ``seed``. In ``cc-generated``
    mode the components supply them (``cc_partials[i - 1]``) and the setup
    component only merges and encrypts, deterministically from ``seed``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown setup mode {mode!r}")
    config = config.with_padding(crypto.derive_rng(seed, "padding"))
    if mode == "central":
        cc_partials = [gen_cc_partials(config, cc_seed(seed, i)) for i in range(1, config.ncc + 1)]
    elif cc_partials is None or len(cc_partials) != config.ncc:
        raise ValueError("cc-generated mode needs one partial set per component")

    sheets, audit = {}, {}
    records: dict[int, dict[str, CcInitRecord]] = {i: {} for i in range(1, config.ncc + 1)}
    for voter in config.all_voters:
        vid = voter.id
        if vid in sheets:
            raise AbortError(f"duplicate voter id {vid!r}")
        partials = [cc_partials[i][vid] for i in range(config.ncc)]
        sheet = merge_partial_ballots(partials, config, vid)
        cte, randomness = encrypt_code_table(sheet, config, public_key, crypto.derive_rng(seed, "enc", vid), group)
        hca = hash_ca(config.election_id, vid, sheet.ca)
        sheets[vid] = sheet
        audit[vid] = randomness
        for i in range(1, config.ncc + 1):
            records[i][vid] = CcInitRecord(vid, i, partials[i - 1], hca, cte)
    return SetupOutput(config, public_key, sheets, records, audit)


def select_audit_ids(config: ElectionConfig, choices: Sequence[Iterable[str]],
                     synced: Iterable[str] = ()) -> frozenset[str]:
    """Union of every component's audit picks; must add up to the audit padding."""
    chosen = frozenset().union(*[set(c) for c in choices]) if choices else frozenset()
    known = {v.id for v in config.all_voters}
    if not chosen <= known:
        raise AbortError(f"unknown ids selected for audit: {sorted(chosen - known)}")
    if len(chosen) != config.audit_padding:
        raise AbortError(f"audit selects {len(chosen)} ids, padding is {config.audit_padding}")
    used = chosen & set(synced)
    if used:
        raise AbortError(f"ids already used for casting cannot be audited: {sorted(used)}")
    return chosen


def verify_audit(config: ElectionConfig, voter_id: str, partials: Sequence[PartialBallot], sheet: BallotSheet,
                 hca: bytes, cte, randomness, public_key: int,
                 group: SchnorrGroup = DEFAULT_GROUP) -> list[str]:
    """Recompute an audited Id's material from the revealed partials; list mismatching fields."""
    try:
        expected = merge_partial_ballots(partials, config, voter_id)
    except AbortError:
        return ["partials"]
    mismatches = []
    if set(expected.questions) != set(sheet.questions):
        return ["questions"]
    if any(expected.questions[q].ctvv != sheet.questions[q].ctvv for q in expected.questions):
        mismatches.append("CtVV")
    if any(expected.questions[q].ptc != sheet.questions[q].ptc for q in expected.questions):
        mismatches.append("PtC")
    if expected.ca != sheet.ca:
        mismatches.append("CA")
    if expected.cv != sheet.cv:
        mismatches.append("CV")
    if hash_ca(config.election_id, voter_id, expected.ca) != hca:
        mismatches.append("hCA")
    try:
        expected_cte, _ = encrypt_code_table(expected, config, public_key, None, group, randomness=randomness)
    except (KeyError, TypeError):
        mismatches.append("CtE")
    else:
        if expected_cte != cte:
            mismatches.append("CtE")
    return mismatches
