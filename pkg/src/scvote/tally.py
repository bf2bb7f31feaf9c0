"""Homomorphic tally of the agreed votes and the stand-alone transcript verifier."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import crypto, wire
from .control_component import ConfProof, verify_conf_proof
from .crypto import DEFAULT_GROUP, DecryptionShare, EgCiphertext, SchnorrGroup
from .election import ElectionConfig
from .errors import DecryptionShareError, TallyIntegrityError

TRANSCRIPT_FORMAT = "scv-transcript/1"


@dataclass
class QuestionTally:
    id: str
    aggregate: EgCiphertext
    shares: list[DecryptionShare]
    counts: dict[str, int]


@dataclass
class TallyTranscript:
    election_id: str
    params_digest: bytes
    group: str
    counter_base: int
    entries: list[ConfProof]
    questions: list[QuestionTally]
    excluded: list[str] = field(default_factory=list)

    def counts(self) -> dict[str, dict[str, int]]:
        return {q.id: dict(q.counts) for q in self.questions}

    def to_dict(self, group: SchnorrGroup = DEFAULT_GROUP) -> dict:
        return {
            "format": TRANSCRIPT_FORMAT,
            "election_id": self.election_id,
            "params_digest": self.params_digest.hex(),
            "group": self.group,
            "counter_base": self.counter_base,
            "excluded": list(self.excluded),
            "entries": [wire.conf_proof_to_json(e, group) for e in self.entries],
            "questions": [
                {
                    "id": q.id,
                    "aggregate": q.aggregate.hex(group),
                    "shares": [wire.decryption_share_to_json(s, group) for s in q.shares],
                    "counts": dict(q.counts),
                }
                for q in self.questions
            ],
        }

    def to_json(self, group: SchnorrGroup = DEFAULT_GROUP) -> str:
        return json.dumps(self.to_dict(group), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict, group: SchnorrGroup = DEFAULT_GROUP) -> TallyTranscript:
        if d.get("format") != TRANSCRIPT_FORMAT:
            raise ValueError(f"unsupported transcript format {d.get('format')!r}")
        questions = [
            QuestionTally(q["id"], _loose_ciphertext(q["aggregate"]),
                          [wire.decryption_share_from_json(s, group) for s in q["shares"]],
                          {k: int(v) for k, v in q["counts"].items()})
            for q in d["questions"]
        ]
        entries = [
            crypto_free_proof(e) for e in d["entries"]
        ]
        return cls(d["election_id"], bytes.fromhex(d["params_digest"]), d["group"], int(d["counter_base"]),
                   entries, questions, list(d.get("excluded", [])))

    @classmethod
    def from_json(cls, text: str, group: SchnorrGroup = DEFAULT_GROUP) -> TallyTranscript:
        return cls.from_dict(json.loads(text), group)


def _loose_ciphertext(text: str) -> EgCiphertext:
    """Parse without membership checks; the verifier reports bad values instead of crashing."""
    raw = bytes.fromhex(text)
    half = len(raw) // 2
    return EgCiphertext(int.from_bytes(raw[:half], "big"), int.from_bytes(raw[half:], "big"))


def crypto_free_proof(d: dict) -> ConfProof:
    return ConfProof(
        d["id"],
        tuple((q["question"], tuple(_loose_ciphertext(h) for h in q["ciphertexts"])) for q in d["ciphertexts"]),
        int(d["ca"]),
        tuple((int(s["index"]), bytes.fromhex(s["signature"])) for s in d["signatures"]),
    )


def tally_context(params_digest: bytes) -> bytes:
    return b"scv-tally/" + params_digest + b"/"


def aggregate(entries: Iterable[ConfProof], qid: str, group: SchnorrGroup = DEFAULT_GROUP) -> EgCiphertext:
    """Component-wise product of every ciphertext cast for ``qid``."""
    return crypto.eg_product((ct for e in entries for q, cts in e.ciphertexts if q == qid for ct in cts), group)


def _entry_count(entries: Iterable[ConfProof], qid: str) -> int:
    return sum(1 for e in entries for q, _ in e.ciphertexts if q == qid)


def run_tally(components: Sequence, votes_agre: Sequence[ConfProof], config: ElectionConfig,
              eg_publics: Mapping[int, int], exclude: Iterable[str] = (),
              group: SchnorrGroup = DEFAULT_GROUP) -> TallyTranscript:
    """Aggregate, decrypt with every component's proven share, and decode the counts."""
    excluded = sorted(set(exclude))
    entries = [e for e in votes_agre if e.id not in excluded]
    digest = config.digest()
    context = tally_context(digest)
    aggregates = {q.id: aggregate(entries, q.id, group) for q in config.questions}
    # barrier: every component contributes before anything is combined
    shares_by_cc = {cc.index: cc.decryption_shares(aggregates, context) for cc in components}
    questions = []
    for q in config.questions:
        shares = [shares_by_cc[i][q.id] for i in sorted(shares_by_cc)]
        m = crypto.eg_combine(aggregates[q.id], shares, dict(eg_publics), context + q.id.encode(), group)
        counts = crypto.counter_decode(m, config.counter_base, len(q.options), _entry_count(entries, q.id), group)
        questions.append(QuestionTally(q.id, aggregates[q.id], shares, dict(zip(q.options, counts))))
    return TallyTranscript(config.election_id, digest, group.name, config.counter_base, entries, questions, excluded)


def cte_commitments(cte_table) -> dict[str, dict[str, set[str]]]:
    """Per Id and question, digests of the valid vote ciphertexts (without their codes)."""
    return {vid: {qid: {hashlib.sha256(ct.to_bytes()).hexdigest() for ct in per_q.values()}
                  for qid, per_q in cte.items()} for vid, cte in cte_table.items()}


def verify_transcript(transcript: TallyTranscript, config: ElectionConfig, public_keys: Mapping[int, bytes],
                      eg_publics: Mapping[int, int], hca_table: Mapping[str, bytes],
                      cte_commits: Mapping[str, Mapping[str, set[str]]] | None = None,
                      group: SchnorrGroup = DEFAULT_GROUP) -> list[str]:
    """Re-check a transcript from public data only; returns ``check:detail`` failure strings."""
    failures = []
    if transcript.group != group.name:
        failures.append(f"group:{transcript.group}")
    if transcript.election_id != config.election_id or transcript.params_digest != config.digest():
        failures.append("params:election definition mismatch")
    if transcript.counter_base != config.counter_base:
        failures.append(f"params:counter base {transcript.counter_base}")

    seen = set()
    valid_entries = []
    for e in transcript.entries:
        if e.id in seen:
            failures.append(f"duplicate-id:{e.id}")
            continue
        seen.add(e.id)
        if e.id in transcript.excluded:
            failures.append(f"excluded-entry:{e.id}")
        bad_ct = [ct for _, cts in e.ciphertexts for ct in cts if not ct.is_valid(group)]
        if bad_ct:
            failures.append(f"ciphertext:{e.id}")
            continue
        for f in verify_conf_proof(e, config.election_id, public_keys, hca_table, group):
            failures.append(f"{f.split(':')[0]}:{e.id}" + (f":{f.split(':')[1]}" if ":" in f else ""))
        failures.extend(_check_ballot_shape(e, config, cte_commits))
        valid_entries.append(e)

    by_id = {q.id: q for q in transcript.questions}
    if set(by_id) != {q.id for q in config.questions}:
        failures.append("questions:question set mismatch")
    context = tally_context(config.digest())
    for q in config.questions:
        qt = by_id.get(q.id)
        if qt is None:
            continue
        expected = aggregate(transcript.entries, q.id, group)
        if expected != qt.aggregate:
            failures.append(f"aggregate:{q.id}")
        if not qt.aggregate.is_valid(group) and qt.aggregate != crypto.ONE_CIPHERTEXT:
            failures.append(f"aggregate-invalid:{q.id}")
            continue
        share_ok = True
        indices = [s.index for s in qt.shares]
        for i in sorted(eg_publics):
            if indices.count(i) != 1:
                failures.append(f"share-missing:{q.id}:{i}")
                share_ok = False
        for s in qt.shares:
            if s.index not in eg_publics:
                failures.append(f"share-unknown:{q.id}:{s.index}")
                share_ok = False
            elif not crypto.verify_decryption_share(s, qt.aggregate, eg_publics[s.index],
                                                    context + q.id.encode(), group):
                failures.append(f"share:{q.id}:{s.index}")
                share_ok = False
        if not share_ok:
            continue
        try:
            m = crypto.eg_combine(qt.aggregate, qt.shares, dict(eg_publics), context + q.id.encode(), group)
            counts = crypto.counter_decode(m, config.counter_base, len(q.options),
                                           _entry_count(transcript.entries, q.id), group)
        except (DecryptionShareError, TallyIntegrityError, ValueError):
            failures.append(f"decode:{q.id}")
            continue
        if dict(zip(q.options, counts)) != qt.counts:
            failures.append(f"counts:{q.id}")
        if sum(qt.counts.values()) != q.k * _entry_count(transcript.entries, q.id):
            failures.append(f"conservation:{q.id}")
    return failures


def _check_ballot_shape(e: ConfProof, config: ElectionConfig, cte_commits) -> list[str]:
    try:
        eligible = {q.id: q for q in config.eligible_questions(e.id)}
    except KeyError:
        return [f"unknown-id:{e.id}"]
    failures = []
    qids = [qid for qid, _ in e.ciphertexts]
    if sorted(qids) != sorted(eligible):
        failures.append(f"eligibility:{e.id}")
    for qid, cts in e.ciphertexts:
        if qid in eligible and len(set(cts)) != eligible[qid].k:
            failures.append(f"choice-count:{e.id}:{qid}")
        if cte_commits is not None:
            allowed = cte_commits.get(e.id, {}).get(qid, set())
            if any(hashlib.sha256(ct.to_bytes()).hexdigest() not in allowed for ct in cts):
                failures.append(f"cte:{e.id}:{qid}")
    return failures
