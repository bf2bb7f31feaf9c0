"""Control component state machine for casting, confirming and agreeing on votes."""

from __future__ import annotations

import random
import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import crypto
from .codespace import CodeElement
from .crypto import DEFAULT_GROUP, EgCiphertext, EgKeyShare, SchnorrGroup, SigKeyPair
from .election import ElectionConfig
from .errors import AbortError, IntegrityError, ParseError, PhaseError, Rejection
from .setup_component import CcInitRecord, hash_ca

# (question id, ciphertexts sorted by encoding) per eligible question, in election order
CiphertextList = tuple[tuple[str, tuple[EgCiphertext, ...]], ...]


@dataclass(frozen=True)
class CastRequest:
    id: str
    codes: Mapping[str, Sequence[str]]


@dataclass(frozen=True)
class ConfirmRequest:
    id: str
    ca: str


@dataclass(frozen=True)
class CastAnnouncement:
    index: int
    id: str
    ciphertexts: CiphertextList
    signature: bytes


@dataclass(frozen=True)
class VvShare:
    index: int
    id: str
    vv: dict[str, dict[CodeElement, CodeElement]]


@dataclass(frozen=True)
class CvShare:
    index: int
    id: str
    cv: CodeElement


@dataclass(frozen=True)
class ConfProof:
    """A confirmed vote with its evidence: the CA and every component's signature."""

    id: str
    ciphertexts: CiphertextList
    ca: int
    signatures: tuple[tuple[int, bytes], ...]

    @property
    def signature_map(self) -> dict[int, bytes]:
        return dict(self.signatures)


@dataclass
class CastEntry:
    codes: dict[str, tuple[CodeElement, ...]]
    ciphertexts: CiphertextList
    signatures: dict[int, bytes]


@dataclass
class _Pending:
    codes: dict[str, tuple[CodeElement, ...]]
    ciphertexts: CiphertextList
    message: bytes
    signature: bytes


def cast_message(election_id: str, voter_id: str, ciphertexts: CiphertextList,
                 group: SchnorrGroup = DEFAULT_GROUP) -> bytes:
    per_question = [crypto.encode_fields(crypto.TAG_CIPHERTEXT, qid, *[ct.to_bytes(group) for ct in cts])
                    for qid, cts in ciphertexts]
    return crypto.encode_fields(crypto.TAG_CAST, election_id, voter_id, *per_question)


def canonical_ciphertexts(cts: Mapping[str, Iterable[EgCiphertext]], order: Sequence[str],
                          group: SchnorrGroup = DEFAULT_GROUP) -> CiphertextList:
    return tuple((qid, tuple(sorted(cts[qid], key=lambda ct: ct.to_bytes(group)))) for qid in order if qid in cts)


def validate_cast_request(config: ElectionConfig, req: CastRequest,
                          retired: Iterable[str] = ()) -> dict[str, tuple[CodeElement, ...]]:
    """Checks that need only public data: known Id, codes in range, k codes per eligible question."""
    try:
        eligible = config.eligible_questions(req.id)
    except KeyError:
        raise Rejection("unknown-id", req.id) from None
    if req.id in set(retired):
        raise Rejection("unknown-id", f"{req.id} is reserved for audit")
    eligible_ids = {q.id for q in eligible}
    for qid in req.codes:
        if qid not in eligible_ids:
            raise Rejection("bad-code", f"not eligible for question {qid!r}")
    parsed = {}
    for q in eligible:
        tokens = list(req.codes.get(q.id, ()))
        codes = []
        for token in tokens:
            try:
                codes.append(q.code_space.parse(token))
            except ParseError as exc:
                raise Rejection("bad-code", f"{q.id}: {exc}") from None
        if len(set(codes)) != len(codes) or len(codes) != q.k:
            raise Rejection("bad-count", f"{q.id}: need {q.k} distinct codes, got {len(tokens)}")
        parsed[q.id] = tuple(sorted(codes, key=lambda c: c.value))
    return parsed


def verify_conf_proof(proof: ConfProof, election_id: str, public_keys: Mapping[int, bytes],
                      hca_table: Mapping[str, bytes], group: SchnorrGroup = DEFAULT_GROUP) -> list[str]:
    """Failed checks of a proof (empty when it satisfies the agreement rule on its own)."""
    failures = []
    if proof.id not in hca_table:
        return ["unknown-id"]
    if hash_ca(election_id, proof.id, proof.ca) != hca_table[proof.id]:
        failures.append("ca")
    message = cast_message(election_id, proof.id, proof.ciphertexts, group)
    sigs = proof.signature_map
    for i in sorted(public_keys):
        if i not in sigs or not crypto.verify(public_keys[i], message, sigs[i]):
            failures.append(f"signature:{i}")
    return failures


def compute_votes_agre(proof_sets: Iterable[Iterable[ConfProof]], election_id: str,
                       public_keys: Mapping[int, bytes], hca_table: Mapping[str, bytes],
                       group: SchnorrGroup = DEFAULT_GROUP) -> list[ConfProof]:
    """Entries whose CA is known and which carry a valid signature from every component.

    Evidence may be spread over several exports; for each Id and ciphertext
    list the valid signatures are pooled and the smallest encoding per signer
    kept, so the result is canonical regardless of who sent what.
    """
    known_ca: dict[str, int] = {}
    sigs: dict[tuple[str, CiphertextList], dict[int, bytes]] = defaultdict(dict)
    for proofs in proof_sets:
        for proof in proofs:
            if proof.id not in hca_table:
                continue
            if hash_ca(election_id, proof.id, proof.ca) == hca_table[proof.id]:
                known_ca[proof.id] = proof.ca
            message = cast_message(election_id, proof.id, proof.ciphertexts, group)
            pool = sigs[(proof.id, proof.ciphertexts)]
            for i, sig in proof.signatures:
                if i in public_keys and crypto.verify(public_keys[i], message, sig):
                    if i not in pool or sig < pool[i]:
                        pool[i] = sig
    agreed: dict[str, ConfProof] = {}
    for (vid, cts), pool in sorted(sigs.items(), key=lambda kv: kv[0][0]):
        if vid not in known_ca or set(pool) != set(public_keys):
            continue
        if vid in agreed:
            raise IntegrityError(f"conflicting fully signed entries for id {vid}")
        agreed[vid] = ConfProof(vid, cts, known_ca[vid], tuple(sorted(pool.items())))
    return [agreed[vid] for vid in sorted(agreed)]


class ControlComponent:
    """One control component. Honest behaviour; adversarial variants subclass it."""

    def __init__(self, index: int, config: ElectionConfig, sig_key: SigKeyPair, public_keys: Mapping[int, bytes],
                 eg_share: EgKeyShare, records: Mapping[str, CcInitRecord],
                 group: SchnorrGroup = DEFAULT_GROUP, rng: random.Random | None = None):
        self.index = index
        self.config = config
        self.sig_key = sig_key
        self.public_keys = dict(public_keys)
        self.eg_share = eg_share
        self.records = dict(records)
        self.group = group
        self.rng = rng or random.SystemRandom()
        self.sync: set[str] = set()
        self.cast: dict[str, CastEntry] = {}
        self.conf: dict[str, ConfProof] = {}
        self.retired: set[str] = set()
        self.closed = False
        self.events: list[dict] = []
        # called with every new event, e.g. to append it to a log file
        self.event_sink = None
        self._pending: dict[str, _Pending] = {}
        self._guard = threading.Lock()
        self._id_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)

    def _lock(self, voter_id: str) -> threading.Lock:
        with self._guard:
            return self._id_locks[voter_id]

    def _require_open(self):
        if self.closed:
            raise PhaseError("voting phase is closed")

    def _log(self, **event):
        self.events.append(event)
        if self.event_sink is not None:
            self.event_sink(event)

    @property
    def hca_table(self) -> dict[str, bytes]:
        return {vid: rec.hca for vid, rec in self.records.items()}

    # -- casting

    def cast_begin(self, req: CastRequest) -> CastAnnouncement:
        self._require_open()
        with self._lock(req.id):
            codes = validate_cast_request(self.config, req, self.retired)
            if req.id not in self.records:
                raise Rejection("unknown-id", req.id, self.index)
            if req.id in self.sync:
                raise Rejection("duplicate-cast", req.id, self.index)
            self.sync.add(req.id)
            self._log(event="sync", id=req.id)
            ciphertexts = self._ciphertexts_for(req.id, codes)
            message = cast_message(self.config.election_id, req.id, ciphertexts, self.group)
            signature = crypto.sign(self.sig_key, message, self.index).value
            self._pending[req.id] = _Pending(codes, ciphertexts, message, signature)
            return CastAnnouncement(self.index, req.id, ciphertexts, signature)

    def _ciphertexts_for(self, voter_id: str, codes: Mapping[str, Sequence[CodeElement]]) -> CiphertextList:
        cte = self.records[voter_id].cte
        chosen = {qid: [cte[qid][c] for c in cs] for qid, cs in codes.items()}
        return canonical_ciphertexts(chosen, [q.id for q in self.config.questions], self.group)

    def cast_collect(self, voter_id: str, announcements: Iterable[CastAnnouncement]) -> VvShare:
        """Check every peer signed the same vote, record it, and release this component's vv shares."""
        self._require_open()
        with self._lock(voter_id):
            pending = self._pending.pop(voter_id, None)
            if pending is None:
                raise Rejection("not-cast", f"no cast in progress for {voter_id}", self.index)
            signatures = {self.index: pending.signature}
            for ann in announcements:
                j = ann.index
                if j == self.index or j not in self.public_keys or ann.id != voter_id or j in signatures:
                    continue
                if crypto.verify(self.public_keys[j], pending.message, ann.signature):
                    signatures[j] = ann.signature
            missing = sorted(set(self.public_keys) - set(signatures))
            if missing:
                raise Rejection("peer-signature-failure", f"no valid signature from {missing}", self.index)
            self._record_cast(voter_id, CastEntry(pending.codes, pending.ciphertexts, signatures))
            return self._vv_share(voter_id, pending.codes)

    def _record_cast(self, voter_id: str, entry: CastEntry):
        self.cast[voter_id] = entry
        self._log(event="cast", id=voter_id,
                  codes={qid: [c.token for c in cs] for qid, cs in entry.codes.items()},
                  signatures={str(i): s.hex() for i, s in sorted(entry.signatures.items())})

    def _vv_share(self, voter_id: str, codes: Mapping[str, Sequence[CodeElement]]) -> VvShare:
        partial = self.records[voter_id].partial
        return VvShare(self.index, voter_id,
                       {qid: {c: partial.questions[qid].ctvv[c] for c in cs} for qid, cs in codes.items()})

    # -- confirming

    def confirm(self, req: ConfirmRequest) -> CvShare:
        self._require_open()
        with self._lock(req.id):
            entry = self.cast.get(req.id)
            if entry is None:
                raise Rejection("not-cast", req.id, self.index)
            try:
                ca = self.config.ca_space.parse(req.ca)
            except ParseError:
                raise Rejection("bad-ca", "malformed confirm authentication", self.index) from None
            if hash_ca(self.config.election_id, req.id, ca) != self.records[req.id].hca:
                raise Rejection("bad-ca", "confirm authentication does not match", self.index)
            if req.id not in self.conf:
                self.conf[req.id] = ConfProof(req.id, entry.ciphertexts, ca.value,
                                              tuple(sorted(entry.signatures.items())))
                self._log(event="conf", id=req.id, ca=ca.value)
            return CvShare(self.index, req.id, self.records[req.id].partial.cv)

    # -- audit, closing, agreement

    def retire(self, ids: Iterable[str]):
        """Withdraw audited Ids from voting."""
        ids = set(ids)
        used = ids & self.sync
        if used:
            raise AbortError(f"ids already used for casting: {sorted(used)}")
        self.retired |= ids
        if ids:
            self._log(event="retire", ids=sorted(ids))

    def close(self):
        if not self.closed:
            self.closed = True
            self._pending.clear()
            self._log(event="close")

    def export_conf(self) -> list[ConfProof]:
        if not self.closed:
            raise PhaseError("export requires a closed voting phase")
        return [self.conf[vid] for vid in sorted(self.conf)]

    def votes_agre(self, received: Iterable[Iterable[ConfProof]]) -> list[ConfProof]:
        if not self.closed:
            raise PhaseError("agreement requires a closed voting phase")
        return compute_votes_agre([self.export_conf(), *received], self.config.election_id,
                                  self.public_keys, self.hca_table, self.group)

    def decryption_shares(self, aggregates: Mapping[str, EgCiphertext], context: bytes):
        if not self.closed:
            raise PhaseError("decryption requires a closed voting phase")
        return {qid: crypto.eg_partial_decrypt(self.eg_share, ct, None, context + qid.encode(), self.group)
                for qid, ct in aggregates.items()}

    # -- persistence

    def replay(self, events: Iterable[dict]):
        """Rebuild mutable state from a log written by ``events``."""
        for ev in events:
            kind = ev["event"]
            vid = ev.get("id")
            if kind == "sync":
                self.sync.add(vid)
            elif kind == "cast":
                codes = {qid: tuple(self.config.question(qid).code_space.parse(t) for t in tokens)
                         for qid, tokens in ev["codes"].items()}
                self.cast[vid] = CastEntry(codes, self._ciphertexts_for(vid, codes),
                                           {int(i): bytes.fromhex(s) for i, s in ev["signatures"].items()})
            elif kind == "conf":
                entry = self.cast[vid]
                self.conf[vid] = ConfProof(vid, entry.ciphertexts, int(ev["ca"]),
                                           tuple(sorted(entry.signatures.items())))
            elif kind == "retire":
                self.retired |= set(ev["ids"])
            elif kind == "close":
                self.closed = True
            else:
                raise ValueError(f"unknown event {kind!r}")
            self.events.append(ev)
