"""JSON encodings of protocol messages, component records and public material."""

from __future__ import annotations

from typing import Mapping

from .codespace import CodeElement, Permutation
from .control_component import (
    CastAnnouncement,
    CastRequest,
    ConfirmRequest,
    ConfProof,
    CvShare,
    VvShare,
)
from .crypto import DEFAULT_GROUP, ChaumPedersenProof, DecryptionShare, EgCiphertext, SchnorrGroup
from .election import ElectionConfig
from .setup_component import CcInitRecord, PartialBallot, QuestionShare


def ciphertext_list_to_json(cts, group: SchnorrGroup = DEFAULT_GROUP) -> list:
    return [{"question": qid, "ciphertexts": [ct.hex(group) for ct in q_cts]} for qid, q_cts in cts]


def ciphertext_list_from_json(data, group: SchnorrGroup = DEFAULT_GROUP):
    return tuple((q["question"], tuple(EgCiphertext.fromhex(h, group) for h in q["ciphertexts"])) for q in data)


def conf_proof_to_json(proof: ConfProof, group: SchnorrGroup = DEFAULT_GROUP) -> dict:
    return {
        "id": proof.id,
        "ca": proof.ca,
        "ciphertexts": ciphertext_list_to_json(proof.ciphertexts, group),
        "signatures": [{"index": i, "signature": s.hex()} for i, s in proof.signatures],
    }


def conf_proof_from_json(d: dict, group: SchnorrGroup = DEFAULT_GROUP) -> ConfProof:
    return ConfProof(
        d["id"],
        ciphertext_list_from_json(d["ciphertexts"], group),
        int(d["ca"]),
        tuple((int(s["index"]), bytes.fromhex(s["signature"])) for s in d["signatures"]),
    )


def announcement_to_json(a: CastAnnouncement, group: SchnorrGroup = DEFAULT_GROUP) -> dict:
    return {"type": "announce", "index": a.index, "id": a.id,
            "ciphertexts": ciphertext_list_to_json(a.ciphertexts, group), "signature": a.signature.hex()}


def announcement_from_json(d: dict, group: SchnorrGroup = DEFAULT_GROUP) -> CastAnnouncement:
    return CastAnnouncement(int(d["index"]), d["id"], ciphertext_list_from_json(d["ciphertexts"], group),
                            bytes.fromhex(d["signature"]))


def cast_request_to_json(req: CastRequest) -> dict:
    return {"id": req.id, "codes": {qid: list(tokens) for qid, tokens in req.codes.items()}}


def cast_request_from_json(d: dict) -> CastRequest:
    codes = d.get("codes")
    if not isinstance(d.get("id"), str) or not isinstance(codes, dict):
        raise ValueError("cast request needs a string id and a codes object")
    if not all(isinstance(v, list) and all(isinstance(t, str) for t in v) for v in codes.values()):
        raise ValueError("codes must map question ids to lists of code tokens")
    return CastRequest(d["id"], {qid: list(v) for qid, v in codes.items()})


def confirm_request_from_json(d: dict) -> ConfirmRequest:
    if not isinstance(d.get("id"), str) or not isinstance(d.get("ca"), str):
        raise ValueError("confirm request needs string id and ca")
    return ConfirmRequest(d["id"], d["ca"])


def vv_share_to_json(share: VvShare) -> dict:
    """One component's entry in the gateway reply: code token -> vv token."""
    return {"index": share.index,
            "vv": {code.token: vv.token for per_q in share.vv.values() for code, vv in per_q.items()}}


def vv_share_from_json(d: dict, config: ElectionConfig, voter_id: str) -> VvShare:
    """Inverse of ``vv_share_to_json``; code tokens are unique across questions."""
    vv: dict[str, dict[CodeElement, CodeElement]] = {}
    for token, vv_token in d["vv"].items():
        for q in config.eligible_questions(voter_id):
            try:
                code = q.code_space.parse(token)
            except ValueError:
                continue
            vv.setdefault(q.id, {})[code] = config.vv_space.parse(vv_token)
            break
        else:
            raise ValueError(f"code {token!r} belongs to no question")
    return VvShare(int(d["index"]), voter_id, vv)


def cv_share_to_json(share: CvShare) -> dict:
    return {"index": share.index, "cv": share.cv.token}


def decryption_share_to_json(ds: DecryptionShare, group: SchnorrGroup = DEFAULT_GROUP) -> dict:
    pf = ds.proof
    return {
        "index": ds.index,
        "value": group.element_bytes(ds.value).hex(),
        "proof": {
            "commit_g": group.element_bytes(pf.commit_g).hex(),
            "commit_c1": group.element_bytes(pf.commit_c1).hex(),
            "challenge": group.scalar_bytes(pf.challenge).hex(),
            "response": group.scalar_bytes(pf.response).hex(),
        },
    }


def decryption_share_from_json(d: dict, group: SchnorrGroup = DEFAULT_GROUP) -> DecryptionShare:
    # membership is checked by the verifier, so tampered values still load
    pf = d["proof"]
    return DecryptionShare(
        int(d["index"]),
        int(d["value"], 16),
        ChaumPedersenProof(int(pf["commit_g"], 16), int(pf["commit_c1"], 16),
                           int(pf["challenge"], 16), int(pf["response"], 16)),
    )


# -- component records ------------------------------------------------------------

def partial_to_json(b: PartialBallot) -> dict:
    return {
        "questions": {
            qid: {"ctvv": {c.token: v.token for c, v in share.ctvv.items()}, "perm": list(share.perm.mapping)}
            for qid, share in b.questions.items()
        },
        "ca": b.ca.token,
        "cv": b.cv.token,
    }


def partial_from_json(d: dict, config: ElectionConfig) -> PartialBallot:
    questions = {}
    for qid, share in d["questions"].items():
        space = config.question(qid).code_space
        ctvv = {space.parse(c): config.vv_space.parse(v) for c, v in share["ctvv"].items()}
        questions[qid] = QuestionShare(ctvv, Permutation(tuple(share["perm"])))
    return PartialBallot(questions, config.ca_space.parse(d["ca"]), config.cv_space.parse(d["cv"]))


def cte_to_json(cte, group: SchnorrGroup = DEFAULT_GROUP) -> dict:
    return {qid: {c.token: ct.hex(group) for c, ct in per_q.items()} for qid, per_q in cte.items()}


def cte_from_json(d: dict, config: ElectionConfig, group: SchnorrGroup = DEFAULT_GROUP):
    return {qid: {config.question(qid).code_space.parse(c): EgCiphertext.fromhex(h, group)
                  for c, h in per_q.items()} for qid, per_q in d.items()}


def record_to_json(rec: CcInitRecord, group: SchnorrGroup = DEFAULT_GROUP) -> dict:
    return {"id": rec.id, "index": rec.index, "partial": partial_to_json(rec.partial),
            "hca": rec.hca.hex(), "cte": cte_to_json(rec.cte, group)}


def record_from_json(d: dict, config: ElectionConfig, group: SchnorrGroup = DEFAULT_GROUP) -> CcInitRecord:
    return CcInitRecord(d["id"], int(d["index"]), partial_from_json(d["partial"], config),
                        bytes.fromhex(d["hca"]), cte_from_json(d["cte"], config, group))


def randomness_to_json(randomness) -> dict:
    return {qid: {c.token: format(r, "x") for c, r in per_q.items()} for qid, per_q in randomness.items()}


def randomness_from_json(d: dict, config: ElectionConfig) -> dict:
    return {qid: {config.question(qid).code_space.parse(c): int(r, 16) for c, r in per_q.items()}
            for qid, per_q in d.items()}


def int_map_to_json(values: Mapping[int, int], group: SchnorrGroup = DEFAULT_GROUP) -> dict:
    return {str(i): group.element_bytes(v).hex() for i, v in sorted(values.items())}


def int_map_from_json(d: dict, group: SchnorrGroup = DEFAULT_GROUP) -> dict[int, int]:
    return {int(i): group.element_from_bytes(bytes.fromhex(v)) for i, v in d.items()}
