"""Election definition: questions, voters and eligibility, code-space sizes."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from . import crypto
from .errors import ConfigError
from .codespace import BASE32_ALPHABET, CodeSpace, PlainToCode

SCHEMA = "scv-election/1"
DEFAULT_ZV = 10**4
DEFAULT_ZA = 2**40
_TOKEN_RE = re.compile(r"^[A-Za-z0-9_-]+$")


@dataclass(frozen=True)
class Question:
    id: str
    label: str
    options: tuple[str, ...]
    k: int = 1
    offset: int = 0

    @property
    def code_space(self) -> CodeSpace:
        return CodeSpace(len(self.options), "code", self.offset)

    @property
    def base_ptc(self) -> PlainToCode:
        return PlainToCode.base(self.options, self.code_space)

    def option_index(self, option: str) -> int:
        return self.options.index(option)


@dataclass(frozen=True)
class Voter:
    id: str
    eligible: tuple[str, ...]


@dataclass
class ElectionConfig:
    election_id: str
    questions: list[Question]
    voters: list[Voter]
    ncc: int = 2
    zv: int = DEFAULT_ZV
    za: int = DEFAULT_ZA
    audit_padding: int = 0
    padding_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not _TOKEN_RE.match(self.election_id):
            raise ValueError(f"bad election id {self.election_id!r}")
        if self.ncc < 1:
            raise ValueError("need at least one control component")
        offset = 0
        fixed = []
        for q in self.questions:
            if len(q.options) < 2 or len(set(q.options)) != len(q.options):
                raise ValueError(f"question {q.id!r} needs at least two distinct options")
            if not 1 <= q.k <= len(q.options):
                raise ValueError(f"question {q.id!r}: k={q.k} out of range")
            fixed.append(Question(q.id, q.label, tuple(q.options), q.k, offset))
            offset += len(q.options)
        self.questions = fixed
        qids = [q.id for q in self.questions]
        if not qids or len(set(qids)) != len(qids):
            raise ValueError("question ids must be unique and nonempty")
        ids = [v.id for v in self.voters] + list(self.padding_ids)
        if len(set(ids)) != len(ids):
            raise ValueError("voter ids must be unique")
        for v in self.voters:
            if not _TOKEN_RE.match(v.id):
                raise ValueError(f"bad voter id {v.id!r}")
            if not v.eligible or not set(v.eligible) <= set(qids):
                raise ValueError(f"voter {v.id!r} has invalid eligibility")
        if self.audit_padding < 0:
            raise ValueError("audit padding must be nonnegative")
        if self.padding_ids and len(self.padding_ids) != self.audit_padding:
            raise ValueError("padding id count does not match audit padding")

    # -- spaces
    @cached_property
    def vv_space(self) -> CodeSpace:
        return CodeSpace(self.zv, "decimal")

    @cached_property
    def cv_space(self) -> CodeSpace:
        return CodeSpace(self.zv, "base32")

    @cached_property
    def ca_space(self) -> CodeSpace:
        return CodeSpace(self.za, "base32")

    # -- lookups
    def question(self, qid: str) -> Question:
        for q in self.questions:
            if q.id == qid:
                return q
        raise KeyError(qid)

    @property
    def all_voters(self) -> list[Voter]:
        """Registered voters followed by audit padding entries (eligible everywhere)."""
        everything = tuple(q.id for q in self.questions)
        return list(self.voters) + [Voter(pid, everything) for pid in self.padding_ids]

    def eligible_questions(self, voter_id: str) -> list[Question]:
        for v in self.all_voters:
            if v.id == voter_id:
                return [q for q in self.questions if q.id in v.eligible]
        raise KeyError(voter_id)

    @property
    def counter_base(self) -> int:
        """Smallest power of ten exceeding the number of Ids."""
        base = 10
        while base <= len(self.all_voters):
            base *= 10
        return base

    # -- audit padding
    def with_padding(self, rng: random.Random) -> ElectionConfig:
        """Copy with ``audit_padding`` fresh Ids drawn from the voter Id space."""
        if self.padding_ids or not self.audit_padding:
            return self
        taken = {v.id for v in self.voters}
        pads = []
        while len(pads) < self.audit_padding:
            candidate = generate_voter_id(rng)
            if candidate not in taken:
                taken.add(candidate)
                pads.append(candidate)
        return ElectionConfig(self.election_id, self.questions, self.voters, self.ncc, self.zv,
                              self.za, self.audit_padding, pads)

    # -- serialization
    def to_dict(self) -> dict:
        d = {
            "schema": SCHEMA,
            "election_id": self.election_id,
            "ncc": self.ncc,
            "zv": self.zv,
            "za": self.za,
            "audit_padding": self.audit_padding,
            "questions": [
                {"id": q.id, "label": q.label, "options": list(q.options), "k": q.k} for q in self.questions
            ],
            "voters": [{"id": v.id, "eligible": list(v.eligible)} for v in self.voters],
        }
        if self.padding_ids:
            d["padding_ids"] = list(self.padding_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ElectionConfig:
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported election schema {d.get('schema')!r}")
        questions = [Question(q["id"], q.get("label", q["id"]), tuple(q["options"]), int(q.get("k", 1)))
                     for q in d["questions"]]
        all_q = tuple(q.id for q in questions)
        voters = [Voter(v["id"], tuple(v.get("eligible", all_q))) for v in d["voters"]]
        return cls(d["election_id"], questions, voters, int(d.get("ncc", 2)), int(d.get("zv", DEFAULT_ZV)),
                   int(d.get("za", DEFAULT_ZA)), int(d.get("audit_padding", 0)), list(d.get("padding_ids", [])))

    @classmethod
    def load(cls, path: str | Path) -> ElectionConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc!r}") from None

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> bytes:
        return crypto.digest(crypto.encode_fields(crypto.TAG_PARAMS, self.canonical_json()))


def generate_voter_id(rng: random.Random, length: int = 12) -> str:
    return "".join(rng.choice(BASE32_ALPHABET) for _ in range(length))


def random_election(rng: random.Random, *, election_id: str = "sim", max_voters: int = 50,
                    max_questions: int = 3, ncc: int | None = None, zv: int = DEFAULT_ZV) -> ElectionConfig:
    """A randomized desk-scale election with mixed eligibility and k-out-of-n questions."""
    nq = rng.randint(1, max_questions)
    questions = []
    for i in range(nq):
        n_opts = rng.randint(2, 3)
        questions.append(Question(f"q{i + 1}", f"Question {i + 1}",
                                  tuple(f"option-{i + 1}{chr(97 + j)}" for j in range(n_opts)),
                                  rng.randint(1, n_opts - 1)))
    voters = []
    taken = set()
    for _ in range(rng.randint(1, max_voters)):
        vid = generate_voter_id(rng)
        while vid in taken:
            vid = generate_voter_id(rng)
        taken.add(vid)
        eligible = tuple(q.id for q in questions if rng.random() < 0.75) or (questions[0].id,)
        voters.append(Voter(vid, eligible))
    return ElectionConfig(election_id, questions, voters, ncc or rng.randint(1, 4), zv)
