"""Full elections on the message bus: honest and Byzantine components, scripted
voters, a consistent bulletin for exports, and a plaintext oracle for the result.
"""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from . import crypto, wire
from .codespace import Permutation, perm_apply_pairs
from .control_component import (
    CastAnnouncement,
    ConfProof,
    ControlComponent,
    CvShare,
    VvShare,
    cast_message,
    validate_cast_request,
)
from .crypto import DEFAULT_GROUP, DecryptionShare, SchnorrGroup
from .election import ElectionConfig, random_election
from .errors import AbortError, DecryptionShareError, IntegrityError, Rejection
from .setup_component import SetupOutput, cc_seed, encrypt_code_table, gen_cc_partials, hash_ca, run_setup
from .tally import TallyTranscript, cte_commitments, run_tally, verify_transcript
from .transport import (
    AUTHENTIC,
    INSECURE,
    SECURE,
    AdversaryScript,
    Bus,
    Channel,
    ConfigError,
    Gateway,
    Message,
    rejection_reply,
)
from .voter import VoterSession

log = logging.getLogger(__name__)

SCENARIO_FORMAT = "scv-scenario/1"

EXIT_CODES = {
    "ok": 0,
    "expectation": 1,
    "usage": 2,
    "abort": 3,
    "config": 4,
    "unknown-id": 10,
    "bad-code": 11,
    "bad-count": 12,
    "duplicate-cast": 13,
    "not-cast": 14,
    "bad-ca": 15,
    "peer-signature-failure": 16,
    "timeout": 17,
    "vv-mismatch": 20,
    "cv-mismatch": 21,
}


# -- component keys ------------------------------------------------------------------

@dataclass
class ComponentKeys:
    sig: dict[int, crypto.SigKeyPair]
    eg: dict[int, crypto.EgKeyShare]
    group: SchnorrGroup = DEFAULT_GROUP

    @classmethod
    def generate(cls, ncc: int, seed, group: SchnorrGroup = DEFAULT_GROUP) -> ComponentKeys:
        sig = {i: crypto.SigKeyPair.generate(crypto.derive_rng(seed, "sig-key", i)) for i in range(1, ncc + 1)}
        eg = {i: crypto.eg_keygen(crypto.derive_rng(seed, "eg-key", i), i, group) for i in range(1, ncc + 1)}
        return cls(sig, eg, group)

    @property
    def sig_publics(self) -> dict[int, bytes]:
        return {i: k.public for i, k in self.sig.items()}

    @property
    def eg_publics(self) -> dict[int, int]:
        return {i: k.public for i, k in self.eg.items()}

    @property
    def election_key(self) -> int:
        return crypto.eg_aggregate(self.eg_publics.values(), self.group)


# -- Byzantine components ------------------------------------------------------------

BEHAVIORS = {
    "vv": ("offset", "random", "substitute"),
    "cv": ("offset",),
    "sign": ("garbage",),
    "export": ("drop", "drop-half", "forge", "equivocate", "wrong-ca", "strip", "swap"),
    "decrypt": ("corrupt",),
}


class ByzantineComponent(ControlComponent):
    """A control component deviating in the ways listed in ``behavior``.

    Keys are behavior classes from ``BEHAVIORS``; values pick the deviation
    (``export`` takes a list). Everything not listed stays honest.
    """

    def __init__(self, *args, behavior: Mapping[str, Any], **kwargs):
        super().__init__(*args, **kwargs)
        for key, value in behavior.items():
            allowed = BEHAVIORS.get(key)
            values = value if isinstance(value, list) else [value]
            if allowed is None or not set(values) <= set(allowed):
                raise ConfigError(f"unknown behavior {key}={value!r}")
        self.behavior = dict(behavior)
        self.tamper_rng = random.Random(f"byzantine/{self.index}/{json.dumps(self.behavior, sort_keys=True)}")

    def cast_begin(self, req):
        ann = super().cast_begin(req)
        if self.behavior.get("sign") == "garbage":
            return CastAnnouncement(ann.index, ann.id, ann.ciphertexts, bytes(b ^ 0x5A for b in ann.signature))
        return ann

    def _vv_share(self, voter_id, codes):
        share = super()._vv_share(voter_id, codes)
        mode = self.behavior.get("vv")
        if mode is None:
            return share
        partial = self.records[voter_id].partial
        vv = {}
        for qid, per_code in share.vv.items():
            vv[qid] = {}
            for code, value in per_code.items():
                if mode == "offset":
                    value = value + value.space(1)
                elif mode == "random":
                    value = value.space.random(self.tamper_rng)
                elif mode == "substitute":
                    # the share belonging to a code the voter did not pick
                    others = [c for c in partial.questions[qid].ctvv if c not in per_code]
                    if others:
                        value = partial.questions[qid].ctvv[others[0]]
                vv[qid][code] = value
        return VvShare(share.index, share.id, vv)

    def confirm(self, req):
        share = super().confirm(req)
        if self.behavior.get("cv") == "offset":
            return CvShare(share.index, share.id, share.cv + share.cv.space(1))
        return share

    def _forged(self, vid: str, ciphertexts, ca: int) -> ConfProof:
        message = cast_message(self.config.election_id, vid, ciphertexts, self.group)
        sigs = {i: self.tamper_rng.getrandbits(512).to_bytes(64, "big") for i in self.public_keys}
        sigs[self.index] = crypto.sign(self.sig_key, message, self.index).value
        return ConfProof(vid, ciphertexts, ca, tuple(sorted(sigs.items())))

    def _other_choice(self, vid: str, ciphertexts):
        """Ciphertexts of codes the voter did not pick, same shape."""
        out = []
        for qid, cts in ciphertexts:
            pool = [ct for ct in self.records[vid].cte[qid].values() if ct not in cts]
            out.append((qid, tuple(sorted((pool + list(cts))[:len(cts)], key=lambda c: c.to_bytes(self.group)))))
        return tuple(out)

    def exports(self) -> list[list[ConfProof]]:
        """What this component publishes; more than one list means equivocation."""
        honest = super().export_conf()
        ops = self.behavior.get("export", [])
        ops = ops if isinstance(ops, list) else [ops]
        published = list(honest)
        extra: list[list[ConfProof]] = []
        for op in ops:
            if op == "drop":
                published = []
            elif op == "drop-half":
                published = published[::2]
            elif op == "forge":
                for vid in sorted(set(self.records) - set(self.conf)):
                    cte = self.records[vid].cte
                    cts = tuple((q.id, tuple(sorted(list(cte[q.id].values())[:q.k],
                                                    key=lambda c: c.to_bytes(self.group))))
                                for q in self.config.eligible_questions(vid))
                    published.append(self._forged(vid, cts, self.tamper_rng.randrange(self.config.za)))
            elif op == "equivocate":
                extra.append([self._forged(p.id, self._other_choice(p.id, p.ciphertexts), p.ca) for p in honest])
            elif op == "wrong-ca":
                published = [ConfProof(p.id, p.ciphertexts, (p.ca + 1) % self.config.za, p.signatures)
                             for p in published]
            elif op == "strip":
                published = [ConfProof(p.id, p.ciphertexts, p.ca,
                                       tuple((i, s) for i, s in p.signatures if i == self.index)) for p in published]
            elif op == "swap":
                published = [ConfProof(p.id, self._other_choice(p.id, p.ciphertexts), p.ca, p.signatures)
                             for p in published]
        return [published, *extra]

    def decryption_shares(self, aggregates, context):
        shares = super().decryption_shares(aggregates, context)
        if self.behavior.get("decrypt") == "corrupt":
            shares = {qid: DecryptionShare(s.index, s.value * self.group.g % self.group.p, s.proof)
                      for qid, s in shares.items()}
        return shares


def component_exports(cc: ControlComponent) -> list[list[ConfProof]]:
    if isinstance(cc, ByzantineComponent):
        return cc.exports()
    return [cc.export_conf()]


# -- setup misbehaviour (for audits) --------------------------------------------------

SETUP_TAMPERS = ("swap-vv", "wrong-cte", "wrong-hca", "wrong-permutation")


def tamper_setup(output: SetupOutput, voter_id: str, kind: str, group: SchnorrGroup = DEFAULT_GROUP) -> SetupOutput:
    """Copy of ``output`` where the setup component cheated on one Id."""
    if kind not in SETUP_TAMPERS:
        raise ValueError(f"unknown setup tamper {kind!r}")
    cfg = output.config
    sheet = output.sheets[voter_id]
    records = {i: dict(recs) for i, recs in output.records.items()}
    sheets = dict(output.sheets)
    qid = next(iter(sheet.questions))
    sq = sheet.questions[qid]
    rec = records[1][voter_id]
    cte, hca = rec.cte, rec.hca
    if kind == "swap-vv":
        codes = list(sq.ctvv)
        ctvv = dict(sq.ctvv)
        ctvv[codes[0]], ctvv[codes[1]] = ctvv[codes[1]], ctvv[codes[0]]
        sheets[voter_id] = replace(sheet, questions={**sheet.questions, qid: replace(sq, ctvv=ctvv)})
    elif kind == "wrong-permutation":
        s = len(sq.ptc)
        shift = Permutation(tuple(j % s + 1 for j in range(1, s + 1)))
        sheets[voter_id] = replace(sheet, questions={**sheet.questions,
                                                     qid: replace(sq, ptc=perm_apply_pairs(sq.ptc, shift))})
    elif kind == "wrong-cte":
        # encrypt the code table under a sheet whose plain assignment is rotated
        s = len(sq.ptc)
        shift = Permutation(tuple(j % s + 1 for j in range(1, s + 1)))
        fake = replace(sheet, questions={**sheet.questions, qid: replace(sq, ptc=perm_apply_pairs(sq.ptc, shift))})
        cte, _ = encrypt_code_table(fake, cfg, output.public_key, None, group,
                                    randomness=output.audit_randomness[voter_id])
    elif kind == "wrong-hca":
        hca = hash_ca(cfg.election_id, voter_id, (sheet.ca.value + 1) % cfg.za)
    for i in records:
        records[i][voter_id] = replace(records[i][voter_id], cte=cte, hca=hca)
    return SetupOutput(cfg, output.public_key, sheets, records, output.audit_randomness)


# -- scenario ---------------------------------------------------------------------------

@dataclass
class VoteScript:
    id: str
    choices: dict[str, list[str]]
    confirm: bool = True

    def to_dict(self) -> dict:
        return {"id": self.id, "choices": self.choices, "confirm": self.confirm}


@dataclass
class Scenario:
    name: str
    seed: Any
    election: ElectionConfig
    votes: list[VoteScript]
    mode: str = "central"
    adversary: dict = field(default_factory=dict)
    behaviors: dict[int, dict] = field(default_factory=dict)
    exclude: list[str] = field(default_factory=list)
    expect: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> Scenario:
        try:
            return cls._from_dict(d, base_dir)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed scenario: {exc!r}") from None

    @classmethod
    def _from_dict(cls, d: dict, base_dir: Path | None) -> Scenario:
        if d.get("format") != SCENARIO_FORMAT:
            raise ConfigError(f"unsupported scenario format {d.get('format')!r}")
        seed = d.get("seed", 0)
        if "election" in d:
            election = ElectionConfig.from_dict(d["election"])
        elif "election_file" in d:
            election = ElectionConfig.load((base_dir or Path(".")) / d["election_file"])
        elif "random_election" in d:
            opts = dict(d["random_election"])
            election = random_election(crypto.derive_rng(seed, "election"), **opts)
        else:
            raise ConfigError("scenario needs an election, election_file or random_election")
        if "ncc" in d:
            election = ElectionConfig.from_dict({**election.to_dict(), "ncc": int(d["ncc"])})
        votes = d.get("votes", "random")
        if isinstance(votes, str) or isinstance(votes, dict):
            policy = {} if isinstance(votes, str) else votes
            votes = random_votes(election, crypto.derive_rng(seed, "votes"), **policy)
        else:
            votes = [VoteScript(v["id"], {q: list(c) for q, c in v["choices"].items()}, v.get("confirm", True))
                     for v in votes]
        adversary = dict(d.get("adversary", {}))
        behaviors = {int(str(k).removeprefix("cc")): v for k, v in adversary.pop("behaviors", {}).items()}
        return cls(d.get("name", "scenario"), seed, election, votes, d.get("mode", "central"), adversary,
                   behaviors, list(d.get("exclude", [])), dict(d.get("expect", {})))

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)


def random_votes(config: ElectionConfig, rng: random.Random, turnout: float = 0.85,
                 confirm: float = 0.9) -> list[VoteScript]:
    votes = []
    for v in config.voters:
        if rng.random() >= turnout:
            continue
        choices = {q.id: sorted(rng.sample(list(q.options), q.k)) for q in config.eligible_questions(v.id)}
        votes.append(VoteScript(v.id, choices, rng.random() < confirm))
    return votes


def plaintext_oracle(config: ElectionConfig, votes: Mapping[str, VoteScript],
                     counted_ids) -> dict[str, dict[str, int]]:
    """Counts obtained by tallying the intended plain choices of ``counted_ids`` directly."""
    counts = {q.id: Counter({o: 0 for o in q.options}) for q in config.questions}
    for vid in counted_ids:
        for qid, picks in votes[vid].choices.items():
            counts[qid].update(picks)
    return {qid: dict(c) for qid, c in counts.items()}


# -- nodes on the bus ----------------------------------------------------------------------

def topology(ncc: int) -> list[Channel]:
    ccs = [f"cc{i}" for i in range(1, ncc + 1)]
    channels = [Channel("voter", "gateway", INSECURE), Channel("gateway", "voter", INSECURE),
                Channel("setup", "voter", SECURE, reliable=True)]
    for cc in ccs:
        channels += [Channel("setup", cc, SECURE, reliable=True), Channel(cc, "setup", SECURE, reliable=True),
                     Channel("gateway", cc, INSECURE), Channel(cc, "gateway", INSECURE),
                     Channel(cc, "bulletin", AUTHENTIC, reliable=True),
                     Channel("bulletin", cc, AUTHENTIC, reliable=True)]
        channels += [Channel(cc, other, AUTHENTIC) for other in ccs if other != cc]
    return channels


class ComponentNode:
    """Bus adapter around one control component."""

    def __init__(self, bus: Bus, cc: ControlComponent, ncc: int):
        self.bus = bus
        self.cc = cc
        self.name = f"cc{cc.index}"
        self.ncc = ncc
        self.heard: dict[str, list[CastAnnouncement]] = {}
        self.board: list[list[ConfProof]] = []
        bus.register(self.name, self.handle, self.on_idle)

    def _reply(self, kind: str, payload: dict):
        self.bus.send(self.name, "gateway", kind, payload)

    def _reject(self, vid: str, exc: Rejection):
        self._reply("reject", {"id": vid, **rejection_reply(exc)})

    def handle(self, msg: Message):
        kind, payload = msg.kind, msg.payload
        try:
            if kind == "cast":
                self._on_cast(payload)
            elif kind == "announce":
                vid = payload["id"]
                self.heard.setdefault(vid, []).append(
                    CastAnnouncement(int(payload["index"]), vid, (), bytes.fromhex(payload["signature"])))
                self._maybe_collect(vid)
            elif kind == "confirm":
                req = wire.confirm_request_from_json(payload)
                try:
                    self._reply("cv", {"id": req.id, **wire.cv_share_to_json(self.cc.confirm(req))})
                except Rejection as exc:
                    self._reject(req.id, exc)
            elif kind == "board":
                self.board = msg.attachment
        except (ValueError, KeyError, TypeError) as exc:
            log.info("%s ignores malformed %s: %s", self.name, kind, exc)

    def _on_cast(self, payload: dict):
        req = wire.cast_request_from_json(payload)
        try:
            ann = self.cc.cast_begin(req)
        except Rejection as exc:
            self._reject(req.id, exc)
            return
        body = wire.announcement_to_json(ann, self.cc.group)
        for j in range(1, self.ncc + 1):
            if j != self.cc.index:
                self.bus.send(self.name, f"cc{j}", "announce", body)
        self._maybe_collect(req.id)

    def _maybe_collect(self, vid: str, force: bool = False) -> bool:
        if vid not in self.cc._pending:
            return False
        if not force and len(self.heard.get(vid, [])) < self.ncc - 1:
            return False
        announcements = self.heard.pop(vid, [])
        try:
            share = self.cc.cast_collect(vid, announcements)
        except Rejection as exc:
            self._reject(vid, exc)
        else:
            self._reply("vv", {"id": vid, **wire.vv_share_to_json(share)})
        return True

    def on_idle(self) -> bool:
        # the logical timeout: nobody else will speak, so decide with what arrived
        return any([self._maybe_collect(vid, force=True) for vid in sorted(self.cc._pending)])


VALIDATION_ERRORS = ("unknown-id", "bad-code", "bad-count")


class GatewayNode:
    """The untrusted gateway as a bus participant (fan-out plus public pre-validation)."""

    def __init__(self, bus: Bus, config: ElectionConfig, ncc: int, retired=()):
        self.bus = bus
        self.config = config
        self.ncc = ncc
        self.sync_mirror: set[str] = set()
        self.retired = set(retired)
        self.pending: dict[str, dict] = {}
        bus.register("gateway", self.handle, self.on_idle)

    def _answer(self, kind: str, reply: dict):
        self.bus.send("gateway", "voter", f"{kind}-reply", reply)

    def handle(self, msg: Message):
        if msg.src == "voter":
            self._from_voter(msg)
        else:
            self._from_component(msg)

    def _from_voter(self, msg: Message):
        payload = msg.payload
        if msg.kind == "cast":
            try:
                req = wire.cast_request_from_json(payload)
                validate_cast_request(self.config, req, self.retired)
                if req.id in self.sync_mirror:
                    raise Rejection("duplicate-cast", req.id)
            except Rejection as exc:
                self._answer("cast", {"id": payload.get("id"), **rejection_reply(exc)})
                return
            except (ValueError, KeyError) as exc:
                self._answer("cast", {"id": payload.get("id"), "error": "bad-code", "source": "gateway",
                                      "detail": str(exc)})
                return
        elif msg.kind == "confirm":
            try:
                req = wire.confirm_request_from_json(payload)
            except ValueError as exc:
                self._answer("confirm", {"id": payload.get("id"), "error": "bad-ca", "source": "gateway",
                                         "detail": str(exc)})
                return
        else:
            return
        self.pending[payload["id"]] = {"kind": msg.kind, "replies": {}, "errors": []}
        for i in range(1, self.ncc + 1):
            self.bus.send("gateway", f"cc{i}", msg.kind, payload)

    def _from_component(self, msg: Message):
        vid = msg.payload.get("id")
        state = self.pending.get(vid)
        if state is None:
            return
        if msg.kind == "reject":
            state["errors"].append({k: msg.payload[k] for k in ("error", "source", "detail") if k in msg.payload})
        else:
            entry = {k: v for k, v in msg.payload.items() if k != "id"}
            state["replies"].setdefault(int(entry["index"]), entry)
        if len(state["replies"]) + len(state["errors"]) >= self.ncc:
            self._finish(vid)

    def _finish(self, vid: str):
        state = self.pending.pop(vid)
        # any component past validation has put the Id into its Sync
        if state["kind"] == "cast" and (state["replies"] or any(e["error"] not in VALIDATION_ERRORS
                                                                for e in state["errors"])):
            self.sync_mirror.add(vid)
        per_cc = [state["replies"][i] for i in sorted(state["replies"])]
        if state["errors"]:
            reply = {"id": vid, **state["errors"][0]}
        elif len(per_cc) < self.ncc:
            missing = sorted(set(range(1, self.ncc + 1)) - set(state["replies"]))
            reply = {"id": vid, "perCC": per_cc, "error": "timeout", "source": "gateway", "missing": missing}
        else:
            reply = {"id": vid, "perCC": per_cc}
        self._answer(state["kind"], reply)

    def on_idle(self) -> bool:
        if not self.pending:
            return False
        for vid in sorted(self.pending):
            self._finish(vid)
        return True


class BusClient:
    """Voter-side gateway client that runs the bus until its reply arrives."""

    def __init__(self, bus: Bus):
        self.bus = bus
        self.inbox: list[dict] = []
        bus.register("voter", lambda msg: self.inbox.append(msg.payload))

    def _call(self, kind: str, payload: dict) -> dict:
        self.inbox.clear()
        self.bus.send("voter", "gateway", kind, payload)
        got = self.bus.run(until=lambda: any(m.get("id") == payload["id"] for m in self.inbox))
        if not got:
            return {"error": "timeout", "source": "gateway"}
        reply = next(m for m in self.inbox if m.get("id") == payload["id"])
        return {k: v for k, v in reply.items() if k != "id"}

    def cast(self, payload: dict) -> dict:
        return self._call("cast", payload)

    def confirm(self, payload: dict) -> dict:
        return self._call("confirm", payload)


# -- running an election -----------------------------------------------------------------

@dataclass
class SimulationResult:
    name: str
    outcomes: dict[str, str]
    rejections: dict[str, dict]
    agreed: dict[int, list[str]]
    transcript: TallyTranscript | None
    tally_error: str | None
    oracle_counts: dict[str, dict[str, int]] | None
    verify_failures: list[str]
    failures: list[str]
    trace: list[str]
    setup: SetupOutput = field(repr=False)
    components: dict[int, ControlComponent] = field(repr=False)
    keys: ComponentKeys = field(repr=False)
    # (channel, payload) pairs the adversary read
    adversary_view: list = field(default_factory=list, repr=False)

    @property
    def exit_code(self) -> int:
        """0 all good, 1 unmet expectation, else the code of the first failed voter or 3 for a tally abort."""
        if self.failures:
            return EXIT_CODES["expectation"]
        for vid, outcome in self.outcomes.items():
            if outcome == "rejected":
                return EXIT_CODES.get(self.rejections.get(vid, {}).get("error"), EXIT_CODES["abort"])
            if outcome in EXIT_CODES and outcome != "ok":
                return EXIT_CODES[outcome]
        if self.tally_error:
            return EXIT_CODES["abort"]
        return EXIT_CODES["ok"]

    def report(self) -> dict:
        return {
            "scenario": self.name,
            "exit_code": self.exit_code,
            "outcomes": dict(sorted(self.outcomes.items())),
            "rejections": {k: v for k, v in sorted(self.rejections.items())},
            "agreed": {str(i): ids for i, ids in sorted(self.agreed.items())},
            "counts": self.transcript.counts() if self.transcript else None,
            "oracle_counts": self.oracle_counts,
            "tally_error": self.tally_error,
            "verify_failures": self.verify_failures,
            "failures": self.failures,
        }

    def report_json(self) -> str:
        return json.dumps(self.report(), indent=1, sort_keys=True) + "\n"


def build_components(setup: SetupOutput, keys: ComponentKeys, behaviors: Mapping[int, Mapping] | None = None,
                     seed=None) -> dict[int, ControlComponent]:
    behaviors = behaviors or {}
    out = {}
    for i in range(1, setup.config.ncc + 1):
        args = (i, setup.config, keys.sig[i], keys.sig_publics, keys.eg[i], setup.records[i], keys.group,
                crypto.derive_rng(seed, "cc-rng", i))
        out[i] = ByzantineComponent(*args, behavior=behaviors[i]) if behaviors.get(i) else ControlComponent(*args)
    return out


def run_scenario(scenario: Scenario, group: SchnorrGroup = DEFAULT_GROUP) -> SimulationResult:
    config = scenario.election
    ncc = config.ncc
    seed = scenario.seed
    script = AdversaryScript.from_dict(scenario.adversary)
    corrupted = set(script.corrupted) | {f"cc{i}" for i, b in scenario.behaviors.items() if b}
    script = AdversaryScript(frozenset(corrupted), script.actions)
    bus = Bus(topology(ncc), script, seed)
    keys = ComponentKeys.generate(ncc, seed, group)

    # setup; in cc-generated mode the partial ballots travel to the setup component first
    padded = config.with_padding(crypto.derive_rng(seed, "padding"))
    partials = None
    if scenario.mode == "cc-generated":
        partials = [gen_cc_partials(padded, cc_seed(seed, i)) for i in range(1, ncc + 1)]
        for i in range(1, ncc + 1):
            bus.send(f"cc{i}", "setup", "partials", {"index": i, "ids": len(partials[i - 1])})
    setup = run_setup(config, keys.election_key, seed=seed, mode=scenario.mode, cc_partials=partials, group=group)
    for i in range(1, ncc + 1):
        bus.send("setup", f"cc{i}", "init", {"index": i, "ids": sorted(setup.records[i])})
    bus.send("setup", "voter", "sheets", {"ids": sorted(setup.sheets)})
    components = build_components(setup, keys, scenario.behaviors, seed)
    nodes = {i: ComponentNode(bus, cc, ncc) for i, cc in components.items()}
    GatewayNode(bus, setup.config, ncc)
    client = BusClient(bus)
    bus.run()

    # voting
    outcomes, rejections = {}, {}
    scripts = {v.id: v for v in scenario.votes}
    for vote in scenario.votes:
        sheet = setup.sheets.get(vote.id)
        if sheet is None:
            outcomes[vote.id] = "rejected"
            rejections[vote.id] = {"error": "unknown-id", "source": "gateway"}
            continue
        session = VoterSession.login(sheet.qr_payload, sheet, ncc, client)
        if session.cast(vote.choices) and vote.confirm:
            session.confirm()
        outcomes[vote.id] = session.outcome
        if session.rejection and "error" in session.rejection:
            rejections[vote.id] = session.rejection
    bus.run()

    # close, publish exports on the bulletin, agree
    honest = [i for i in components if f"cc{i}" not in corrupted]
    posts: list[list[ConfProof]] = []
    for i, cc in components.items():
        cc.close()
        for export in component_exports(cc):
            posts.append(export)
            bus.send(f"cc{i}", "bulletin", "export", {"index": i, "entries": [p.id for p in export]}, export)
    bus.run()
    for i in components:
        bus.send("bulletin", f"cc{i}", "board", {"posts": len(posts)}, list(posts))
    bus.run()

    failures: list[str] = []
    agreed: dict[int, list[str]] = {}
    votes_agre: dict[int, list[ConfProof]] = {}
    for i in honest:
        try:
            votes_agre[i] = components[i].votes_agre(nodes[i].board)
            agreed[i] = [p.id for p in votes_agre[i]]
        except IntegrityError as exc:
            failures.append(f"agreement: cc{i} aborted: {exc}")
    if len({tuple(p for p in v) for v in votes_agre.values()}) > 1:
        failures.append("agreement: honest components disagree")

    transcript, tally_error, oracle, verify_failures = None, None, None, []
    if votes_agre:
        reference = votes_agre[honest[0]]
        emitted = {}
        for i in votes_agre:
            try:
                emitted[i] = run_tally(list(components.values()), votes_agre[i], setup.config, keys.eg_publics,
                                       scenario.exclude, group)
            except (DecryptionShareError, AbortError) as exc:
                tally_error = str(exc)
                break
        else:
            transcript = emitted[honest[0]]
            if len({t.to_json(group) for t in emitted.values()}) != 1:
                failures.append("tally: honest components emitted different transcripts")
        counted = [p.id for p in reference if p.id not in set(scenario.exclude)]
        known = [vid for vid in counted if vid in scripts]
        oracle = plaintext_oracle(setup.config, scripts, known)
        if len(known) != len(counted):
            failures.append(f"oracle: agreed ids without a script: {sorted(set(counted) - set(known))}")
        if transcript is not None:
            verify_failures = verify_transcript(transcript, setup.config, keys.sig_publics, keys.eg_publics,
                                                setup.hca_table, cte_commitments(setup.cte_table), group)
    failures += _check_recorded(setup, components, honest, scripts, outcomes, keys, group)
    result = SimulationResult(scenario.name, outcomes, rejections, agreed, transcript, tally_error, oracle,
                              verify_failures, failures, bus.trace_lines(), setup, components, keys,
                              bus.adversary_view)
    result.failures += check_expectations(result, scenario)
    return result


def _check_recorded(setup, components, honest, scripts, outcomes, keys, group) -> list[str]:
    """Every voter who saw both checks pass has the intended ciphertexts in each honest Conf."""
    secret = sum(k.secret for k in keys.eg.values()) % group.q
    base = setup.config.counter_base
    failures = []
    for vid, outcome in sorted(outcomes.items()):
        if outcome != "ok":
            continue
        want = {qid: sorted(setup.config.question(qid).option_index(o) for o in picks)
                for qid, picks in scripts[vid].choices.items()}
        for i in honest:
            proof = components[i].conf.get(vid)
            if proof is None:
                failures.append(f"recorded: {vid} missing from cc{i} Conf")
                continue
            got = {}
            for qid, cts in proof.ciphertexts:
                plain = []
                for ct in cts:
                    m = ct.c2 * group.inv(group.exp(ct.c1, secret)) % group.p
                    n = len(setup.config.question(qid).options)
                    hits = [j for j in range(n) if crypto.counter_encode(j, base, group) == m]
                    plain.append(hits[0] if hits else -1)
                got[qid] = sorted(plain)
            if got != want:
                failures.append(f"recorded: {vid} at cc{i} holds {got}, intended {want}")
    return failures


def check_expectations(result: SimulationResult, scenario: Scenario) -> list[str]:
    expect = scenario.expect
    failures = []
    default = expect.get("default_outcome")
    wanted = {v.id: expect.get("outcomes", {}).get(v.id, default or ("ok" if v.confirm else "pending"))
              for v in scenario.votes}
    for vid, want in sorted(wanted.items()):
        got = result.outcomes.get(vid)
        if want != "any" and got != want:
            failures.append(f"outcome: {vid} expected {want}, got {got}")
    for vid, code in sorted(expect.get("rejections", {}).items()):
        got = result.rejections.get(vid, {}).get("error")
        if got != code:
            failures.append(f"rejection: {vid} expected {code}, got {got}")
    tally = expect.get("tally", "ok")
    if tally == "ok":
        if result.transcript is None:
            failures.append(f"tally: expected a result, got {result.tally_error}")
        else:
            want_counts = expect.get("counts", "oracle")
            if want_counts == "oracle":
                want_counts = result.oracle_counts
            if result.transcript.counts() != want_counts:
                failures.append(f"tally: counts {result.transcript.counts()} != {want_counts}")
            if result.verify_failures:
                failures.append(f"verify: {result.verify_failures}")
    elif tally == "abort" and result.tally_error is None:
        failures.append("tally: expected an abort")
    agreed = next(iter(result.agreed.values()), [])
    for vid in expect.get("absent", []):
        if vid in agreed:
            failures.append(f"absent: {vid} is in the agreed votes")
    for vid in expect.get("present", []):
        if vid not in agreed:
            failures.append(f"present: {vid} missing from the agreed votes")
    return failures


def run_direct(setup: SetupOutput, keys: ComponentKeys, votes, seed=None):
    """Same votes through the in-process gateway, no bus; returns the components."""
    components = build_components(setup, keys, seed=seed)
    gateway = Gateway(setup.config, list(components.values()))
    sessions = {}
    for vote in votes:
        sheet = setup.sheets[vote.id]
        session = VoterSession(sheet, setup.config.ncc, gateway)
        if session.cast(vote.choices) and vote.confirm:
            session.confirm()
        sessions[vote.id] = session
    return components, sessions


__all__ = [
    "ByzantineComponent", "ComponentKeys", "EXIT_CODES", "Scenario", "SimulationResult", "VoteScript",
    "build_components", "plaintext_oracle", "random_votes", "run_direct", "run_scenario", "tamper_setup",
    "topology", "SETUP_TAMPERS",
]
