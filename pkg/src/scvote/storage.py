"""On-disk layout of an election directory.

    election.json            election definition including padding Ids
    public.json              public bundle: keys, hCA table, CtE commitments
    sheets/<id>.json         ballot sheet documents (voters only, never a component)
    cc<i>/keys.json          the component's signing key and decryption key share
    cc<i>/init.json          the component's per-Id records
    cc<i>/events.jsonl       append-only state log, replayed on load
    setup/audit.json         encryption randomness kept by the setup component
    bulletin/export-cc<i>-<n>.json   published confirmation proofs
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from . import wire
from .control_component import ConfProof, ControlComponent
from .crypto import DEFAULT_GROUP, EgKeyShare, SchnorrGroup, SigKeyPair
from .election import ElectionConfig
from .setup_component import BallotSheet, SetupOutput
from .sheets import parse_sheet, render_sheet_document
from .tally import cte_commitments

PUBLIC_FORMAT = "scv-public/1"


def _dump(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _load(path: Path):
    return json.loads(Path(path).read_text())


@dataclass
class PublicBundle:
    config: ElectionConfig
    sig_publics: dict[int, bytes]
    eg_publics: dict[int, int]
    hca_table: dict[str, bytes]
    cte_commits: dict[str, dict[str, set[str]]]

    def to_dict(self, group: SchnorrGroup = DEFAULT_GROUP) -> dict:
        return {
            "format": PUBLIC_FORMAT,
            "election": self.config.to_dict(),
            "group": group.name,
            "signing_keys": {str(i): pk.hex() for i, pk in sorted(self.sig_publics.items())},
            "decryption_keys": wire.int_map_to_json(self.eg_publics, group),
            "hca": {vid: h.hex() for vid, h in sorted(self.hca_table.items())},
            "cte": {vid: {qid: sorted(hs) for qid, hs in per.items()} for vid, per in sorted(self.cte_commits.items())},
        }

    @classmethod
    def from_dict(cls, d: dict, group: SchnorrGroup = DEFAULT_GROUP) -> PublicBundle:
        if d.get("format") != PUBLIC_FORMAT:
            raise ValueError(f"unsupported public bundle {d.get('format')!r}")
        if d.get("group") != group.name:
            raise ValueError(f"bundle uses group {d.get('group')!r}")
        return cls(
            ElectionConfig.from_dict(d["election"]),
            {int(i): bytes.fromhex(pk) for i, pk in d["signing_keys"].items()},
            wire.int_map_from_json(d["decryption_keys"], group),
            {vid: bytes.fromhex(h) for vid, h in d["hca"].items()},
            {vid: {qid: set(hs) for qid, hs in per.items()} for vid, per in d["cte"].items()},
        )

    @classmethod
    def load(cls, path: str | Path, group: SchnorrGroup = DEFAULT_GROUP) -> PublicBundle:
        return cls.from_dict(_load(Path(path)), group)


def save_setup(out: str | Path, setup: SetupOutput, sig_keys: dict[int, SigKeyPair],
               eg_keys: dict[int, EgKeyShare], group: SchnorrGroup = DEFAULT_GROUP) -> None:
    out = Path(out)
    cfg = setup.config
    _dump(out / "election.json", cfg.to_dict())
    bundle = PublicBundle(cfg, {i: k.public for i, k in sig_keys.items()}, {i: k.public for i, k in eg_keys.items()},
                          setup.hca_table, cte_commitments(setup.cte_table))
    _dump(out / "public.json", bundle.to_dict(group))
    for vid, sheet in setup.sheets.items():
        path = out / "sheets" / f"{vid}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_sheet_document(sheet))
    for i, records in setup.records.items():
        d = out / f"cc{i}"
        _dump(d / "keys.json", {"index": i, "signing_secret": sig_keys[i].secret.hex(),
                                "decryption_secret": format(eg_keys[i].secret, "x")})
        _dump(d / "init.json", {"index": i, "records": [wire.record_to_json(r, group) for r in records.values()]})
        (d / "events.jsonl").write_text("")
    _dump(out / "setup" / "audit.json",
          {vid: wire.randomness_to_json(r) for vid, r in setup.audit_randomness.items()})


def load_config(out: str | Path) -> ElectionConfig:
    return ElectionConfig.load(Path(out) / "election.json")


def load_sheet(path: str | Path) -> BallotSheet:
    return parse_sheet(Path(path).read_text())


def load_sheets(out: str | Path) -> dict[str, BallotSheet]:
    return {p.stem: load_sheet(p) for p in sorted((Path(out) / "sheets").glob("*.json"))}


def component_indices(out: str | Path) -> list[int]:
    return sorted(int(p.name[2:]) for p in Path(out).glob("cc*") if p.is_dir() and p.name[2:].isdigit())


def load_records(out: str | Path, index: int, config: ElectionConfig, group: SchnorrGroup = DEFAULT_GROUP):
    d = _load(Path(out) / f"cc{index}" / "init.json")
    return {r["id"]: wire.record_from_json(r, config, group) for r in d["records"]}


def load_audit_randomness(out: str | Path, config: ElectionConfig) -> dict:
    return {vid: wire.randomness_from_json(r, config) for vid, r in _load(Path(out) / "setup" / "audit.json").items()}


class EventLog:
    """Append-only JSON-lines file shared safely between request threads."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def read(self) -> list[dict]:
        if not self.path.exists():
            return []
        return [json.loads(line) for line in self.path.read_text().splitlines() if line.strip()]

    def append(self, event: dict) -> None:
        with self._lock, self.path.open("a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")


def load_component(out: str | Path, index: int, bundle: PublicBundle | None = None,
                   group: SchnorrGroup = DEFAULT_GROUP, persist: bool = True) -> ControlComponent:
    """Rebuild a component from its init state and replay its log; new events get appended."""
    out = Path(out)
    bundle = bundle or PublicBundle.load(out / "public.json", group)
    config = bundle.config
    keys = _load(out / f"cc{index}" / "keys.json")
    secret = int(keys["decryption_secret"], 16)
    eg = EgKeyShare(index, secret, group.gexp(secret))
    cc = ControlComponent(index, config, SigKeyPair(bytes.fromhex(keys["signing_secret"])), bundle.sig_publics,
                          eg, load_records(out, index, config, group), group)
    log = EventLog(out / f"cc{index}" / "events.jsonl")
    cc.replay(log.read())
    if persist:
        cc.event_sink = log.append
    return cc


def publish_exports(out: str | Path, index: int, exports: Iterable[list[ConfProof]],
                    group: SchnorrGroup = DEFAULT_GROUP) -> None:
    for n, export in enumerate(exports):
        _dump(Path(out) / "bulletin" / f"export-cc{index}-{n}.json",
              {"index": index, "entries": [wire.conf_proof_to_json(p, group) for p in export]})


def read_bulletin(out: str | Path, group: SchnorrGroup = DEFAULT_GROUP) -> dict[str, list[ConfProof]]:
    posts = {}
    for path in sorted((Path(out) / "bulletin").glob("export-*.json")):
        posts[path.stem] = [wire.conf_proof_from_json(e, group) for e in _load(path)["entries"]]
    return posts
