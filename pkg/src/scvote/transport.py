"""Channels, a deterministic message bus with adversary hooks, and the untrusted gateway.

The bus delivers messages in logical-clock order. An ``AdversaryScript`` may
drop, delay, modify, inject or read messages, but only where the channel's
security attributes (or a corrupted endpoint) allow it; scripts asking for
more are rejected before anything runs.
"""

from __future__ import annotations

import copy
import fnmatch
import hashlib
import heapq
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from . import wire
from .codespace import BASE32_ALPHABET
from .control_component import validate_cast_request
from .election import ElectionConfig
from .errors import AbortError, ConfigError, Rejection

log = logging.getLogger(__name__)

CONFIDENTIAL = "confidential"
AUTHENTICATED = "authenticated"
SECURE = frozenset({CONFIDENTIAL, AUTHENTICATED})
AUTHENTIC = frozenset({AUTHENTICATED})
INSECURE = frozenset()

ACTION_KINDS = ("drop", "modify", "inject", "reorder", "read")


@dataclass(frozen=True)
class Channel:
    src: str
    dst: str
    attributes: frozenset = INSECURE
    # reliable channels (setup distribution, the bulletin) cannot lose messages
    reliable: bool = False

    @property
    def name(self) -> str:
        return f"{self.src}->{self.dst}"


def _share_entries(payload: dict) -> list[dict]:
    """The per-component share objects of a component reply or of an aggregated gateway reply."""
    if "perCC" in payload:
        return payload["perCC"][:1]
    return [payload]


def _vv_offset(payload: dict, amount: int = 1) -> dict:
    for entry in _share_entries(payload):
        vv = entry.get("vv", {})
        for token, value in vv.items():
            vv[token] = str((int(value) + amount) % 10 ** len(value)).zfill(len(value))
    return payload


def _cv_offset(payload: dict, amount: int = 1) -> dict:
    for entry in _share_entries(payload):
        cv = entry.get("cv")
        if cv:
            entry["cv"] = cv[:-1] + BASE32_ALPHABET[(BASE32_ALPHABET.index(cv[-1]) + amount) % 32]
    return payload


# named payload rewrites usable from scenario files
MODIFIERS: dict[str, Callable[[dict], dict]] = {
    "vv-offset": _vv_offset,
    "cv-offset": _cv_offset,
}


@dataclass
class AdversaryAction:
    kind: str
    src: str = "*"
    dst: str = "*"
    message: str | None = None
    voter: str | None = None
    modifier: str | Callable[[dict], dict] | None = None
    payload: dict | None = None
    delay: int = 5
    limit: int | None = None
    used: int = 0

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ConfigError(f"unknown adversary action {self.kind!r}")
        if self.kind == "modify" and self.modifier is None:
            raise ConfigError("modify needs a modifier")
        if isinstance(self.modifier, str) and self.modifier not in MODIFIERS:
            raise ConfigError(f"unknown modifier {self.modifier!r}")
        if self.kind == "inject" and (self.payload is None or "*" in self.src + self.dst):
            raise ConfigError("inject needs a payload and concrete endpoints")

    def matches_channel(self, ch: Channel) -> bool:
        return fnmatch.fnmatchcase(ch.src, self.src) and fnmatch.fnmatchcase(ch.dst, self.dst)

    def matches(self, msg: Message) -> bool:
        if not self.matches_channel(msg.channel):
            return False
        if self.message is not None and msg.kind != self.message:
            return False
        if self.voter is not None and msg.payload.get("id") != self.voter:
            return False
        return self.limit is None or self.used < self.limit

    def rewrite(self, payload: dict) -> dict:
        fn = MODIFIERS[self.modifier] if isinstance(self.modifier, str) else self.modifier
        return fn(copy.deepcopy(payload))

    @classmethod
    def from_dict(cls, d: dict) -> AdversaryAction:
        return cls(d["kind"], d.get("src", "*"), d.get("dst", "*"), d.get("message"), d.get("voter"),
                   d.get("modifier"), d.get("payload"), int(d.get("delay", 5)), d.get("limit"))


@dataclass
class AdversaryScript:
    corrupted: frozenset = frozenset()
    actions: list[AdversaryAction] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict | None) -> AdversaryScript:
        d = d or {}
        return cls(frozenset(d.get("corrupted", ())), [AdversaryAction.from_dict(a) for a in d.get("network", [])])

    def validate(self, channels: Iterable[Channel]):
        """Refuse any action exceeding what the channel attributes and corruptions permit."""
        channels = list(channels)
        for action in self.actions:
            hits = [ch for ch in channels if action.matches_channel(ch)]
            if not hits:
                raise ConfigError(f"{action.kind} on {action.src}->{action.dst} matches no channel")
            for ch in hits:
                sender_corrupt = ch.src in self.corrupted
                if action.kind in ("modify", "inject") and AUTHENTICATED in ch.attributes and not sender_corrupt:
                    raise ConfigError(f"cannot {action.kind} on authenticated channel {ch.name}")
                if action.kind == "drop" and ch.reliable:
                    raise ConfigError(f"cannot drop on reliable channel {ch.name}")
                if action.kind == "read" and CONFIDENTIAL in ch.attributes and not (
                        sender_corrupt or ch.dst in self.corrupted):
                    raise ConfigError(f"cannot read confidential channel {ch.name}")


@dataclass
class Message:
    seq: int
    channel: Channel
    kind: str
    payload: dict
    attachment: Any = None

    @property
    def src(self) -> str:
        return self.channel.src

    @property
    def dst(self) -> str:
        return self.channel.dst


@dataclass(frozen=True)
class TraceEntry:
    clock: int
    seq: int
    channel: str
    kind: str
    action: str
    digest: str

    def to_json(self) -> str:
        return json.dumps([self.clock, self.seq, self.channel, self.kind, self.action, self.digest])


def payload_digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


class Bus:
    """Single-threaded, seeded, logical-clock message delivery."""

    def __init__(self, channels: Iterable[Channel], script: AdversaryScript | None = None, seed=0,
                 step_budget: int = 1_000_000):
        self.channels = {(ch.src, ch.dst): ch for ch in channels}
        self.script = script or AdversaryScript()
        self.script.validate(self.channels.values())
        self.rng = random.Random(f"bus/{seed}")
        self.step_budget = step_budget
        self.clock = 0
        self.steps = 0
        self.trace: list[TraceEntry] = []
        self.adversary_view: list[tuple[str, dict]] = []
        self._queue: list[tuple[int, int, Message]] = []
        self._seq = 0
        self._handlers: dict[str, Callable[[Message], None]] = {}
        self._idle: list[Callable[[], bool]] = []
        self._injected = False

    def register(self, name: str, handler: Callable[[Message], None], on_idle: Callable[[], bool] | None = None):
        self._handlers[name] = handler
        if on_idle is not None:
            self._idle.append(on_idle)

    def channel(self, src: str, dst: str) -> Channel:
        try:
            return self.channels[(src, dst)]
        except KeyError:
            raise ConfigError(f"no channel {src}->{dst}") from None

    def _record(self, msg: Message, action: str):
        self.trace.append(TraceEntry(self.clock, msg.seq, msg.channel.name, msg.kind, action,
                                     payload_digest(msg.payload)))

    def send(self, src: str, dst: str, kind: str, payload: dict, attachment: Any = None):
        self._seq += 1
        msg = Message(self._seq, self.channel(src, dst), kind, payload, attachment)
        deliver_at = self.clock + 1
        self._record(msg, "send")
        for action in self.script.actions:
            if not action.matches(msg):
                continue
            action.used += 1
            if action.kind == "read":
                self.adversary_view.append((msg.channel.name, copy.deepcopy(msg.payload)))
            elif action.kind == "drop":
                self._record(msg, "drop")
                return
            elif action.kind == "modify":
                msg.payload = action.rewrite(msg.payload)
                self._record(msg, "modify")
            elif action.kind == "reorder":
                deliver_at += 1 + self.rng.randrange(action.delay)
                self._record(msg, "delay")
        heapq.heappush(self._queue, (deliver_at, msg.seq, msg))

    def _inject_once(self):
        if self._injected:
            return
        self._injected = True
        for action in self.script.actions:
            if action.kind == "inject":
                self._seq += 1
                msg = Message(self._seq, self.channel(action.src, action.dst),
                              action.payload.get("type", "inject"), copy.deepcopy(action.payload))
                self._record(msg, "inject")
                heapq.heappush(self._queue, (self.clock + 1, msg.seq, msg))

    def run(self, until: Callable[[], bool] | None = None) -> bool:
        """Deliver until ``until()`` holds or nothing is left; returns whether ``until`` held."""
        self._inject_once()
        while True:
            if until is not None and until():
                return True
            if self._queue:
                if self.steps >= self.step_budget:
                    log.warning("step budget exhausted")
                    return False
                self.steps += 1
                self.clock, _, msg = heapq.heappop(self._queue)
                self._record(msg, "deliver")
                handler = self._handlers.get(msg.dst)
                if handler is not None:
                    handler(msg)
                continue
            if not any(hook() for hook in self._idle):
                return until is None or until()

    def trace_lines(self) -> list[str]:
        return [t.to_json() for t in self.trace]


def rejection_reply(exc: Rejection) -> dict:
    return {"error": exc.code, "source": exc.source if exc.source is not None else "gateway", "detail": exc.detail}


class Gateway:
    """Untrusted fan-out between voters and the control components.

    ``components`` are objects with ``cast_begin``, ``cast_collect`` and
    ``confirm`` (a local ``ControlComponent`` or a remote proxy). Requests
    failing public validation never reach them.
    """

    def __init__(self, config: ElectionConfig, components: Sequence, retired: Iterable[str] = ()):
        self.config = config
        self.components = list(components)
        self.sync_mirror: set[str] = set()
        self.retired = set(retired)

    def cast(self, payload: dict) -> dict:
        try:
            req = wire.cast_request_from_json(payload)
        except (ValueError, KeyError) as exc:
            return {"error": "bad-code", "source": "gateway", "detail": str(exc)}
        try:
            validate_cast_request(self.config, req, self.retired)
            if req.id in self.sync_mirror:
                raise Rejection("duplicate-cast", req.id)
        except Rejection as exc:
            return rejection_reply(exc)
        announcements, errors = [], []
        for cc in self.components:
            try:
                announcements.append(cc.cast_begin(req))
            except Rejection as exc:
                errors.append(exc)
            except (AbortError, OSError) as exc:
                errors.append(Rejection("timeout", str(exc), getattr(cc, "index", None)))
        if announcements:
            self.sync_mirror.add(req.id)
        if errors:
            return rejection_reply(errors[0])
        shares = []
        for cc in self.components:
            try:
                shares.append(cc.cast_collect(req.id, announcements))
            except Rejection as exc:
                return rejection_reply(exc)
            except (AbortError, OSError) as exc:
                return rejection_reply(Rejection("timeout", str(exc), getattr(cc, "index", None)))
        return {"perCC": [wire.vv_share_to_json(s) for s in sorted(shares, key=lambda s: s.index)]}

    def confirm(self, payload: dict) -> dict:
        try:
            req = wire.confirm_request_from_json(payload)
        except (ValueError, KeyError) as exc:
            return {"error": "bad-ca", "source": "gateway", "detail": str(exc)}
        if req.id not in {v.id for v in self.config.all_voters}:
            return rejection_reply(Rejection("unknown-id", req.id))
        shares = []
        for cc in self.components:
            try:
                shares.append(cc.confirm(req))
            except Rejection as exc:
                return rejection_reply(exc)
            except (AbortError, OSError) as exc:
                return rejection_reply(Rejection("timeout", str(exc), getattr(cc, "index", None)))
        return {"perCC": [wire.cv_share_to_json(s) for s in sorted(shares, key=lambda s: s.index)]}


__all__ = [
    "AdversaryAction", "AdversaryScript", "Bus", "Channel", "ConfigError", "Gateway", "Message", "TraceEntry",
    "SECURE", "AUTHENTIC", "INSECURE", "MODIFIERS",
]
