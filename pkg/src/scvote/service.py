"""HTTP deployment: one app per control component plus the gateway app voters talk to.

In this mode the gateway relays cast announcements between components. That
needs no extra trust: each announcement carries the sender's signature over
the cast message, which the receiver verifies against its own copy.
"""

from __future__ import annotations

import logging
from typing import Sequence

import httpx
from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from . import wire
from .control_component import CastAnnouncement, ControlComponent, CvShare
from .election import ElectionConfig
from .errors import AbortError, PhaseError, Rejection
from .transport import Gateway, rejection_reply

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0


def _error(exc: Exception, status: int = 409) -> JSONResponse:
    if isinstance(exc, Rejection):
        return JSONResponse(rejection_reply(exc), status_code=status)
    return JSONResponse({"error": "phase", "source": "component", "detail": str(exc)}, status_code=status)


def component_app(cc: ControlComponent) -> FastAPI:
    """Internal API of one component; only the gateway calls it."""
    app = FastAPI(title=f"control component {cc.index}")

    @app.post("/cc/cast_begin")
    def cast_begin(payload: dict = Body(...)):
        try:
            ann = cc.cast_begin(wire.cast_request_from_json(payload))
        except (Rejection, PhaseError) as exc:
            return _error(exc)
        except ValueError as exc:
            return JSONResponse({"error": "bad-code", "source": cc.index, "detail": str(exc)}, status_code=400)
        return wire.announcement_to_json(ann, cc.group)

    @app.post("/cc/cast_collect")
    def cast_collect(payload: dict = Body(...)):
        try:
            anns = [CastAnnouncement(int(a["index"]), a["id"], (), bytes.fromhex(a["signature"]))
                    for a in payload["announcements"]]
            share = cc.cast_collect(payload["id"], anns)
        except (Rejection, PhaseError) as exc:
            return _error(exc)
        except (KeyError, ValueError) as exc:
            return JSONResponse({"error": "peer-signature-failure", "source": cc.index, "detail": str(exc)},
                                status_code=400)
        return wire.vv_share_to_json(share)

    @app.post("/cc/confirm")
    def confirm(payload: dict = Body(...)):
        try:
            share = cc.confirm(wire.confirm_request_from_json(payload))
        except (Rejection, PhaseError) as exc:
            return _error(exc)
        except ValueError as exc:
            return JSONResponse({"error": "bad-ca", "source": cc.index, "detail": str(exc)}, status_code=400)
        return wire.cv_share_to_json(share)

    @app.get("/cc/status")
    def status():
        return {"index": cc.index, "closed": cc.closed, "sync": len(cc.sync), "cast": len(cc.cast),
                "conf": len(cc.conf)}

    return app


class RemoteComponent:
    """Gateway-side proxy for a component served over HTTP."""

    def __init__(self, index: int, base_url: str, config: ElectionConfig, timeout: float = DEFAULT_TIMEOUT,
                 client: httpx.Client | None = None):
        self.index = index
        self.config = config
        self.client = client or httpx.Client(base_url=base_url, timeout=timeout)

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self.client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise AbortError(f"component {self.index} unreachable: {exc}") from None
        data = resp.json()
        if resp.status_code != 200:
            code = data.get("error")
            if code in ("phase", None):
                raise AbortError(data.get("detail", "component refused"))
            raise Rejection(code, data.get("detail", ""), data.get("source", self.index))
        return data

    def cast_begin(self, req) -> CastAnnouncement:
        d = self._post("/cc/cast_begin", wire.cast_request_to_json(req))
        return CastAnnouncement(int(d["index"]), d["id"], (), bytes.fromhex(d["signature"]))

    def cast_collect(self, voter_id: str, announcements: Sequence[CastAnnouncement]):
        d = self._post("/cc/cast_collect", {
            "id": voter_id,
            "announcements": [{"index": a.index, "id": a.id, "signature": a.signature.hex()} for a in announcements],
        })
        return wire.vv_share_from_json(d, self.config, voter_id)

    def confirm(self, req):
        d = self._post("/cc/confirm", {"id": req.id, "ca": req.ca})
        return CvShare(int(d["index"]), req.id, self.config.cv_space.parse(d["cv"]))


def gateway_app(gateway: Gateway) -> FastAPI:
    """The voter-facing JSON API."""
    app = FastAPI(title="voting gateway")

    def respond(reply: dict) -> JSONResponse:
        if "error" not in reply:
            return JSONResponse(reply)
        status = 504 if reply["error"] == "timeout" else 409
        return JSONResponse(reply, status_code=status)

    @app.post("/api/v1/cast")
    def cast(payload: dict = Body(...)):
        return respond(gateway.cast(payload))

    @app.post("/api/v1/confirm")
    def confirm(payload: dict = Body(...)):
        return respond(gateway.confirm(payload))

    @app.get("/api/v1/election")
    def election():
        cfg = gateway.config
        return {"election_id": cfg.election_id, "ncc": cfg.ncc,
                "questions": [{"id": q.id, "label": q.label, "k": q.k, "options": list(q.options)}
                              for q in cfg.questions]}

    return app


class HttpGatewayClient:
    """Voter-side client for a running gateway."""

    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT, client: httpx.Client | None = None):
        self.client = client or httpx.Client(base_url=base_url, timeout=timeout)

    def _post(self, path: str, payload: dict) -> dict:
        try:
            return self.client.post(path, json=payload).json()
        except httpx.HTTPError as exc:
            return {"error": "timeout", "source": "gateway", "detail": str(exc)}

    def cast(self, payload: dict) -> dict:
        return self._post("/api/v1/cast", payload)

    def confirm(self, payload: dict) -> dict:
        return self._post("/api/v1/confirm", payload)
