"""HTTP+JSON surface over the core service.

Thin delegation: every endpoint parses its input into typed values, calls
one service operation, and maps domain errors onto statuses:

  validation 400 / authentication 401 / authorization+policy 403 /
  not found 404 / conflict 409 / expired 410 / pending cap 429

Responses carry an ``{"error": {code, message, details}}`` envelope on
failure. The event stream is server-sent events; a new connection first
receives a ``snapshot`` event with all currently pending alerts (that is
the replay after a dropped connection), then live events exactly once.
"""

from __future__ import annotations

import json
import threading
import time
from queue import Empty

from fastapi import Depends, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from pairgate import errors
from pairgate.clock import SystemClock
from pairgate.config import Config
from pairgate.directory import ChannelKind, Kind, Privilege, Role
from pairgate.policy import Purpose
from pairgate.records import DocType
from pairgate.service import CoreService

STATUS_BY_CODE = {
    "validation": 400,
    "weak_secret": 400,
    "empty_pair_list": 400,
    "kind_mismatch": 400,
    "bad_credentials": 401,
    "account_locked": 401,
    "session_invalid": 401,
    "unauthorized": 403,
    "policy_denied": 403,
    "not_paired": 403,
    "no_pair_assigned": 403,
    "grant_required": 403,
    "grant_invalid": 403,
    "not_owner": 403,
    "bad_passcode": 403,
    "not_dual_auth_path": 403,
    "unknown_principal": 404,
    "unknown_patient": 404,
    "unknown_document": 404,
    "unknown_request": 404,
    "unknown_token": 404,
    "not_found": 404,
    "duplicate_id": 409,
    "already_decided": 409,
    "already_removed": 409,
    "passcode_reused": 409,
    "request_expired": 410,
    "passcode_expired": 410,
    "too_many_pending": 429,
    "storage_failure": 500,
    "journal_corrupt": 500,
}


def _status_for(exc: errors.PairgateError) -> int:
    if isinstance(exc, errors.GrantInvalid) and exc.details.get("reason") == "expired":
        return 410
    return STATUS_BY_CODE.get(exc.code, 500)


def _error_response(exc: errors.PairgateError, status: int | None = None) -> JSONResponse:
    return JSONResponse(status_code=status or _status_for(exc),
                        content={"error": exc.to_dict()})


# -- request bodies -----------------------------------------------------------


class LoginBody(BaseModel):
    id: str = Field(max_length=256)
    secret: str = Field(max_length=1024)


class PrincipalBody(BaseModel):
    name: str = Field(max_length=256)
    kind: Kind
    role: Role
    privilege: Privilege
    secret: str = Field(max_length=1024)
    display_name: str | None = Field(default=None, max_length=256)


class DeviceBody(BaseModel):
    channel: ChannelKind
    address: str = Field(max_length=512)


class PairBody(BaseModel):
    user_id: str = Field(max_length=256)
    super_user_ids: list[str]


class PatientBody(BaseModel):
    patient_id: str = Field(max_length=256)


class UploadBody(BaseModel):
    doc_type: DocType
    body_b64: str
    purpose: Purpose = Purpose.TREATMENT


class RestrictionBody(BaseModel):
    blocked_principals: list[str] = Field(default_factory=list)
    blocked_docs: list[str] = Field(default_factory=list)


class SubmitBody(BaseModel):
    patient_id: str = Field(max_length=256)
    purpose: Purpose


class PasscodeBody(BaseModel):
    code: str = Field(max_length=64)


class RevokeBody(BaseModel):
    grant_ref: str = Field(max_length=256)


def _sse(event: str, payload: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(payload)}\n\n"


def build_app(service: CoreService, console_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="pairgate", version="0.1.0", docs_url=None, redoc_url=None)

    def bearer(authorization: str = Header(default="")) -> str:
        if authorization.startswith("Bearer "):
            return authorization[len("Bearer "):]
        return ""

    @app.exception_handler(errors.PairgateError)
    async def on_domain_error(request: Request, exc: errors.PairgateError):
        return _error_response(exc)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        detail = errors.ValidationFailure("request body failed validation")
        return _error_response(detail, status=400)

    @app.get("/health")
    def health():
        return {"ok": True, "service": "pairgate"}

    @app.post("/login")
    def login(body: LoginBody):
        try:
            return service.login(body.id, body.secret)
        except errors.UnknownPrincipal as exc:
            return _error_response(exc, status=401)

    # -- directory ------------------------------------------------------------

    @app.post("/principals", status_code=201)
    def create_principal(body: PrincipalBody, token: str = Depends(bearer)):
        return service.create_principal(token, body.name, body.kind, body.role,
                                        body.privilege, body.secret, body.display_name)

    @app.post("/principals/{principal_id}/deactivate")
    def deactivate(principal_id: str, token: str = Depends(bearer)):
        return service.deactivate_principal(token, principal_id)

    @app.post("/principals/{principal_id}/devices", status_code=201)
    def register_device(principal_id: str, body: DeviceBody,
                        token: str = Depends(bearer)):
        return service.register_device(token, principal_id, body.channel, body.address)

    @app.post("/pairs", status_code=201)
    def assign_pair(body: PairBody, token: str = Depends(bearer)):
        return service.assign_pair(token, body.user_id, body.super_user_ids)

    @app.get("/pairs")
    def list_pairs(token: str = Depends(bearer)):
        return service.list_pairs(token)

    # -- records ----------------------------------------------------------------

    @app.post("/patients", status_code=201)
    def register_patient(body: PatientBody, token: str = Depends(bearer)):
        return service.register_patient(token, body.patient_id)

    @app.post("/patients/{patient_id}/documents", status_code=201)
    def upload_document(patient_id: str, body: UploadBody, token: str = Depends(bearer)):
        import base64
        try:
            raw = base64.b64decode(body.body_b64, validate=True)
        except Exception:
            raise errors.ValidationFailure("body_b64 is not valid base64") from None
        return service.upload_document(token, patient_id, body.doc_type, raw,
                                       body.purpose)

    @app.get("/documents/{doc_id}")
    def read_document(doc_id: str, purpose: Purpose, grant: str | None = None,
                      token: str = Depends(bearer)):
        return service.read_document(token, doc_id, purpose, grant)

    @app.post("/patients/{patient_id}/documents/{doc_id}/remove")
    def remove_document(patient_id: str, doc_id: str, token: str = Depends(bearer)):
        return service.patient_remove_document(token, patient_id, doc_id)

    @app.post("/patients/{patient_id}/restrictions")
    def set_restriction(patient_id: str, body: RestrictionBody,
                        token: str = Depends(bearer)):
        return service.patient_set_restriction(token, patient_id,
                                               body.blocked_principals,
                                               body.blocked_docs)

    # -- approvals ------------------------------------------------------------------

    @app.post("/requests", status_code=201)
    def submit_request(body: SubmitBody, token: str = Depends(bearer)):
        return service.submit_request(token, body.patient_id, body.purpose)

    @app.get("/requests/mine")
    def my_requests(token: str = Depends(bearer)):
        return service.my_requests(token)

    @app.get("/requests/{request_id}")
    def get_request(request_id: str, token: str = Depends(bearer)):
        return service.get_request(token, request_id)

    @app.post("/requests/{request_id}/approve")
    def approve(request_id: str, token: str = Depends(bearer)):
        return service.decide(token, request_id, "approve")

    @app.post("/requests/{request_id}/deny")
    def deny(request_id: str, token: str = Depends(bearer)):
        return service.decide(token, request_id, "deny")

    @app.post("/requests/{request_id}/cancel")
    def cancel(request_id: str, token: str = Depends(bearer)):
        return service.cancel_request(token, request_id)

    @app.post("/requests/{request_id}/passcode")
    def passcode_decide(request_id: str, body: PasscodeBody,
                        token: str = Depends(bearer)):
        return service.decide_with_passcode(token, request_id, body.code)

    @app.post("/passcodes", status_code=201)
    def issue_passcode(token: str = Depends(bearer)):
        return service.issue_passcode(token)

    @app.get("/alerts")
    def alerts(token: str = Depends(bearer)):
        return service.poll_outbox(token)

    @app.post("/grants/revoke")
    def revoke_grant(body: RevokeBody, token: str = Depends(bearer)):
        return service.revoke_grant(token, body.grant_ref)

    @app.get("/grants/validate")
    def validate_grant(grant: str, user_id: str, patient_id: str,
                       token: str = Depends(bearer)):
        return service.validate_grant(token, grant, user_id, patient_id)

    @app.post("/maintenance/expire")
    def run_expiry(token: str = Depends(bearer)):
        return {"expired": service.admin_expire(token)}

    # -- audit --------------------------------------------------------------------

    @app.get("/audit/verify")
    def verify(token: str = Depends(bearer)):
        result = service.verify_journal_authed(token)
        return {"ok": result.ok, "first_bad_seq": result.first_bad_seq}

    @app.get("/audit/report/{principal_id}")
    def report(principal_id: str, start_us: int = 0,
               end_us: int | None = None, token: str = Depends(bearer)):
        end = end_us if end_us is not None else (1 << 62)
        return service.accountability(token, principal_id, start_us, end)

    @app.get("/audit/smf")
    def smf_scan(start_us: int | None = None, end_us: int | None = None,
                 token: str = Depends(bearer)):
        return service.smf_scan(token, start_us, end_us)

    @app.post("/audit/smf/record")
    def smf_record(start_us: int | None = None, end_us: int | None = None,
                   token: str = Depends(bearer)):
        return service.smf_record(token, start_us, end_us)

    # -- live event stream -------------------------------------------------------------

    @app.get("/events")
    def events(token: str = Depends(bearer)):
        sub_id, queue, snapshot = service.subscribe(token)

        def generate():
            try:
                yield _sse("snapshot", {"alerts": snapshot,
                                        "server_now_us": service.clock.now_us()})
                while True:
                    try:
                        event = queue.get(timeout=0.5)
                    except Empty:
                        yield ": ping\n\n"
                        continue
                    yield _sse(event["type"], event)
            finally:
                service.unsubscribe(sub_id)

        return StreamingResponse(generate(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    if console_dir:
        from pathlib import Path

        from fastapi.staticfiles import StaticFiles
        if Path(console_dir).is_dir():
            app.mount("/console", StaticFiles(directory=console_dir, html=True),
                      name="console")

    return app


def serve(config: Config, clock=None, console_dir: str | None = None) -> None:
    """Run the gateway: rebuild state from the journal, start the expiry
    sweep, and serve HTTP until interrupted."""
    import uvicorn

    service = CoreService(config, clock or SystemClock())
    app = build_app(service, console_dir=console_dir)

    stop = threading.Event()

    def sweep():
        while not stop.wait(1.0):
            try:
                service.expire_pending()
            except errors.PairgateError:
                pass     # storage trouble surfaces on the next operation too

    threading.Thread(target=sweep, daemon=True, name="expiry-sweep").start()

    host, _, port = config.listen.rpartition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    finally:
        stop.set()
        service.close()
