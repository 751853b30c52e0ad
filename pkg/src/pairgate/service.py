"""Core service: every operation behind one journal sequencer.

Execution model is event-sourced. An operation validates against current
state, appends one or more journal entries (write-ahead: durable before the
operation reports success), and only then applies those entries to the
in-memory state through the same ``_apply`` dispatch that journal replay
uses at startup. Killing the process at any point therefore leaves a journal
prefix whose replay equals the state the survivors saw.

Authorization failures that refuse a state change or a document body are
themselves journaled as ``access_denied`` entries; purely informational
queries, validation rejections, and conflicts are not (the rule the
completeness checks encode). Session tokens, grant tokens, and passcodes
appear in the journal only as SHA-256 digests.

``sabotage`` deliberately disables one named defense at construction time.
It exists so the threat scenarios can prove they are falsifiable and is not
reachable from configuration files. Flags: dual_auth_bypass, monitor_blind,
admin_check_off, verify_always_ok, login_backdoor, unlogged_reads,
weak_auth_ok, plaintext_journal_secrets.
"""

from __future__ import annotations

import base64
import secrets
import threading
from dataclasses import dataclass
from pathlib import Path
from queue import Queue

from pairgate import approval as apr
from pairgate import errors, policy, records, smf
from pairgate.audit import AuditEntry, AuditLog, EventKind, verify_file, VerifyResult
from pairgate.clock import Clock, s_to_us
from pairgate.config import Config
from pairgate.directory import (ChannelEndpoint, ChannelKind, Credential, Directory,
                                Kind, Principal, Privilege, Role)

SYSTEM_ACTOR = "system"


def new_token() -> str:
    return secrets.token_urlsafe(24)


def new_id(prefix: str) -> str:
    return f"{prefix}-{secrets.token_hex(6)}"


@dataclass
class Session:
    token_digest: str
    principal_id: str
    issued_at_us: int
    expires_at_us: int
    revoked: bool = False


def _csv(values) -> str:
    return ",".join(values)


def _uncsv(text: str) -> tuple:
    return tuple(v for v in text.split(",") if v)


class CoreService:
    def __init__(self, config: Config, clock: Clock, *,
                 sabotage: frozenset = frozenset()):
        config.validate()
        self.config = config
        self.clock = clock
        self.sabotage = frozenset(sabotage)
        self._lock = threading.RLock()

        self.directory = Directory()
        self.records = records.RecordStore()
        self.approvals = apr.ApprovalState()
        self.matrix = policy.PermissionMatrix(config.policy_overrides)

        self.sessions: dict = {}        # session-token digest -> Session
        self._grant_plain: dict = {}    # request_id -> plain grant token (memory only)
        self._subscribers: dict = {}    # sub id -> (principal_id, Queue)
        self._recorded_alerts: set = set()

        fresh = not Path(config.journal_path).exists()
        self.log = AuditLog(config.journal_path, fsync=config.journal_fsync,
                            skip_verify="verify_always_ok" in self.sabotage)
        for entry in self.log.entries:
            self._apply(entry)

        if fresh:
            self._bootstrap_admin()
        self._emit(SYSTEM_ACTOR, EventKind.SERVICE_STARTED, "", config.echo())

    def close(self) -> None:
        self.log.close()

    # ------------------------------------------------------------------ internals

    def _bootstrap_admin(self) -> None:
        if not self.config.bootstrap_admin_secret:
            raise errors.ValidationFailure(
                "fresh journal requires bootstrap_admin_secret in the config")
        admin_id = self.config.bootstrap_admin_id
        self.directory.validate_create(admin_id, Kind.SUPER_USER, Role.ADMIN,
                                       Privilege.HIGH, self.config.bootstrap_admin_secret)
        credential = Credential.create(self.config.bootstrap_admin_secret,
                                       self.config.kdf_iterations)
        self._emit(SYSTEM_ACTOR, EventKind.PRINCIPAL_CREATED, admin_id, {
            "display_name": admin_id,
            "kind": Kind.SUPER_USER.value,
            "role": Role.ADMIN.value,
            "privilege": Privilege.HIGH.value,
            "credential": credential.encode(),
        })

    def _emit(self, actor: str, kind: EventKind, subject: str, detail: dict) -> AuditEntry:
        entry = self.log.append(self.clock.now_us(), actor, kind, subject, detail)
        self._apply(entry)
        return entry

    def _deny(self, actor: str, operation: str, subject: str, reason: str,
              exc: errors.PairgateError) -> None:
        """Journal a refused attempt, then raise it."""
        self._emit(actor, EventKind.ACCESS_DENIED, subject,
                   {"op": operation, "reason": reason})
        raise exc

    # ------------------------------------------------------------------ replay

    def _apply(self, e: AuditEntry) -> None:
        kind, d = e.kind, e.detail
        if kind is EventKind.PRINCIPAL_CREATED:
            devices = tuple(
                ChannelEndpoint(ChannelKind(k), a)
                for k, _, a in (item.partition(":")
                                for item in _uncsv(d.get("devices", ""))))
            self.directory.apply_created(Principal(
                id=e.subject,
                display_name=d["display_name"],
                kind=Kind(d["kind"]),
                role=Role(d["role"]),
                privilege=Privilege(d["privilege"]),
                credential=Credential.decode(d["credential"]),
                devices=devices,
            ))
        elif kind is EventKind.PRINCIPAL_DEACTIVATED:
            self.directory.apply_deactivated(e.subject)
        elif kind is EventKind.DEVICE_REGISTERED:
            self.directory.apply_device_registered(
                e.subject, ChannelEndpoint(ChannelKind(d["channel"]), d["address"]))
        elif kind is EventKind.PAIR_ASSIGNED:
            from pairgate.directory import PairAssignment
            self.directory.apply_pair(
                PairAssignment(e.subject, _uncsv(d["super_user_ids"])))
        elif kind is EventKind.PATIENT_REGISTERED:
            self.records.apply_patient_registered(e.subject)
        elif kind is EventKind.LOGIN:
            self.directory.apply_login_ok(e.actor_id)
        elif kind is EventKind.LOGIN_FAILURE:
            self.directory.apply_login_failure(
                e.subject, d.get("reason", ""), e.ts_us,
                self.config.lockout_threshold,
                s_to_us(self.config.lockout_duration_s))
        elif kind is EventKind.DOC_UPLOADED:
            doc_type = records.DocType(d["doc_type"])
            self.records.apply_uploaded(records.Document(
                doc_id=e.subject,
                patient_id=d["patient_id"],
                doc_class=records.doc_class_for(doc_type),
                doc_type=doc_type,
                author_id=d["author_id"],
                created_at_us=e.ts_us,
                body=base64.b64decode(d["body_b64"]),
            ))
        elif kind is EventKind.DOC_REMOVED:
            self.records.apply_removed(e.subject)
        elif kind is EventKind.RESTRICTION_SET:
            self.records.apply_restriction(records.PatientRestriction(
                e.subject,
                frozenset(_uncsv(d["blocked_principals"])),
                frozenset(_uncsv(d["blocked_docs"]))))
        elif kind is EventKind.REQUEST_SUBMITTED:
            self.approvals.apply_submitted(apr.AccessRequest(
                request_id=e.subject,
                user_id=d["user_id"],
                patient_scope=d["patient_scope"],
                purpose=policy.Purpose(d["purpose"]),
                state=apr.RequestState.PENDING,
                created_at_us=e.ts_us,
                alert_targets=_uncsv(d["alert_targets"]),
            ))
        elif kind is EventKind.REQUEST_DECIDED:
            verdict = apr.RequestState.APPROVED if d["verdict"] == "approve" \
                else apr.RequestState.DENIED
            self.approvals.apply_decided(
                e.subject, verdict, e.actor_id, ChannelKind(d["channel"]), e.ts_us)
            if "passcode_id" in d:
                self.approvals.apply_passcode_used(d["passcode_id"])
        elif kind is EventKind.REQUEST_EXPIRED:
            self.approvals.apply_expired(e.subject, e.ts_us)
        elif kind is EventKind.REQUEST_CANCELLED:
            self.approvals.apply_cancelled(e.subject, e.ts_us)
        elif kind is EventKind.GRANT_ISSUED:
            self.approvals.apply_grant_issued(apr.GrantToken(
                token_digest=d["token_digest"],
                request_id=e.subject,
                user_id=d["user_id"],
                patient_scope=d["patient_scope"],
                issued_at_us=e.ts_us,
                ttl_us=int(d["ttl_us"]),
            ))
        elif kind is EventKind.GRANT_REVOKED:
            self.approvals.apply_grant_revoked(e.subject)
        elif kind is EventKind.PASSCODE_ISSUED:
            self.approvals.apply_passcode_issued(apr.Passcode(
                passcode_id=e.subject,
                super_user_id=e.actor_id,
                code_digest=d["code_digest"],
                issued_at_us=e.ts_us,
            ))
        elif kind is EventKind.SMF_ALERT:
            self._recorded_alerts.add(d.get("dedup", ""))
        # doc_read, access_denied, service_started carry no state.

    # ------------------------------------------------------------------ sessions

    def login(self, principal_id: str, secret: str) -> dict:
        with self._lock:
            now = self.clock.now_us()
            outcome = self.directory.classify_login(principal_id, secret, now)
            if ("login_backdoor" in self.sabotage and outcome != "unknown"
                    and "' OR" in secret):
                outcome = "ok"   # simulated injectable credential check
            if "weak_auth_ok" in self.sabotage and outcome == "locked":
                principal = self.directory.principals[principal_id]
                outcome = "ok" if principal.credential.matches(secret) else "bad"
            if outcome == "ok":
                token = new_token()
                digest = apr.digest_token(token)
                self._emit(principal_id, EventKind.LOGIN, principal_id,
                           {"session": digest})
                session = Session(digest, principal_id, now,
                                  now + s_to_us(self.config.session_ttl_s))
                self.sessions[digest] = session
                principal = self.directory.get(principal_id)
                return {"token": token, "expires_at_us": session.expires_at_us,
                        "principal": principal.public_view()}
            self._emit("", EventKind.LOGIN_FAILURE, principal_id, {"reason": outcome})
            if outcome == "unknown":
                raise errors.UnknownPrincipal(f"no principal {principal_id!r}")
            if outcome == "locked":
                raise errors.AccountLocked("account is locked; retry later")
            raise errors.BadCredentials("credentials rejected")

    def _session(self, token: str) -> Principal:
        session = self.sessions.get(apr.digest_token(token or ""))
        if session is None or session.revoked:
            raise errors.SessionInvalid("no such session")
        if self.clock.now_us() >= session.expires_at_us:
            raise errors.SessionInvalid("session expired")
        principal = self.directory.principals.get(session.principal_id)
        if principal is None or not principal.active:
            raise errors.SessionInvalid("principal no longer active")
        return principal

    def _require_admin(self, principal: Principal, operation: str) -> None:
        if "admin_check_off" in self.sabotage:
            return
        if principal.role is not Role.ADMIN:
            self._deny(principal.id, operation, "", "admin_required",
                       errors.Unauthorized(f"{operation} requires the admin role"))

    # ------------------------------------------------------------------ directory ops

    def create_principal(self, token: str, name: str, kind: Kind, role: Role,
                         privilege: Privilege, secret: str,
                         display_name: str | None = None) -> dict:
        with self._lock:
            caller = self._session(token)
            self._require_admin(caller, "create_principal")
            if "weak_auth_ok" in self.sabotage:
                try:
                    self.directory.validate_create(name, kind, role, privilege, secret)
                except errors.WeakSecret:
                    pass
            else:
                self.directory.validate_create(name, kind, role, privilege, secret)
            credential = Credential.create(secret, self.config.kdf_iterations)
            detail = {
                "display_name": display_name or name,
                "kind": kind.value,
                "role": role.value,
                "privilege": privilege.value,
                "credential": credential.encode(),
            }
            if "plaintext_journal_secrets" in self.sabotage:
                detail["secret"] = secret
            self._emit(caller.id, EventKind.PRINCIPAL_CREATED, name, detail)
            return self.directory.get(name).public_view()

    def assign_pair(self, token: str, user_id: str, super_user_ids: list) -> dict:
        with self._lock:
            caller = self._session(token)
            self._require_admin(caller, "assign_pair")
            self.directory.validate_pair(user_id, super_user_ids)
            self._emit(caller.id, EventKind.PAIR_ASSIGNED, user_id,
                       {"super_user_ids": _csv(super_user_ids)})
            return {"user_id": user_id, "super_user_ids": list(super_user_ids)}

    def deactivate_principal(self, token: str, principal_id: str) -> dict:
        with self._lock:
            caller = self._session(token)
            self._require_admin(caller, "deactivate_principal")
            self.directory.get(principal_id)
            self._emit(caller.id, EventKind.PRINCIPAL_DEACTIVATED, principal_id, {})
            for session in self.sessions.values():
                if session.principal_id == principal_id:
                    session.revoked = True
            return self.directory.get(principal_id).public_view()

    def register_device(self, token: str, principal_id: str, channel: ChannelKind,
                        address: str) -> dict:
        with self._lock:
            caller = self._session(token)
            self._require_admin(caller, "register_device")
            self.directory.get(principal_id)
            self._emit(caller.id, EventKind.DEVICE_REGISTERED, principal_id,
                       {"channel": channel.value, "address": address})
            return self.directory.get(principal_id).public_view()

    def list_pairs(self, token: str) -> list:
        with self._lock:
            caller = self._session(token)
            if caller.role is not Role.ADMIN:
                raise errors.Unauthorized("listing pairs requires the admin role")
            return [{"user_id": p.user_id, "super_user_ids": list(p.super_user_ids)}
                    for p in sorted(self.directory.pairs.values(),
                                    key=lambda p: p.user_id)]

    # ------------------------------------------------------------------ records ops

    def register_patient(self, token: str, patient_id: str) -> dict:
        with self._lock:
            caller = self._session(token)
            self._require_admin(caller, "register_patient")
            self.records.validate_register_patient(patient_id)
            self._emit(caller.id, EventKind.PATIENT_REGISTERED, patient_id, {})
            return {"patient_id": patient_id}

    def _doc_context(self, patient_id: str, doc_class: records.DocClass,
                     doc_id: str | None) -> policy.DocumentContext:
        restriction = self.records.restriction_for(patient_id)
        return policy.DocumentContext(
            patient_id=patient_id,
            doc_class=doc_class,
            doc_id=doc_id,
            blocked_principals=restriction.blocked_principal_ids,
            blocked_docs=restriction.blocked_doc_ids,
        )

    def upload_document(self, token: str, patient_id: str, doc_type: records.DocType,
                        body: bytes, purpose: policy.Purpose = policy.Purpose.TREATMENT) -> dict:
        with self._lock:
            caller = self._session(token)
            self.records.validate_patient(patient_id)
            context = self._doc_context(patient_id, records.doc_class_for(doc_type), None)
            decision = policy.evaluate(caller, context, policy.Action.UPLOAD,
                                       purpose, self.matrix)
            if decision.outcome is not policy.Outcome.PERMIT:
                self._deny(caller.id, "upload_document", patient_id, decision.reason,
                           errors.PolicyDenied(f"upload denied: {decision.reason}",
                                               reason=decision.reason))
            doc_id = new_id("doc")
            self._emit(caller.id, EventKind.DOC_UPLOADED, doc_id, {
                "patient_id": patient_id,
                "doc_type": doc_type.value,
                "author_id": caller.id,
                "body_b64": base64.b64encode(body).decode("ascii"),
            })
            return self.records.documents[doc_id].meta_view()

    def read_document(self, token: str, doc_id: str, purpose: policy.Purpose,
                      grant_token: str | None = None) -> dict:
        with self._lock:
            caller = self._session(token)
            doc = self.records.documents.get(doc_id)
            if doc is None or doc.removed:
                self._deny(caller.id, "read_document", doc_id, "not_found",
                           errors.NotFound(f"no document {doc_id!r}"))
            context = self._doc_context(doc.patient_id, doc.doc_class, doc_id)
            decision = policy.evaluate(caller, context, policy.Action.READ,
                                       purpose, self.matrix)
            if ("dual_auth_bypass" in self.sabotage
                    and decision.outcome is policy.Outcome.REQUIRE_DUAL_AUTH):
                decision = policy.PolicyDecision(policy.Outcome.PERMIT, "ok")
            if decision.outcome is policy.Outcome.DENY:
                self._deny(caller.id, "read_document", doc_id, decision.reason,
                           errors.PolicyDenied(f"read denied: {decision.reason}",
                                               reason=decision.reason))
            grant_digest = ""
            if decision.outcome is policy.Outcome.REQUIRE_DUAL_AUTH:
                if not grant_token:
                    self._deny(caller.id, "read_document", doc_id, "grant_required",
                               errors.GrantRequired(
                                   "a paired approval grant is required for this read"))
                validity = self.approvals.validate_grant(
                    grant_token, caller.id, doc.patient_id, self.clock.now_us())
                if not validity.valid:
                    self._deny(caller.id, "read_document", doc_id,
                               f"grant_{validity.reason}",
                               errors.GrantInvalid(f"grant rejected: {validity.reason}",
                                                   reason=validity.reason))
                grant_digest = apr.digest_token(grant_token)
            detail = {
                "patient_id": doc.patient_id,
                "purpose": purpose.value,
                "grant": grant_digest,
            }
            if decision.emergency:
                detail["emergency"] = "true"
            if decision.emergency_override:
                detail["emergency_override"] = "true"
            if "unlogged_reads" not in self.sabotage:
                self._emit(caller.id, EventKind.DOC_READ, doc_id, detail)
            return {**doc.meta_view(),
                    "body_b64": base64.b64encode(doc.body).decode("ascii")}

    def patient_remove_document(self, token: str, patient_id: str, doc_id: str) -> dict:
        with self._lock:
            caller = self._session(token)
            doc = self.records.validate_remove(patient_id, doc_id)
            context = self._doc_context(patient_id, doc.doc_class, doc_id)
            decision = policy.evaluate(caller, context, policy.Action.REMOVE,
                                       policy.Purpose.AUDIT, self.matrix)
            if decision.outcome is not policy.Outcome.PERMIT:
                self._deny(caller.id, "patient_remove_document", doc_id, decision.reason,
                           errors.PolicyDenied(f"remove denied: {decision.reason}",
                                               reason=decision.reason))
            self._emit(caller.id, EventKind.DOC_REMOVED, doc_id,
                       {"patient_id": patient_id})
            return self.records.documents[doc_id].meta_view()

    def patient_set_restriction(self, token: str, patient_id: str,
                                blocked_principals, blocked_docs) -> dict:
        with self._lock:
            caller = self._session(token)
            blocked_principals = sorted(set(blocked_principals))
            blocked_docs = sorted(set(blocked_docs))
            self.records.validate_restriction(patient_id, blocked_docs)
            for principal_id in blocked_principals:
                self.directory.get(principal_id)
            context = self._doc_context(patient_id, records.DocClass.CLINICAL, None)
            decision = policy.evaluate(caller, context, policy.Action.RESTRICT,
                                       policy.Purpose.AUDIT, self.matrix)
            if decision.outcome is not policy.Outcome.PERMIT:
                self._deny(caller.id, "patient_set_restriction", patient_id,
                           decision.reason,
                           errors.PolicyDenied(f"restrict denied: {decision.reason}",
                                               reason=decision.reason))
            self._emit(caller.id, EventKind.RESTRICTION_SET, patient_id, {
                "blocked_principals": _csv(blocked_principals),
                "blocked_docs": _csv(blocked_docs),
            })
            return {"patient_id": patient_id,
                    "blocked_principals": blocked_principals,
                    "blocked_docs": blocked_docs}

    # ------------------------------------------------------------------ approval ops

    def submit_request(self, token: str, patient_scope: str,
                       purpose: policy.Purpose) -> dict:
        with self._lock:
            caller = self._session(token)
            self.records.validate_patient(patient_scope)
            pair = self.directory.pair_for(caller.id)
            if pair is None:
                raise errors.NoPairAssigned(
                    f"{caller.id!r} has no approver pair assigned")
            context = self._doc_context(patient_scope, records.DocClass.CLINICAL, None)
            decision = policy.evaluate(caller, context, policy.Action.READ,
                                       purpose, self.matrix)
            if decision.outcome is not policy.Outcome.REQUIRE_DUAL_AUTH:
                exc = errors.NotDualAuthPath(
                    f"policy outcome is {decision.outcome.value}, not dual-auth",
                    outcome=decision.outcome.value, reason=decision.reason)
                if decision.outcome is policy.Outcome.DENY:
                    self._deny(caller.id, "submit_request", patient_scope,
                               decision.reason, exc)
                raise exc
            if self.approvals.pending_count(caller.id) >= self.config.pending_cap:
                raise errors.TooManyPending(
                    f"pending cap of {self.config.pending_cap} reached")
            request_id = new_id("req")
            self._emit(caller.id, EventKind.REQUEST_SUBMITTED, request_id, {
                "user_id": caller.id,
                "patient_scope": patient_scope,
                "purpose": purpose.value,
                "alert_targets": _csv(pair.super_user_ids),
            })
            request = self.approvals.get_request(request_id)
            self._publish(request.alert_targets,
                          {"type": "alert", "request": request.view()})
            return request.view()

    def _materialize_expiry(self, request: apr.AccessRequest) -> apr.AccessRequest:
        """Lazily transition a pending-but-stale request before acting on it."""
        timeout_us = s_to_us(self.config.approval_timeout_s)
        if self.approvals.is_expired(request, self.clock.now_us(), timeout_us):
            self._emit(SYSTEM_ACTOR, EventKind.REQUEST_EXPIRED, request.request_id,
                       {"user_id": request.user_id})
            request = self.approvals.get_request(request.request_id)
            self._publish(request.alert_targets,
                          {"type": "expired", "request": request.view()})
        return request

    def _check_decider(self, decider: Principal, request: apr.AccessRequest,
                       operation: str) -> None:
        if decider.kind is not Kind.SUPER_USER:
            self._deny(decider.id, operation, request.request_id, "not_paired",
                       errors.NotPaired("only super users decide requests"))
        pair = self.directory.pair_for(request.user_id)
        current = pair.super_user_ids if pair else ()
        if decider.id not in request.alert_targets or decider.id not in current:
            self._deny(decider.id, operation, request.request_id, "not_paired",
                       errors.NotPaired(
                           f"{decider.id!r} is not paired with {request.user_id!r}"))

    def _decide_checked(self, request_id: str) -> apr.AccessRequest:
        request = self.approvals.get_request(request_id)
        request = self._materialize_expiry(request)
        if request.state is apr.RequestState.EXPIRED:
            raise errors.RequestExpired(f"request {request_id!r} expired")
        if request.state is not apr.RequestState.PENDING:
            raise errors.AlreadyDecided(
                f"request already {request.state.value}",
                state=request.state.value, decider_id=request.decider_id)
        return request

    def _record_decision(self, decider_id: str, request: apr.AccessRequest,
                         verdict: str, channel: ChannelKind,
                         passcode_id: str | None = None) -> dict:
        detail = {"verdict": verdict, "channel": channel.value,
                  "user_id": request.user_id}
        if passcode_id:
            detail["passcode_id"] = passcode_id
        self._emit(decider_id, EventKind.REQUEST_DECIDED, request.request_id, detail)
        grant_view = None
        if verdict == "approve":
            plain = new_token()
            ttl_us = s_to_us(self.config.grant_ttl_s)
            self._emit(decider_id, EventKind.GRANT_ISSUED, request.request_id, {
                "token_digest": apr.digest_token(plain),
                "user_id": request.user_id,
                "patient_scope": request.patient_scope,
                "ttl_us": str(ttl_us),
            })
            self._grant_plain[request.request_id] = plain
            grant = self.approvals.grants[apr.digest_token(plain)]
            grant_view = {"token_digest": grant.token_digest,
                          "expires_at_us": grant.expires_at_us()}
        decided = self.approvals.get_request(request.request_id)
        self._publish(decided.alert_targets,
                      {"type": "decided", "request": decided.view()})
        view = decided.view()
        if grant_view:
            view["grant"] = grant_view
        return view

    def decide(self, token: str, request_id: str, verdict: str) -> dict:
        if verdict not in ("approve", "deny"):
            raise errors.ValidationFailure("verdict must be approve or deny")
        with self._lock:
            caller = self._session(token)
            request = self._decide_checked(request_id)
            self._check_decider(caller, request, "decide")
            return self._record_decision(caller.id, request, verdict,
                                         ChannelKind.PUSH_CONSOLE)

    def decide_with_passcode(self, token: str, request_id: str, code: str) -> dict:
        with self._lock:
            caller = self._session(token)
            request = self.approvals.get_request(request_id)
            if request.user_id != caller.id:
                self._deny(caller.id, "decide_with_passcode", request_id,
                           "not_request_owner",
                           errors.Unauthorized("only the requester may enter a passcode"))
            request = self._decide_checked(request_id)
            pair = self.directory.pair_for(request.user_id)
            current = set(pair.super_user_ids) if pair else set()
            eligible = set(request.alert_targets) & current
            try:
                passcode = self.approvals.match_passcode(
                    code, eligible, self.clock.now_us(),
                    s_to_us(self.config.passcode_ttl_s))
            except (errors.BadPasscode, errors.PasscodeExpired,
                    errors.PasscodeReused, errors.NotPaired) as exc:
                self._deny(caller.id, "decide_with_passcode", request_id,
                           exc.code, exc)
            return self._record_decision(passcode.super_user_id, request, "approve",
                                         ChannelKind.PASSCODE, passcode.passcode_id)

    def issue_passcode(self, token: str) -> dict:
        with self._lock:
            caller = self._session(token)
            if caller.kind is not Kind.SUPER_USER:
                self._deny(caller.id, "issue_passcode", "", "unauthorized",
                           errors.Unauthorized("only super users issue passcodes"))
            passcode_id = new_id("pc")
            code = f"{secrets.randbelow(10**6):06d}"
            self._emit(caller.id, EventKind.PASSCODE_ISSUED, passcode_id,
                       {"code_digest": apr.passcode_digest(passcode_id, code)})
            return {"passcode_id": passcode_id, "code": code,
                    "expires_at_us": self.clock.now_us()
                    + s_to_us(self.config.passcode_ttl_s)}

    def cancel_request(self, token: str, request_id: str) -> dict:
        with self._lock:
            caller = self._session(token)
            request = self.approvals.get_request(request_id)
            if request.user_id != caller.id:
                self._deny(caller.id, "cancel_request", request_id, "not_request_owner",
                           errors.Unauthorized("only the requester may cancel"))
            request = self._decide_checked(request_id)
            self._emit(caller.id, EventKind.REQUEST_CANCELLED, request_id,
                       {"user_id": caller.id})
            cancelled = self.approvals.get_request(request_id)
            self._publish(cancelled.alert_targets,
                          {"type": "cancelled", "request": cancelled.view()})
            return cancelled.view()

    def expire_pending(self) -> list:
        with self._lock:
            timeout_us = s_to_us(self.config.approval_timeout_s)
            expired = []
            for request in self.approvals.stale_pending(self.clock.now_us(), timeout_us):
                self._emit(SYSTEM_ACTOR, EventKind.REQUEST_EXPIRED, request.request_id,
                           {"user_id": request.user_id})
                view = self.approvals.get_request(request.request_id).view()
                self._publish(request.alert_targets, {"type": "expired", "request": view})
                expired.append(view)
            return expired

    def validate_grant(self, token: str, grant_token: str, user_id: str,
                       patient_scope: str) -> dict:
        with self._lock:
            caller = self._session(token)
            if caller.kind is not Kind.SUPER_USER and caller.role is not Role.ADMIN:
                raise errors.Unauthorized("grant validation is an approver/admin tool")
            validity = self.approvals.validate_grant(
                grant_token, user_id, patient_scope, self.clock.now_us())
            return {"valid": validity.valid, "reason": validity.reason}

    def revoke_grant(self, token: str, grant_ref: str) -> dict:
        """grant_ref may be the full token or its journal digest."""
        with self._lock:
            caller = self._session(token)
            if caller.kind is not Kind.SUPER_USER and caller.role is not Role.ADMIN:
                self._deny(caller.id, "revoke_grant", "", "unauthorized",
                           errors.Unauthorized("revocation is an approver/admin tool"))
            digest = grant_ref if grant_ref in self.approvals.grants \
                else apr.digest_token(grant_ref)
            grant = self.approvals.grants.get(digest)
            if grant is None:
                raise errors.UnknownToken("no grant matches this token or digest")
            already = grant.revoked
            if not already:
                self._emit(caller.id, EventKind.GRANT_REVOKED, digest, {})
            return {"token_digest": digest, "revoked": True,
                    "already_revoked": already}

    def poll_outbox(self, token: str) -> list:
        with self._lock:
            caller = self._session(token)
            if caller.kind is not Kind.SUPER_USER:
                raise errors.Unauthorized("the alert outbox is a super-user surface")
            now = self.clock.now_us()
            timeout_us = s_to_us(self.config.approval_timeout_s)
            alerts = []
            for request in self.approvals.pending_for_target(caller.id):
                if now >= request.created_at_us + timeout_us:
                    continue     # stale; the sweep will expire it
                view = request.view()
                view["age_us"] = now - request.created_at_us
                alerts.append(view)
            return alerts

    def my_requests(self, token: str) -> list:
        with self._lock:
            caller = self._session(token)
            mine = sorted((r for r in self.approvals.requests.values()
                           if r.user_id == caller.id),
                          key=lambda r: (r.created_at_us, r.request_id))
            return [self._request_with_grant(r) for r in mine]

    def get_request(self, token: str, request_id: str) -> dict:
        with self._lock:
            caller = self._session(token)
            request = self.approvals.get_request(request_id)
            allowed = (caller.id == request.user_id
                       or caller.id in request.alert_targets
                       or caller.role is Role.ADMIN)
            if not allowed:
                raise errors.Unauthorized("not your request")
            return self._request_with_grant(request)

    def _request_with_grant(self, request: apr.AccessRequest) -> dict:
        view = request.view()
        digest = self.approvals.grant_by_request.get(request.request_id)
        if digest:
            grant = self.approvals.grants[digest]
            view["grant"] = {
                "token": self._grant_plain.get(request.request_id),
                "token_digest": digest,
                "expires_at_us": grant.expires_at_us(),
                "revoked": grant.revoked,
            }
        view["server_now_us"] = self.clock.now_us()
        return view

    def admin_expire(self, token: str) -> list:
        with self._lock:
            caller = self._session(token)
            self._require_admin(caller, "admin_expire")
            return self.expire_pending()

    # ------------------------------------------------------------------ audit ops

    def verify_journal(self) -> VerifyResult:
        if "verify_always_ok" in self.sabotage:
            return VerifyResult(True)
        return verify_file(self.config.journal_path)

    def verify_journal_authed(self, token: str) -> VerifyResult:
        self._session(token)
        return self.verify_journal()

    def accountability(self, token: str, principal_id: str, start_us: int,
                       end_us: int) -> list:
        from pairgate.audit import accountability_report
        with self._lock:
            caller = self._session(token)
            if caller.role is not Role.ADMIN and caller.id != principal_id:
                raise errors.Unauthorized("report access is admin-or-self")
            return [e.view() for e in accountability_report(
                self.log.entries, principal_id, start_us, end_us)]

    def _smf_config(self) -> smf.SmfConfig:
        c = self.config
        return smf.SmfConfig(
            r1_min_decided=c.smf_r1_min_decided, r1_share=c.smf_r1_share,
            r2_hourly_max=c.smf_r2_hourly_max, r3_open_hour=c.smf_r3_open_hour,
            r3_close_hour=c.smf_r3_close_hour, r4_window_s=c.smf_r4_window_s,
            r4_min_count=c.smf_r4_min_count, utc_offset_min=c.utc_offset_min)

    def smf_scan(self, token: str, start_us: int | None = None,
                 end_us: int | None = None) -> list:
        with self._lock:
            caller = self._session(token)
            if caller.kind is not Kind.SUPER_USER and caller.role is not Role.ADMIN:
                raise errors.Unauthorized("activity scan is an approver/admin tool")
            return [a.view() for a in self._scan(start_us, end_us)]

    def _scan(self, start_us: int | None, end_us: int | None) -> list:
        if "monitor_blind" in self.sabotage:
            return []
        start = 0 if start_us is None else start_us
        end = self.clock.now_us() + 1 if end_us is None else end_us
        return smf.scan(self.log.entries, start, end, self._smf_config())

    def smf_record(self, token: str, start_us: int | None = None,
                   end_us: int | None = None) -> dict:
        """Journal newly observed monitor alerts as smf_alert entries."""
        with self._lock:
            caller = self._session(token)
            self._require_admin(caller, "smf_record")
            recorded = 0
            for alert in self._scan(start_us, end_us):
                dedup = "|".join(str(part) for part in alert.dedup_key())
                if dedup in self._recorded_alerts:
                    continue
                self._emit(caller.id, EventKind.SMF_ALERT, alert.rule_id.value, {
                    "dedup": dedup,
                    "severity": alert.severity.value,
                    "involved": _csv(sorted(alert.involved)),
                    "evidence": _csv(str(s) for s in alert.evidence),
                    "window_start_us": str(alert.window_start_us),
                    "window_end_us": str(alert.window_end_us),
                })
                recorded += 1
            return {"recorded": recorded}

    # ------------------------------------------------------------------ console bus

    def subscribe(self, token: str) -> tuple:
        """Register a live event feed. Returns (sub_id, queue, snapshot)."""
        with self._lock:
            caller = self._session(token)
            if caller.kind is not Kind.SUPER_USER:
                raise errors.Unauthorized("the event stream is a super-user surface")
            sub_id = new_id("sub")
            queue: Queue = Queue()
            self._subscribers[sub_id] = (caller.id, queue)
            snapshot = self.poll_outbox(token)
            return sub_id, queue, snapshot

    def unsubscribe(self, sub_id: str) -> None:
        with self._lock:
            self._subscribers.pop(sub_id, None)

    def _publish(self, targets, event: dict) -> None:
        targets = set(targets)
        for principal_id, queue in self._subscribers.values():
            if principal_id in targets:
                queue.put(event)

    # ------------------------------------------------------------------ snapshots

    def state_snapshot(self) -> dict:
        """Canonical view of all journal-derived state (no session material)."""
        with self._lock:
            principals = {
                p.id: {
                    "display_name": p.display_name,
                    "kind": p.kind.value,
                    "role": p.role.value,
                    "privilege": p.privilege.value,
                    "credential": p.credential.encode(),
                    "devices": [[d.kind.value, d.address] for d in p.devices],
                    "active": p.active,
                    "failed_attempts": p.failed_attempts,
                    "locked_until_us": p.locked_until_us,
                } for p in self.directory.principals.values()}
            pairs = {a.user_id: list(a.super_user_ids)
                     for a in self.directory.pairs.values()}
            documents = {
                d.doc_id: {
                    "patient_id": d.patient_id,
                    "doc_class": d.doc_class.value,
                    "doc_type": d.doc_type.value,
                    "author_id": d.author_id,
                    "created_at_us": d.created_at_us,
                    "body_b64": base64.b64encode(d.body).decode("ascii"),
                    "removed": d.removed,
                } for d in self.records.documents.values()}
            restrictions = {
                r.patient_id: {
                    "blocked_principals": sorted(r.blocked_principal_ids),
                    "blocked_docs": sorted(r.blocked_doc_ids),
                } for r in self.records.restrictions.values()}
            requests = {
                r.request_id: {
                    "user_id": r.user_id,
                    "patient_scope": r.patient_scope,
                    "purpose": r.purpose.value,
                    "state": r.state.value,
                    "created_at_us": r.created_at_us,
                    "decided_at_us": r.decided_at_us,
                    "decider_id": r.decider_id,
                    "decision_channel": r.decision_channel.value
                    if r.decision_channel else None,
                    "alert_targets": sorted(r.alert_targets),
                } for r in self.approvals.requests.values()}
            grants = {
                g.token_digest: {
                    "request_id": g.request_id,
                    "user_id": g.user_id,
                    "patient_scope": g.patient_scope,
                    "issued_at_us": g.issued_at_us,
                    "ttl_us": g.ttl_us,
                    "revoked": g.revoked,
                } for g in self.approvals.grants.values()}
            passcodes = {
                p.passcode_id: {
                    "super_user_id": p.super_user_id,
                    "code_digest": p.code_digest,
                    "issued_at_us": p.issued_at_us,
                    "used": p.used,
                } for p in self.approvals.passcodes.values()}
            return {
                "principals": principals,
                "pairs": pairs,
                "patients": sorted(self.records.patients),
                "documents": documents,
                "restrictions": restrictions,
                "requests": requests,
                "grants": grants,
                "passcodes": passcodes,
            }
