"""Paired-approval workflow state.

An access request is a small state machine: Pending until exactly one
approver decision, a timeout, or a cancellation moves it to a terminal
state. An approval mints a single grant token whose digest (never the
token itself) is journaled; the token is a time-limited capability the
requester presents at read time.

First decision wins. The alert-target set is frozen at submission, so
re-pairing a user never retargets an in-flight request.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum

from pairgate import errors
from pairgate.directory import ChannelKind
from pairgate.policy import Purpose


class RequestState(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    DENIED = "denied"
    EXPIRED = "expired"
    CANCELLED = "cancelled"


TERMINAL_STATES = frozenset(
    {RequestState.APPROVED, RequestState.DENIED, RequestState.EXPIRED, RequestState.CANCELLED})


def digest_token(token: str) -> str:
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AccessRequest:
    request_id: str
    user_id: str
    patient_scope: str
    purpose: Purpose
    state: RequestState
    created_at_us: int
    alert_targets: tuple
    decided_at_us: int | None = None
    decider_id: str | None = None
    decision_channel: ChannelKind | None = None

    def view(self) -> dict:
        return {
            "request_id": self.request_id,
            "user_id": self.user_id,
            "patient_scope": self.patient_scope,
            "purpose": self.purpose.value,
            "state": self.state.value,
            "created_at_us": self.created_at_us,
            "alert_targets": sorted(self.alert_targets),
            "decided_at_us": self.decided_at_us,
            "decider_id": self.decider_id,
            "decision_channel": self.decision_channel.value if self.decision_channel else None,
        }


@dataclass(frozen=True)
class GrantToken:
    """Stored keyed by digest; the plain token lives only in memory and in
    the requester's hands."""

    token_digest: str
    request_id: str
    user_id: str
    patient_scope: str
    issued_at_us: int
    ttl_us: int
    revoked: bool = False

    def expires_at_us(self) -> int:
        return self.issued_at_us + self.ttl_us


@dataclass(frozen=True)
class Passcode:
    passcode_id: str
    super_user_id: str
    code_digest: str
    issued_at_us: int
    used: bool = False


def passcode_digest(passcode_id: str, code: str) -> str:
    return hashlib.sha256(f"{passcode_id}:{code}".encode("utf-8")).hexdigest()


@dataclass
class GrantValidity:
    valid: bool
    reason: str = ""


@dataclass
class ApprovalState:
    requests: dict = field(default_factory=dict)
    grants: dict = field(default_factory=dict)          # token digest -> GrantToken
    grant_by_request: dict = field(default_factory=dict)
    passcodes: dict = field(default_factory=dict)

    # -- lookups ------------------------------------------------------------

    def get_request(self, request_id: str) -> AccessRequest:
        try:
            return self.requests[request_id]
        except KeyError:
            raise errors.UnknownRequest(f"no request {request_id!r}") from None

    def pending_count(self, user_id: str) -> int:
        return sum(1 for r in self.requests.values()
                   if r.user_id == user_id and r.state is RequestState.PENDING)

    def pending_for_target(self, super_user_id: str) -> list:
        alerts = [r for r in self.requests.values()
                  if r.state is RequestState.PENDING and super_user_id in r.alert_targets]
        return sorted(alerts, key=lambda r: (r.created_at_us, r.request_id))

    def stale_pending(self, now_us: int, timeout_us: int) -> list:
        """Pending requests whose age has reached the approval timeout."""
        stale = [r for r in self.requests.values()
                 if r.state is RequestState.PENDING
                 and now_us >= r.created_at_us + timeout_us]
        return sorted(stale, key=lambda r: (r.created_at_us, r.request_id))

    def is_expired(self, request: AccessRequest, now_us: int, timeout_us: int) -> bool:
        return (request.state is RequestState.PENDING
                and now_us >= request.created_at_us + timeout_us)

    # -- grant validation (pure) ------------------------------------------------

    def validate_grant(self, token: str, user_id: str, patient_scope: str,
                       now_us: int) -> GrantValidity:
        grant = self.grants.get(digest_token(token))
        if grant is None:
            return GrantValidity(False, "unknown")
        if grant.user_id != user_id:
            return GrantValidity(False, "owner")
        if grant.patient_scope != patient_scope:
            return GrantValidity(False, "scope")
        if grant.revoked:
            return GrantValidity(False, "revoked")
        if now_us >= grant.expires_at_us():   # expiry boundary is exclusive
            return GrantValidity(False, "expired")
        return GrantValidity(True)

    # -- passcode matching --------------------------------------------------------

    def match_passcode(self, code: str, paired_super_ids, now_us: int,
                       ttl_us: int) -> Passcode:
        """Find the passcode a presented code corresponds to, or raise.

        Only approvers paired with the requesting user are searched; a code
        minted by anyone else fails as not-paired.
        """
        candidates = [p for p in self.passcodes.values()
                      if passcode_digest(p.passcode_id, code) == p.code_digest]
        if not candidates:
            raise errors.BadPasscode("code does not match any issued passcode")
        paired = [p for p in candidates if p.super_user_id in paired_super_ids]
        if not paired:
            raise errors.NotPaired("passcode was not issued by a paired approver")
        fresh = [p for p in paired if not p.used
                 and now_us < p.issued_at_us + ttl_us]
        if fresh:
            return max(fresh, key=lambda p: p.issued_at_us)
        if any(p.used for p in paired):
            raise errors.PasscodeReused("passcode already used")
        raise errors.PasscodeExpired("passcode expired")

    # -- event application ----------------------------------------------------------

    def apply_submitted(self, request: AccessRequest) -> None:
        self.requests[request.request_id] = request

    def apply_decided(self, request_id: str, state: RequestState, decider_id: str,
                      channel: ChannelKind, ts_us: int) -> None:
        self.requests[request_id] = replace(
            self.requests[request_id], state=state, decider_id=decider_id,
            decision_channel=channel, decided_at_us=ts_us)

    def apply_expired(self, request_id: str, ts_us: int) -> None:
        self.requests[request_id] = replace(
            self.requests[request_id], state=RequestState.EXPIRED, decided_at_us=ts_us)

    def apply_cancelled(self, request_id: str, ts_us: int) -> None:
        self.requests[request_id] = replace(
            self.requests[request_id], state=RequestState.CANCELLED, decided_at_us=ts_us)

    def apply_grant_issued(self, grant: GrantToken) -> None:
        self.grants[grant.token_digest] = grant
        self.grant_by_request[grant.request_id] = grant.token_digest

    def apply_grant_revoked(self, token_digest: str) -> None:
        grant = self.grants.get(token_digest)
        if grant is not None:
            self.grants[token_digest] = replace(grant, revoked=True)

    def apply_passcode_issued(self, passcode: Passcode) -> None:
        self.passcodes[passcode.passcode_id] = passcode

    def apply_passcode_used(self, passcode_id: str) -> None:
        self.passcodes[passcode_id] = replace(self.passcodes[passcode_id], used=True)
