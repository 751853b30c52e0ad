"""Domain error hierarchy.

Every error carries a stable machine-readable ``code`` (snake_case) plus an
optional detail mapping. The HTTP layer maps codes to status numbers; the
domain layer never sees HTTP.
"""

from __future__ import annotations

from typing import Any


class PairgateError(Exception):
    code = "error"

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_dict(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.details:
            out["details"] = {k: v for k, v in self.details.items()}
        return out


# -- directory --------------------------------------------------------------

class DuplicateId(PairgateError):
    code = "duplicate_id"

class WeakSecret(PairgateError):
    code = "weak_secret"

class Unauthorized(PairgateError):
    code = "unauthorized"

class UnknownPrincipal(PairgateError):
    code = "unknown_principal"

class KindMismatch(PairgateError):
    code = "kind_mismatch"

class EmptyPairList(PairgateError):
    code = "empty_pair_list"

class BadCredentials(PairgateError):
    code = "bad_credentials"

class AccountLocked(PairgateError):
    code = "account_locked"

class SessionInvalid(PairgateError):
    code = "session_invalid"


# -- records ----------------------------------------------------------------

class PolicyDenied(PairgateError):
    code = "policy_denied"

class UnknownPatient(PairgateError):
    code = "unknown_patient"

class UnknownDocument(PairgateError):
    code = "unknown_document"

class NotFound(PairgateError):
    code = "not_found"

class NotOwner(PairgateError):
    code = "not_owner"

class AlreadyRemoved(PairgateError):
    code = "already_removed"


# -- approval ---------------------------------------------------------------

class NoPairAssigned(PairgateError):
    code = "no_pair_assigned"

class NotDualAuthPath(PairgateError):
    code = "not_dual_auth_path"

class TooManyPending(PairgateError):
    code = "too_many_pending"

class NotPaired(PairgateError):
    code = "not_paired"

class AlreadyDecided(PairgateError):
    code = "already_decided"

class RequestExpired(PairgateError):
    code = "request_expired"

class UnknownRequest(PairgateError):
    code = "unknown_request"

class GrantRequired(PairgateError):
    code = "grant_required"

class GrantInvalid(PairgateError):
    code = "grant_invalid"

class UnknownToken(PairgateError):
    code = "unknown_token"

class BadPasscode(PairgateError):
    code = "bad_passcode"

class PasscodeExpired(PairgateError):
    code = "passcode_expired"

class PasscodeReused(PairgateError):
    code = "passcode_reused"


# -- audit / persistence ------------------------------------------------------

class StorageFailure(PairgateError):
    code = "storage_failure"

class JournalCorrupt(PairgateError):
    code = "journal_corrupt"


# -- generic ------------------------------------------------------------------

class ValidationFailure(PairgateError):
    code = "validation"
