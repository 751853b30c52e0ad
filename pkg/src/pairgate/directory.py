"""Principal directory: accounts, credentials, and approver pairing.

Holds every staff account (regular users and high-privilege approvers),
their salted credential digests, device endpoints, and the one pairing row
per user that names which approvers may authorize that user's requests.

State mutation happens exclusively through ``apply_*`` methods driven by
journal events, so live execution and journal replay share one code path.
"""

from __future__ import annotations

import hashlib
import hmac
import re
import secrets
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources

from pairgate import errors


class Kind(str, Enum):
    USER = "user"
    SUPER_USER = "super_user"


class Role(str, Enum):
    CLINICAL = "clinical"
    NON_CLINICAL = "non_clinical"
    ADMIN = "admin"


class Privilege(str, Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


class ChannelKind(str, Enum):
    PUSH_CONSOLE = "push_console"
    PASSCODE = "passcode"
    FILE_OUTBOX = "file_outbox"


ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]{1,64}$")

MIN_SECRET_LENGTH = 10


def _load_denylist() -> frozenset:
    text = resources.files("pairgate.data").joinpath("password-denylist.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


_DENYLIST: frozenset | None = None


def secret_denylist() -> frozenset:
    global _DENYLIST
    if _DENYLIST is None:
        _DENYLIST = _load_denylist()
    return _DENYLIST


@dataclass(frozen=True)
class ChannelEndpoint:
    kind: ChannelKind
    address: str


@dataclass(frozen=True)
class Credential:
    """Salted one-way digest. The plaintext secret is never stored."""

    algorithm: str
    iterations: int
    salt_hex: str
    digest_hex: str

    @classmethod
    def create(cls, secret: str, iterations: int) -> "Credential":
        salt = secrets.token_bytes(16)
        digest = hashlib.pbkdf2_hmac("sha256", secret.encode("utf-8"), salt, iterations)
        return cls("pbkdf2-sha256", iterations, salt.hex(), digest.hex())

    def matches(self, secret: str) -> bool:
        digest = hashlib.pbkdf2_hmac(
            "sha256", secret.encode("utf-8"), bytes.fromhex(self.salt_hex), self.iterations
        )
        return hmac.compare_digest(digest.hex(), self.digest_hex)

    def encode(self) -> str:
        return f"{self.algorithm}${self.iterations}${self.salt_hex}${self.digest_hex}"

    @classmethod
    def decode(cls, text: str) -> "Credential":
        algorithm, iterations, salt_hex, digest_hex = text.split("$")
        return cls(algorithm, int(iterations), salt_hex, digest_hex)


@dataclass(frozen=True)
class Principal:
    id: str
    display_name: str
    kind: Kind
    role: Role
    privilege: Privilege
    credential: Credential
    devices: tuple = ()
    active: bool = True
    failed_attempts: int = 0
    locked_until_us: int | None = None

    def public_view(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "kind": self.kind.value,
            "role": self.role.value,
            "privilege": self.privilege.value,
            "active": self.active,
            "devices": [{"kind": d.kind.value, "address": d.address} for d in self.devices],
        }


@dataclass(frozen=True)
class PairAssignment:
    user_id: str
    super_user_ids: tuple


def check_secret_policy(principal_id: str, secret: str) -> None:
    """Reject short, identity-derived, or dictionary secrets."""
    if len(secret) < MIN_SECRET_LENGTH:
        raise errors.WeakSecret(f"secret must be at least {MIN_SECRET_LENGTH} characters")
    if secret.lower() == principal_id.lower():
        raise errors.WeakSecret("secret must not equal the account id")
    if secret.lower() in secret_denylist():
        raise errors.WeakSecret("secret is on the common-password denylist")


@dataclass
class Directory:
    principals: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)

    # -- lookups --------------------------------------------------------------

    def get(self, principal_id: str) -> Principal:
        try:
            return self.principals[principal_id]
        except KeyError:
            raise errors.UnknownPrincipal(f"no principal {principal_id!r}") from None

    def pair_for(self, user_id: str) -> PairAssignment | None:
        return self.pairs.get(user_id)

    # -- validation (raises, never mutates) ------------------------------------

    def validate_create(self, principal_id: str, kind: Kind, role: Role,
                        privilege: Privilege, secret: str) -> None:
        if not ID_PATTERN.match(principal_id):
            raise errors.ValidationFailure(
                "principal id must match [A-Za-z0-9_.-]{1,64}")
        if principal_id in self.principals:
            raise errors.DuplicateId(f"principal {principal_id!r} already exists")
        if kind is Kind.SUPER_USER and privilege is not Privilege.HIGH:
            raise errors.KindMismatch("super users must hold high privilege")
        if kind is Kind.SUPER_USER and role is Role.NON_CLINICAL:
            raise errors.KindMismatch("super users must hold a clinical or admin role")
        check_secret_policy(principal_id, secret)

    def validate_pair(self, user_id: str, super_user_ids: list) -> None:
        user = self.get(user_id)
        if user.kind is not Kind.USER:
            raise errors.KindMismatch(f"{user_id!r} is not a regular user")
        if not super_user_ids:
            raise errors.EmptyPairList("at least one approver is required")
        if len(set(super_user_ids)) != len(super_user_ids):
            raise errors.ValidationFailure("approver list contains duplicates")
        for sid in super_user_ids:
            principal = self.get(sid)
            if principal.kind is not Kind.SUPER_USER:
                raise errors.KindMismatch(f"{sid!r} is not a super user")

    # -- credential verification (pure; caller turns the outcome into events) --

    def classify_login(self, principal_id: str, secret: str, now_us: int) -> str:
        """Returns one of: ok, bad, locked, inactive, unknown."""
        principal = self.principals.get(principal_id)
        if principal is None:
            return "unknown"
        if not principal.active:
            return "inactive"
        if (principal.locked_until_us is not None
                and now_us < principal.locked_until_us):
            return "locked"
        return "ok" if principal.credential.matches(secret) else "bad"

    # -- event application ------------------------------------------------------

    def apply_created(self, principal: Principal) -> None:
        self.principals[principal.id] = principal

    def apply_deactivated(self, principal_id: str) -> None:
        self.principals[principal_id] = replace(self.principals[principal_id], active=False)

    def apply_device_registered(self, principal_id: str, endpoint: ChannelEndpoint) -> None:
        principal = self.principals[principal_id]
        self.principals[principal_id] = replace(
            principal, devices=principal.devices + (endpoint,))

    def apply_pair(self, assignment: PairAssignment) -> None:
        # Re-pairing replaces the previous row outright.
        self.pairs[assignment.user_id] = assignment

    def apply_login_ok(self, principal_id: str) -> None:
        principal = self.principals[principal_id]
        self.principals[principal_id] = replace(
            principal, failed_attempts=0, locked_until_us=None)

    def apply_login_failure(self, principal_id: str, reason: str, ts_us: int,
                            threshold: int, lockout_duration_us: int) -> None:
        """Counted failures accumulate toward lockout; others leave state alone."""
        if reason != "bad":
            return
        principal = self.principals.get(principal_id)
        if principal is None:
            return
        attempts = principal.failed_attempts
        locked_until = principal.locked_until_us
        if locked_until is not None and ts_us >= locked_until:
            attempts, locked_until = 0, None
        attempts += 1
        if attempts >= threshold:
            locked_until = ts_us + lockout_duration_us
        self.principals[principal_id] = replace(
            principal, failed_attempts=attempts, locked_until_us=locked_until)
