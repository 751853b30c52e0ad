"""Hash-chained append-only audit journal.

The journal is both the audit trail and the system of record: service state
is rebuilt by replaying it. On-disk format (documented in the README so an
external tool can verify the chain independently):

  line 1:   ``pairgate-journal 1 sha256``        (format version, hash algorithm)
  entries:  one per line, eight space-separated tokens:

      <seq> <ts_us> <actor> <kind> <subject> <detail> <prev_hash> <entry_hash>

  * ``actor`` and ``subject`` are percent-encoded (RFC 3986, no safe chars
    beyond unreserved); the empty value is written as ``-``.
  * ``detail`` is ``application/x-www-form-urlencoded`` key=value pairs with
    keys sorted; the empty mapping is written as ``-``.
  * hashes are 64 lowercase hex chars; entry 0 uses an all-zero prev_hash.

  entry_hash = sha256( prev_hash || netstring(tok) for the first six tokens )
  where netstring(s) = b"<len>:" + utf8(s) + b",". Hashing covers the tokens
  exactly as written, so a verifier needs only tokenization and sha256.

Write-ahead discipline: ``append`` flushes (and by default fsyncs) before
returning; callers mutate in-memory state only after append succeeds. A torn
final line is a crash artifact and is truncated away on open; any other
inconsistency refuses to load.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from urllib.parse import parse_qsl, quote, unquote, urlencode

from pairgate import errors

FORMAT_NAME = "pairgate-journal"
FORMAT_VERSION = "1"
HASH_ALGORITHM = "sha256"
HEADER_LINE = f"{FORMAT_NAME} {FORMAT_VERSION} {HASH_ALGORITHM}"
ZERO_DIGEST = "0" * 64


class EventKind(str, Enum):
    LOGIN = "login"
    LOGIN_FAILURE = "login_failure"
    PRINCIPAL_CREATED = "principal_created"
    PRINCIPAL_DEACTIVATED = "principal_deactivated"
    DEVICE_REGISTERED = "device_registered"
    PAIR_ASSIGNED = "pair_assigned"
    PATIENT_REGISTERED = "patient_registered"
    REQUEST_SUBMITTED = "request_submitted"
    REQUEST_DECIDED = "request_decided"
    REQUEST_EXPIRED = "request_expired"
    REQUEST_CANCELLED = "request_cancelled"
    GRANT_ISSUED = "grant_issued"
    GRANT_REVOKED = "grant_revoked"
    DOC_UPLOADED = "doc_uploaded"
    DOC_READ = "doc_read"
    DOC_REMOVED = "doc_removed"
    RESTRICTION_SET = "restriction_set"
    PASSCODE_ISSUED = "passcode_issued"
    ACCESS_DENIED = "access_denied"
    SMF_ALERT = "smf_alert"
    SERVICE_STARTED = "service_started"


def _encode_token(value: str) -> str:
    return quote(value, safe="") if value else "-"


def _decode_token(token: str) -> str:
    return "" if token == "-" else unquote(token)


def encode_detail(detail: dict) -> str:
    if not detail:
        return "-"
    return urlencode(sorted((str(k), str(v)) for k, v in detail.items()))


def decode_detail(token: str) -> dict:
    if token == "-":
        return {}
    return dict(parse_qsl(token, keep_blank_values=True))


def _netstring(token: str) -> bytes:
    raw = token.encode("utf-8")
    return str(len(raw)).encode("ascii") + b":" + raw + b","


def compute_entry_hash(prev_hash: str, tokens) -> str:
    """Hash over prev_hash plus the six payload tokens as written on disk."""
    h = hashlib.sha256()
    h.update(prev_hash.encode("ascii"))
    for token in tokens:
        h.update(_netstring(token))
    return h.hexdigest()


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    ts_us: int
    actor_id: str
    kind: EventKind
    subject: str
    detail: dict
    prev_hash: str
    entry_hash: str

    def payload_tokens(self) -> tuple:
        return (str(self.seq), str(self.ts_us), _encode_token(self.actor_id),
                self.kind.value, _encode_token(self.subject), encode_detail(self.detail))

    def format_line(self) -> str:
        return " ".join((*self.payload_tokens(), self.prev_hash, self.entry_hash))

    def view(self) -> dict:
        return {
            "seq": self.seq,
            "ts_us": self.ts_us,
            "actor_id": self.actor_id,
            "kind": self.kind.value,
            "subject": self.subject,
            "detail": dict(self.detail),
            "entry_hash": self.entry_hash,
        }


def parse_entry_line(line: str) -> AuditEntry:
    tokens = line.split(" ")
    if len(tokens) != 8:
        raise ValueError(f"expected 8 tokens, got {len(tokens)}")
    seq, ts_us, actor, kind, subject, detail, prev_hash, entry_hash = tokens
    return AuditEntry(
        seq=int(seq),
        ts_us=int(ts_us),
        actor_id=_decode_token(actor),
        kind=EventKind(kind),
        subject=_decode_token(subject),
        detail=decode_detail(detail),
        prev_hash=prev_hash,
        entry_hash=entry_hash,
    )


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    first_bad_seq: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_lines(header: str | None, lines) -> VerifyResult:
    """Recompute the whole chain; report the first entry that fails.

    A bad header reports seq 0: nothing after an unverifiable header can be
    trusted.
    """
    if header != HEADER_LINE:
        return VerifyResult(False, 0)
    prev_hash = ZERO_DIGEST
    for index, line in enumerate(lines):
        tokens = line.split(" ")
        if len(tokens) != 8:
            return VerifyResult(False, index)
        payload, stored_prev, stored_hash = tokens[:6], tokens[6], tokens[7]
        try:
            seq = int(payload[0])
            int(payload[1])
            EventKind(payload[3])
        except ValueError:
            return VerifyResult(False, index)
        if seq != index:
            return VerifyResult(False, index)
        if stored_prev != prev_hash:
            return VerifyResult(False, index)
        if compute_entry_hash(stored_prev, payload) != stored_hash:
            return VerifyResult(False, index)
        prev_hash = stored_hash
    return VerifyResult(True)


def verify_file(path: str | Path) -> VerifyResult:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise errors.StorageFailure(f"cannot read journal: {exc}") from exc
    lines = raw.decode("utf-8", errors="replace").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        return VerifyResult(False, 0)
    return verify_lines(lines[0], lines[1:])


class AuditLog:
    """Appender plus in-memory copy of all entries.

    Opening an existing journal truncates a torn final line (crash artifact:
    the corresponding operation never reported success), then verifies the
    complete chain and refuses to load on any other damage.
    """

    def __init__(self, path: str | Path, *, fsync: bool = True,
                 skip_verify: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self.skip_verify = skip_verify
        self.entries: list = []
        self._fh = None
        self._expected_size = 0
        if self.path.exists():
            self._load_existing()
        else:
            self._create()

    # -- setup -----------------------------------------------------------------

    def _create(self) -> None:
        try:
            self._fh = open(self.path, "a+b")
            self._fh.write((HEADER_LINE + "\n").encode("utf-8"))
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise errors.StorageFailure(f"cannot create journal: {exc}") from exc
        self._expected_size = self._fh.tell()

    def _load_existing(self) -> None:
        try:
            raw = self.path.read_bytes()
        except OSError as exc:
            raise errors.StorageFailure(f"cannot read journal: {exc}") from exc

        keep = raw
        torn = not raw.endswith(b"\n")
        lines = raw.decode("utf-8", errors="replace").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise errors.JournalCorrupt("journal is empty", first_bad_seq=0)

        if torn and len(lines) > 1:
            # Only the final record can be torn by a crash mid-append.
            keep = raw[: raw.rindex(b"\n") + 1]
            lines.pop()
        elif torn:
            raise errors.JournalCorrupt("journal header incomplete", first_bad_seq=0)

        result = verify_lines(lines[0], lines[1:])
        if not result.ok and not self.skip_verify:
            raise errors.JournalCorrupt(
                f"journal fails verification at seq {result.first_bad_seq}",
                first_bad_seq=result.first_bad_seq)

        if len(keep) != len(raw):
            try:
                with open(self.path, "r+b") as fh:
                    fh.truncate(len(keep))
            except OSError as exc:
                raise errors.StorageFailure(f"cannot repair torn tail: {exc}") from exc

        for line in lines[1:]:
            try:
                self.entries.append(parse_entry_line(line))
            except ValueError:
                if not self.skip_verify:
                    raise
                # Verification disabled (test sabotage): tolerate damage.
        try:
            self._fh = open(self.path, "a+b")
        except OSError as exc:
            raise errors.StorageFailure(f"cannot open journal: {exc}") from exc
        self._expected_size = len(keep)

    # -- appending ---------------------------------------------------------------

    @property
    def head_hash(self) -> str:
        return self.entries[-1].entry_hash if self.entries else ZERO_DIGEST

    def append(self, ts_us: int, actor_id: str, kind: EventKind, subject: str,
               detail: dict) -> AuditEntry:
        seq = len(self.entries)
        prev_hash = self.head_hash
        payload = (str(seq), str(ts_us), _encode_token(actor_id), kind.value,
                   _encode_token(subject), encode_detail(detail))
        entry = AuditEntry(
            seq=seq,
            ts_us=ts_us,
            actor_id=actor_id,
            kind=kind,
            subject=subject,
            detail=dict(detail),
            prev_hash=prev_hash,
            entry_hash=compute_entry_hash(prev_hash, payload),
        )
        data = (entry.format_line() + "\n").encode("utf-8")
        try:
            # Refuse to append over a journal someone shortened or swapped
            # underneath us: regapping silently would defeat tamper evidence.
            actual = os.fstat(self._fh.fileno()).st_size
            if actual != self._expected_size:
                raise errors.StorageFailure(
                    f"journal size changed externally ({actual} != {self._expected_size})")
            self._fh.write(data)
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise errors.StorageFailure(f"journal append failed: {exc}") from exc
        self._expected_size += len(data)
        self.entries.append(entry)
        return entry

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def accountability_report(entries, principal_id: str, start_us: int,
                          end_us: int) -> list:
    """All entries in [start_us, end_us) where the principal acted or was the
    subject, in journal order."""
    return [e for e in entries
            if start_us <= e.ts_us < end_us
            and (e.actor_id == principal_id or e.subject == principal_id)]
