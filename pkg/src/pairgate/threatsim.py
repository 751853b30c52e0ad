"""Executable insider/attack scenarios run against a live gateway.

Eight classic routes to sensitive data, each driven through the real HTTP
surface of a freshly seeded instance and classified as:

  Prevented  the attempt was refused outright
  Detected   the attempt went through a legitimate-looking path but left
             evidence the monitor or verifier flags
  Breached   the defense did not hold (any Breached fails the suite)

The harness is falsifiable: for every scenario there is a documented
``sabotage`` flag (see pairgate.service.CoreService) that disables exactly
the defense under test and flips the scenario to Breached. The suite runs
sabotage-free in production use; tests exercise both sides.

Scenario 4 does not simulate operating-system exploits; it narrows platform
vulnerability to at-rest journal tampering and says so in its transcript.
"""

from __future__ import annotations

import base64
import shutil
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from fastapi.testclient import TestClient

from pairgate import seed
from pairgate.clock import ManualClock
from pairgate.config import Config
from pairgate.http_api import build_app
from pairgate.service import CoreService


class ScenarioId(str, Enum):
    EXCESSIVE_PRIVILEGE = "excessive_privilege"
    PRIVILEGE_ABUSE = "privilege_abuse"
    PRIVILEGE_ELEVATION = "privilege_elevation"
    PLATFORM_VULNERABILITY = "platform_vulnerability"
    SQL_INJECTION = "sql_injection"
    WEAK_AUDIT = "weak_audit"
    WEAK_AUTHENTICATION = "weak_authentication"
    BACKUP_EXPOSURE = "backup_exposure"


SCENARIO_ORDER = tuple(ScenarioId)

# The one defense each scenario exercises, by sabotage flag.
SABOTAGE_FOR_SCENARIO = {
    ScenarioId.EXCESSIVE_PRIVILEGE: "dual_auth_bypass",
    ScenarioId.PRIVILEGE_ABUSE: "monitor_blind",
    ScenarioId.PRIVILEGE_ELEVATION: "admin_check_off",
    ScenarioId.PLATFORM_VULNERABILITY: "verify_always_ok",
    ScenarioId.SQL_INJECTION: "login_backdoor",
    ScenarioId.WEAK_AUDIT: "unlogged_reads",
    ScenarioId.WEAK_AUTHENTICATION: "weak_auth_ok",
    ScenarioId.BACKUP_EXPOSURE: "plaintext_journal_secrets",
}


class Outcome(str, Enum):
    PREVENTED = "Prevented"
    DETECTED = "Detected"
    BREACHED = "Breached"


@dataclass
class ScenarioResult:
    scenario_id: ScenarioId
    outcome: Outcome
    transcript: list = field(default_factory=list)

    def note(self, action: str, response: str) -> None:
        self.transcript.append((action, response))

    def line(self) -> str:
        return (f"scenario={self.scenario_id.value} outcome={self.outcome.value} "
                f"steps={len(self.transcript)}")


class ScenarioSetupFailure(RuntimeError):
    pass


ADMIN_SECRET = "threatsim-admin-3141"


class GatewayInstance:
    """An isolated seeded gateway on a temp journal, spoken to over HTTP
    semantics via an in-process test client."""

    def __init__(self, sabotage: frozenset = frozenset(), seeded: bool = True):
        self.tmpdir = Path(tempfile.mkdtemp(prefix="pairgate-threat-"))
        self.clock = ManualClock()
        self.config = Config(
            journal_path=str(self.tmpdir / "journal.log"),
            journal_fsync=False,
            kdf_iterations=400,
            bootstrap_admin_secret=ADMIN_SECRET,
        )
        self.service = CoreService(self.config, self.clock, sabotage=sabotage)
        self.client = TestClient(build_app(self.service),
                                 raise_server_exceptions=False)
        if seeded:
            try:
                self.seeded = seed.seed_demo(self.client, "root", ADMIN_SECRET)
            except seed.SeedError as exc:
                raise ScenarioSetupFailure(str(exc)) from exc

    def login(self, principal_id: str) -> str:
        return seed.login(self.client, principal_id, seed.DEMO_SECRETS[principal_id])

    def admin_token(self) -> str:
        return seed.login(self.client, "root", ADMIN_SECRET)

    def clinical_doc_id(self) -> str:
        return self.seeded["documents"][0]

    def close(self) -> None:
        self.service.close()
        shutil.rmtree(self.tmpdir, ignore_errors=True)


def default_factory(sabotage: frozenset = frozenset()) -> GatewayInstance:
    return GatewayInstance(sabotage=sabotage)


def load_injection_payloads() -> list:
    text = resources.files("pairgate.data").joinpath("injection-payloads.txt") \
        .read_text("utf-8")
    return [line for line in text.splitlines() if line.strip()]


def _bearer(token: str) -> dict:
    return {"Authorization": f"Bearer {token}"}


# -- scenarios ------------------------------------------------------------------


def _scenario_excessive_privilege(inst: GatewayInstance, result: ScenarioResult):
    """Reception staff tries to open a clinical note directly, no approval."""
    token = inst.login("A")
    doc = inst.clinical_doc_id()
    response = inst.client.get(f"/documents/{doc}",
                               params={"purpose": "recall_reminder"},
                               headers=_bearer(token))
    result.note(f"GET /documents/{doc} as A without grant",
                f"{response.status_code} {response.text[:120]}")
    if response.status_code == 200:
        result.outcome = Outcome.BREACHED
    elif response.status_code == 403:
        result.outcome = Outcome.PREVENTED
    else:
        result.outcome = Outcome.BREACHED


def _scenario_privilege_abuse(inst: GatewayInstance, result: ScenarioResult):
    """A holds legitimate grants but cycles requests far beyond any plausible
    recall workload; the volume rule must notice."""
    token_a = inst.login("A")
    token_d = inst.login("D")
    cycles = 31
    for i in range(cycles):
        submitted = inst.client.post(
            "/requests", json={"patient_id": "P1", "purpose": "recall_reminder"},
            headers=_bearer(token_a))
        if submitted.status_code != 201:
            raise ScenarioSetupFailure(f"submit {i}: {submitted.text}")
        request_id = submitted.json()["request_id"]
        decided = inst.client.post(f"/requests/{request_id}/approve",
                                   headers=_bearer(token_d))
        if decided.status_code != 200:
            raise ScenarioSetupFailure(f"approve {i}: {decided.text}")
        inst.clock.advance(30)
    result.note(f"A submitted and D approved {cycles} requests in "
                f"{cycles * 30 / 60:.0f} minutes", "all 2xx")
    scan = inst.client.get("/audit/smf", headers=_bearer(inst.admin_token()))
    rules = {a["rule_id"] for a in scan.json()}
    result.note("GET /audit/smf", f"rules flagged: {sorted(rules)}")
    if {"R2_VolumeSpike", "R1_PairExclusivity"} & rules:
        inst.client.post("/audit/smf/record", headers=_bearer(inst.admin_token()))
        result.outcome = Outcome.DETECTED
    else:
        result.outcome = Outcome.BREACHED


def _scenario_privilege_elevation(inst: GatewayInstance, result: ScenarioResult):
    """A low-privilege user drives admin endpoints directly."""
    token = inst.login("A")
    attempts = [
        ("POST /principals", inst.client.post("/principals", json={
            "name": "EVIL", "kind": "super_user", "role": "admin",
            "privilege": "high", "secret": "evil-secret-123456"},
            headers=_bearer(token))),
        ("POST /pairs", inst.client.post("/pairs", json={
            "user_id": "A", "super_user_ids": ["A"]}, headers=_bearer(token))),
        ("POST /principals/D/deactivate",
         inst.client.post("/principals/D/deactivate", headers=_bearer(token))),
        ("POST /requests/{own}/approve (self-approval)", None),
    ]
    submitted = inst.client.post(
        "/requests", json={"patient_id": "P1", "purpose": "recall_reminder"},
        headers=_bearer(token))
    own = submitted.json().get("request_id", "missing")
    attempts[3] = ("POST own request approve",
                   inst.client.post(f"/requests/{own}/approve", headers=_bearer(token)))
    breached = False
    for action, response in attempts:
        result.note(action, f"{response.status_code}")
        if response.status_code < 400:
            breached = True
    evil_login = inst.client.post("/login", json={"id": "EVIL",
                                                  "secret": "evil-secret-123456"})
    result.note("POST /login as EVIL", f"{evil_login.status_code}")
    if evil_login.status_code == 200:
        breached = True
    result.outcome = Outcome.BREACHED if breached else Outcome.PREVENTED


def _scenario_platform_vulnerability(inst: GatewayInstance, result: ScenarioResult):
    """Out-of-band journal tampering (the at-rest slice of platform attacks;
    live OS exploitation is out of scope for this harness)."""
    result.note("scope", "at-rest journal tampering only; OS exploits not simulated")
    token_a = inst.login("A")
    inst.client.post("/requests", json={"patient_id": "P1",
                                        "purpose": "recall_reminder"},
                     headers=_bearer(token_a))
    path = Path(inst.config.journal_path)
    inst.service.close()
    raw = bytearray(path.read_bytes())
    lines = raw.split(b"\n")
    target = lines[len(lines) // 2]
    flip_at = len(target) // 3
    target = target[:flip_at] + bytes([target[flip_at] ^ 0x01]) + target[flip_at + 1:]
    lines[len(lines) // 2] = target
    path.write_bytes(b"\n".join(lines))
    result.note("tamper", "flipped one byte mid-journal")

    from pairgate import errors as perr
    from pairgate.audit import verify_file
    offline = verify_file(path)
    result.note("offline verify", f"ok={offline.ok} first_bad_seq={offline.first_bad_seq}")

    refused = False
    try:
        revived = CoreService(inst.config, inst.clock,
                              sabotage=inst.service.sabotage)
        revived_client = TestClient(build_app(revived), raise_server_exceptions=False)
        check = revived_client.get("/audit/verify",
                                   headers=_bearer(seed.login(revived_client, "root",
                                                              ADMIN_SECRET)))
        result.note("restart on tampered journal", f"started; verify={check.text[:80]}")
        if not check.json().get("ok", True):
            refused = True     # started but the verifier still reports damage
        revived.close()
    except perr.JournalCorrupt as exc:
        result.note("restart on tampered journal", f"refused: {exc.message}")
        refused = True
    result.outcome = Outcome.DETECTED if (refused and not offline.ok) else Outcome.BREACHED


def _scenario_sql_injection(inst: GatewayInstance, result: ScenarioResult):
    """Metacharacter payloads in every text field; inputs are parsed into
    typed values so none may change policy state or mint a session."""
    from pairgate.directory import ID_PATTERN

    payloads = load_injection_payloads()
    admin = inst.admin_token()
    before = len(inst.service.directory.principals)
    breached_notes = []
    for payload in payloads:
        login = inst.client.post("/login", json={"id": payload, "secret": payload})
        if login.status_code == 200:
            breached_notes.append(f"login minted session for payload {payload!r}")
        login_known = inst.client.post("/login", json={"id": "A", "secret": payload})
        if login_known.status_code == 200:
            breached_notes.append(f"password field bypass with {payload!r}")
        create = inst.client.post("/principals", json={
            "name": payload, "kind": "user", "role": "non_clinical",
            "privilege": "low", "secret": "sufficiently-long-secret-1"},
            headers=_bearer(admin))
        if create.status_code == 201:
            # The admin is entitled to create accounts; a payload that is a
            # plain conforming id is data, not an attack that landed. Breach
            # only if metacharacters slipped past the typed parse or the
            # stored id came back mangled.
            if not ID_PATTERN.match(payload):
                breached_notes.append(f"non-conforming id accepted: {payload!r}")
            elif payload not in inst.service.directory.principals:
                breached_notes.append(f"principal id mangled for {payload!r}")
        patient = inst.client.post("/patients", json={"patient_id": payload},
                                   headers=_bearer(admin))
        if patient.status_code == 201:
            # Patient ids are opaque; storing one is harmless as long as it
            # comes back intact and confers no access.
            if payload not in inst.service.records.patients:
                breached_notes.append(f"patient id mangled for {payload!r}")
        for response in (login, login_known, create, patient):
            if response.status_code >= 500:
                breached_notes.append(f"5xx on payload {payload!r}")
    after = len(inst.service.directory.principals)
    result.note(f"drove {len(payloads)} payloads through login/create/patient fields",
                f"principals {before}->{after}; anomalies={len(breached_notes)}")
    verify = inst.client.get("/audit/verify", headers=_bearer(admin)).json()
    result.note("GET /audit/verify", str(verify))
    if breached_notes:
        for note in breached_notes[:5]:
            result.note("anomaly", note)
        result.outcome = Outcome.BREACHED
    elif not verify.get("ok"):
        result.outcome = Outcome.BREACHED
    else:
        result.outcome = Outcome.PREVENTED


def _scenario_weak_audit(inst: GatewayInstance, result: ScenarioResult):
    """Every state-changing success and every served document body must land
    in the journal; diff expectations against actual entries."""
    from pairgate.audit import EventKind

    base_seq = len(inst.service.log.entries)
    expected = []    # (kind, how many)

    token_a = inst.login("A")
    expected.append(("login", 1))
    token_d = inst.login("D")
    expected.append(("login", 1))

    submitted = inst.client.post("/requests", json={
        "patient_id": "P1", "purpose": "recall_reminder"}, headers=_bearer(token_a))
    request_id = submitted.json()["request_id"]
    expected.append(("request_submitted", 1))
    inst.client.post(f"/requests/{request_id}/approve", headers=_bearer(token_d))
    expected.append(("request_decided", 1))
    expected.append(("grant_issued", 1))
    grant = inst.client.get(f"/requests/{request_id}", headers=_bearer(token_a)) \
        .json()["grant"]["token"]
    doc = inst.clinical_doc_id()
    read = inst.client.get(f"/documents/{doc}",
                           params={"purpose": "recall_reminder", "grant": grant},
                           headers=_bearer(token_a))
    bodies_served = 1 if read.status_code == 200 else 0
    expected.append(("doc_read", bodies_served))

    denied = inst.client.get(f"/documents/{doc}",
                             params={"purpose": "recall_reminder"},
                             headers=_bearer(token_a))
    expected.append(("access_denied", 1 if denied.status_code == 403 else 0))

    new_entries = inst.service.log.entries[base_seq:]
    actual: dict = {}
    for entry in new_entries:
        actual[entry.kind.value] = actual.get(entry.kind.value, 0) + 1
    missing = []
    for kind, count in expected:
        have = actual.get(kind, 0)
        if have < count:
            missing.append(f"{kind}: expected {count}, journal has {have}")
        actual[kind] = have - count
    result.note("diff expected events vs journal", f"missing={missing or 'none'}")
    read_entries = [e for e in new_entries if e.kind is EventKind.DOC_READ]
    if len(read_entries) != bodies_served:
        missing.append(f"served {bodies_served} bodies, logged {len(read_entries)} reads")
    result.outcome = Outcome.BREACHED if missing else Outcome.PREVENTED


def _scenario_weak_authentication(inst: GatewayInstance, result: ScenarioResult):
    """Identity-as-password registration plus an online brute force."""
    admin = inst.admin_token()
    weak_attempts = [
        ("X", "X"),                      # id as password
        ("Y", "password"),               # dictionary word
        ("Z", "short"),                  # under the length floor
    ]
    accepted = []
    for name, secret in weak_attempts:
        response = inst.client.post("/principals", json={
            "name": name, "kind": "user", "role": "non_clinical",
            "privilege": "low", "secret": secret}, headers=_bearer(admin))
        result.note(f"register {name} with weak secret", f"{response.status_code}")
        if response.status_code == 201:
            accepted.append(name)

    locked = False
    for attempt in range(8):
        response = inst.client.post("/login",
                                    json={"id": "A", "secret": f"guess-{attempt}"})
        if response.status_code == 401 \
                and response.json()["error"]["code"] == "account_locked":
            locked = True
            result.note(f"brute-force attempt {attempt + 1}", "account_locked")
            break
    if not locked:
        result.note("brute force", "8 wrong guesses, never locked")
    correct_blocked = inst.client.post(
        "/login", json={"id": "A", "secret": seed.DEMO_SECRETS["A"]})
    result.note("correct password while locked", f"{correct_blocked.status_code}")
    if accepted or not locked or correct_blocked.status_code == 200:
        result.outcome = Outcome.BREACHED
    else:
        result.outcome = Outcome.PREVENTED


def _scenario_backup_exposure(inst: GatewayInstance, result: ScenarioResult):
    """Steal the journal; it must contain no plaintext secret or full token."""
    token_a = inst.login("A")
    token_d = inst.login("D")
    submitted = inst.client.post("/requests", json={
        "patient_id": "P1", "purpose": "recall_reminder"}, headers=_bearer(token_a))
    request_id = submitted.json()["request_id"]
    inst.client.post(f"/requests/{request_id}/approve", headers=_bearer(token_d))
    grant_token = inst.client.get(f"/requests/{request_id}",
                                  headers=_bearer(token_a)).json()["grant"]["token"]

    raw = Path(inst.config.journal_path).read_bytes()
    leaks = []
    for name, secret in {**seed.DEMO_SECRETS, "root": ADMIN_SECRET}.items():
        if secret.encode() in raw:
            leaks.append(f"plaintext secret of {name}")
    for label, value in (("session token", token_a), ("session token", token_d),
                         ("grant token", grant_token)):
        if value and value.encode() in raw:
            leaks.append(f"full {label}")
    result.note(f"scanned {len(raw)} journal bytes for secrets and live tokens",
                f"leaks={leaks or 'none'}")
    result.outcome = Outcome.BREACHED if leaks else Outcome.PREVENTED


_SCENARIOS = {
    ScenarioId.EXCESSIVE_PRIVILEGE: _scenario_excessive_privilege,
    ScenarioId.PRIVILEGE_ABUSE: _scenario_privilege_abuse,
    ScenarioId.PRIVILEGE_ELEVATION: _scenario_privilege_elevation,
    ScenarioId.PLATFORM_VULNERABILITY: _scenario_platform_vulnerability,
    ScenarioId.SQL_INJECTION: _scenario_sql_injection,
    ScenarioId.WEAK_AUDIT: _scenario_weak_audit,
    ScenarioId.WEAK_AUTHENTICATION: _scenario_weak_authentication,
    ScenarioId.BACKUP_EXPOSURE: _scenario_backup_exposure,
}


def run_scenario(scenario_id: ScenarioId, instance: GatewayInstance) -> ScenarioResult:
    result = ScenarioResult(scenario_id, Outcome.BREACHED)
    _SCENARIOS[scenario_id](instance, result)
    return result


def run_all(factory=default_factory) -> list:
    """Each scenario on a fresh instance, in the fixed published order."""
    results = []
    for scenario_id in SCENARIO_ORDER:
        instance = factory()
        try:
            results.append(run_scenario(scenario_id, instance))
        finally:
            instance.close()
    return results


def summarize(results) -> str:
    lines = [r.line() for r in results]
    breached = sum(1 for r in results if r.outcome is Outcome.BREACHED)
    lines.append(f"total={len(results)} breached={breached}")
    return "\n".join(lines)
