"""Pure access-policy engine.

A decision runs four stages in a fixed order:

  1. patient restriction check  -> deny("patient_restricted")
  2. role/privilege check       -> deny("role")
  3. purpose compatibility      -> deny("purpose")
  4. dual-authorization trigger -> require_dual_auth, else permit

Stages 2-4 are table lookups against a PermissionMatrix that is total over
the enumerated (role, privilege, doc_class, action, purpose) domain, so a
decision exists for every well-formed input. ``evaluate`` has no clock and
no side effects; the same inputs always produce the same decision.

Emergency access: a clinical principal reading under the emergency purpose
passes stage 1 even when restricted (the decision is flagged so the read is
audited as an override). Non-clinical principals get no such bypass.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from pairgate.directory import Kind, Principal, Privilege, Role
from pairgate.records import DocClass


class Purpose(str, Enum):
    TREATMENT = "treatment"
    RECALL_REMINDER = "recall_reminder"
    BILLING = "billing"
    AUDIT = "audit"
    EMERGENCY = "emergency"


class Action(str, Enum):
    READ = "read"
    UPLOAD = "upload"
    REMOVE = "remove"
    RESTRICT = "restrict"


class Outcome(str, Enum):
    PERMIT = "permit"
    DENY = "deny"
    REQUIRE_DUAL_AUTH = "require_dual_auth"


class Cell(str, Enum):
    """Base outcome stored in the permission matrix."""

    PERMIT = "permit"
    DENY_ROLE = "deny_role"
    DENY_PURPOSE = "deny_purpose"
    DUAL_AUTH = "dual_auth"


@dataclass(frozen=True)
class DocumentContext:
    """What the policy needs to know about the target document."""

    patient_id: str
    doc_class: DocClass
    doc_id: str | None = None
    blocked_principals: frozenset = frozenset()
    blocked_docs: frozenset = frozenset()


@dataclass(frozen=True)
class StageResult:
    stage: int
    name: str
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class PolicyDecision:
    outcome: Outcome
    reason: str
    emergency: bool = False
    emergency_override: bool = False
    trace: tuple = ()

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "reason": self.reason,
            "emergency": self.emergency,
            "emergency_override": self.emergency_override,
        }


STAGE_NAMES = ("patient-restriction", "role-check", "purpose-check", "dual-auth-trigger")


def _role_allows(role: Role, privilege: Privilege, action: Action) -> bool:
    if action is Action.READ:
        return True
    if action is Action.UPLOAD:
        return role is Role.CLINICAL and privilege in (Privilege.HIGH, Privilege.MEDIUM)
    # Remove and restrict are patient instructions executed by the admin desk.
    return role is Role.ADMIN and privilege is Privilege.HIGH


_ROLE_PURPOSES = {
    Role.CLINICAL: frozenset({Purpose.TREATMENT, Purpose.EMERGENCY, Purpose.RECALL_REMINDER}),
    Role.NON_CLINICAL: frozenset({Purpose.RECALL_REMINDER, Purpose.BILLING}),
    Role.ADMIN: frozenset({Purpose.AUDIT, Purpose.BILLING}),
}


def _purpose_compatible(role: Role, doc_class: DocClass, purpose: Purpose) -> bool:
    if purpose not in _ROLE_PURPOSES[role]:
        return False
    # Billing work never justifies touching clinical material.
    if purpose is Purpose.BILLING and doc_class is DocClass.CLINICAL:
        return False
    return True


def _default_cell(role: Role, privilege: Privilege, doc_class: DocClass,
                  action: Action, purpose: Purpose) -> Cell:
    if not _role_allows(role, privilege, action):
        return Cell.DENY_ROLE
    if not _purpose_compatible(role, doc_class, purpose):
        return Cell.DENY_PURPOSE
    if role is Role.NON_CLINICAL and doc_class is DocClass.CLINICAL and action is Action.READ:
        return Cell.DUAL_AUTH
    return Cell.PERMIT


class PermissionMatrix:
    """Total mapping (role, privilege, doc_class, action, purpose) -> Cell.

    Defaults are compiled in; individual cells can be overridden from config
    with keys like ``clinical.high.clinical.read.treatment=permit``.
    """

    def __init__(self, overrides: dict | None = None):
        self._cells = {}
        for role in Role:
            for privilege in Privilege:
                for doc_class in DocClass:
                    for action in Action:
                        for purpose in Purpose:
                            key = (role, privilege, doc_class, action, purpose)
                            self._cells[key] = _default_cell(*key)
        for dotted, value in (overrides or {}).items():
            self._cells[self._parse_key(dotted)] = Cell(value)

    @staticmethod
    def _parse_key(dotted: str) -> tuple:
        parts = dotted.split(".")
        if len(parts) != 5:
            raise ValueError(
                f"matrix override key needs role.privilege.doc_class.action.purpose: {dotted!r}")
        return (Role(parts[0]), Privilege(parts[1]), DocClass(parts[2]),
                Action(parts[3]), Purpose(parts[4]))

    def cell(self, role: Role, privilege: Privilege, doc_class: DocClass,
             action: Action, purpose: Purpose) -> Cell:
        return self._cells[(role, privilege, doc_class, action, purpose)]

    def items(self):
        return self._cells.items()


def evaluate(principal: Principal, doc: DocumentContext, action: Action,
             purpose: Purpose, matrix: PermissionMatrix) -> PolicyDecision:
    trace = []

    restricted = principal.id in doc.blocked_principals or (
        doc.doc_id is not None and doc.doc_id in doc.blocked_docs)
    break_glass = (restricted and action is Action.READ
                   and principal.role is Role.CLINICAL and purpose is Purpose.EMERGENCY)
    if restricted and not break_glass:
        trace.append(StageResult(1, STAGE_NAMES[0], False, "patient blocked this access"))
        return PolicyDecision(Outcome.DENY, "patient_restricted", trace=tuple(trace))
    note = "emergency override of patient restriction" if break_glass else ""
    trace.append(StageResult(1, STAGE_NAMES[0], True, note))

    cell = matrix.cell(principal.role, principal.privilege, doc.doc_class, action, purpose)

    if cell is Cell.DENY_ROLE:
        trace.append(StageResult(2, STAGE_NAMES[1], False,
                                 f"role {principal.role.value} may not {action.value}"))
        return PolicyDecision(Outcome.DENY, "role", trace=tuple(trace))
    trace.append(StageResult(2, STAGE_NAMES[1], True))

    if cell is Cell.DENY_PURPOSE:
        trace.append(StageResult(3, STAGE_NAMES[2], False,
                                 f"purpose {purpose.value} incompatible"))
        return PolicyDecision(Outcome.DENY, "purpose", trace=tuple(trace))
    trace.append(StageResult(3, STAGE_NAMES[2], True))

    emergency = purpose is Purpose.EMERGENCY and principal.role is Role.CLINICAL

    # High-privilege approvers are never routed through dual authorization
    # for reads, whatever the matrix says: they are the authorizing side.
    if (cell is Cell.DUAL_AUTH and action is Action.READ
            and principal.kind is Kind.SUPER_USER):
        cell = Cell.PERMIT

    if cell is Cell.DUAL_AUTH:
        trace.append(StageResult(4, STAGE_NAMES[3], True, "paired approval required"))
        return PolicyDecision(Outcome.REQUIRE_DUAL_AUTH, "dual_auth_required",
                              trace=tuple(trace))
    trace.append(StageResult(4, STAGE_NAMES[3], True, "no dual-auth trigger"))
    return PolicyDecision(Outcome.PERMIT, "ok", emergency=emergency,
                          emergency_override=break_glass, trace=tuple(trace))


def explain(decision: PolicyDecision) -> str:
    """Stage-by-stage rendering of how a decision was reached."""
    lines = []
    for stage in decision.trace:
        status = "pass" if stage.passed else "fail"
        line = f"stage {stage.stage} {stage.name}: {status}"
        if stage.note:
            line += f" ({stage.note})"
        lines.append(line)
    reached = {s.stage for s in decision.trace}
    for number, name in enumerate(STAGE_NAMES, start=1):
        if number not in reached:
            lines.append(f"stage {number} {name}: not reached")
    lines.append(f"decision: {decision.outcome.value} [{decision.reason}]")
    return "\n".join(lines)
