import itertools

import pytest

from pairgate.directory import Credential, Kind, Principal, Privilege, Role
from pairgate.policy import (Action, Cell, DocumentContext, Outcome,
                             PermissionMatrix, Purpose, evaluate, explain)
from pairgate.records import DocClass

MATRIX = PermissionMatrix()

_CRED = Credential("pbkdf2-sha256", 1, "00", "00")


def principal(role, privilege, kind=Kind.USER, pid="p"):
    return Principal(id=pid, display_name=pid, kind=kind, role=role,
                     privilege=privilege, credential=_CRED)


def ctx(doc_class=DocClass.CLINICAL, blocked_principals=(), blocked_docs=(),
        doc_id="d1"):
    return DocumentContext(patient_id="P1", doc_class=doc_class, doc_id=doc_id,
                           blocked_principals=frozenset(blocked_principals),
                           blocked_docs=frozenset(blocked_docs))


class TestHeadlineDecisions:
    def test_non_clinical_read_of_clinical_doc_needs_dual_auth(self):
        decision = evaluate(principal(Role.NON_CLINICAL, Privilege.LOW), ctx(),
                            Action.READ, Purpose.RECALL_REMINDER, MATRIX)
        assert decision.outcome is Outcome.REQUIRE_DUAL_AUTH

    def test_clinical_high_reads_outright(self):
        decision = evaluate(principal(Role.CLINICAL, Privilege.HIGH), ctx(),
                            Action.READ, Purpose.TREATMENT, MATRIX)
        assert decision.outcome is Outcome.PERMIT

    def test_billing_purpose_never_reaches_clinical_documents(self):
        decision = evaluate(principal(Role.NON_CLINICAL, Privilege.LOW), ctx(),
                            Action.READ, Purpose.BILLING, MATRIX)
        assert decision.outcome is Outcome.DENY
        assert decision.reason == "purpose"

    def test_billing_clinical_read_absent_from_entire_matrix(self):
        # No privilege level opens a billing-purpose read of clinical data.
        for privilege in Privilege:
            cell = MATRIX.cell(Role.NON_CLINICAL, privilege, DocClass.CLINICAL,
                               Action.READ, Purpose.BILLING)
            assert cell is Cell.DENY_PURPOSE

    def test_upload_denied_for_non_clinical(self):
        decision = evaluate(principal(Role.NON_CLINICAL, Privilege.LOW), ctx(),
                            Action.UPLOAD, Purpose.RECALL_REMINDER, MATRIX)
        assert (decision.outcome, decision.reason) == (Outcome.DENY, "role")


class TestRestrictionStage:
    def test_blocked_principal_denied_first(self):
        decision = evaluate(principal(Role.CLINICAL, Privilege.HIGH, pid="G"),
                            ctx(blocked_principals={"G"}),
                            Action.READ, Purpose.TREATMENT, MATRIX)
        assert (decision.outcome, decision.reason) == (Outcome.DENY,
                                                       "patient_restricted")

    def test_blocked_doc_denied(self):
        decision = evaluate(principal(Role.CLINICAL, Privilege.HIGH),
                            ctx(blocked_docs={"d1"}),
                            Action.READ, Purpose.TREATMENT, MATRIX)
        assert decision.reason == "patient_restricted"

    def test_emergency_overrides_restriction_for_clinical_only(self):
        blocked = ctx(blocked_principals={"G"})
        doctor = evaluate(principal(Role.CLINICAL, Privilege.HIGH, pid="G"),
                          blocked, Action.READ, Purpose.EMERGENCY, MATRIX)
        assert doctor.outcome is Outcome.PERMIT
        assert doctor.emergency and doctor.emergency_override

        clerk = evaluate(principal(Role.NON_CLINICAL, Privilege.LOW, pid="G"),
                         blocked, Action.READ, Purpose.EMERGENCY, MATRIX)
        assert clerk.outcome is Outcome.DENY
        assert clerk.reason == "patient_restricted"

    def test_emergency_permit_is_flagged_even_without_restriction(self):
        decision = evaluate(principal(Role.CLINICAL, Privilege.HIGH), ctx(),
                            Action.READ, Purpose.EMERGENCY, MATRIX)
        assert decision.outcome is Outcome.PERMIT
        assert decision.emergency and not decision.emergency_override

    def test_monotonicity_restriction_never_grants(self):
        # Adding a restriction may only move outcomes toward deny.
        rank = {Outcome.PERMIT: 0, Outcome.REQUIRE_DUAL_AUTH: 1, Outcome.DENY: 2}
        for role, privilege, doc_class, action, purpose in itertools.product(
                Role, Privilege, DocClass, Action, Purpose):
            subject = principal(role, privilege, pid="G")
            before = evaluate(subject, ctx(doc_class), action, purpose, MATRIX)
            after = evaluate(subject, ctx(doc_class, blocked_principals={"G"}),
                             action, purpose, MATRIX)
            assert rank[after.outcome] >= rank[before.outcome]


class TestTotalityAndSuperUsers:
    def test_every_tuple_yields_exactly_one_outcome(self):
        for role, privilege, doc_class, action, purpose in itertools.product(
                Role, Privilege, DocClass, Action, Purpose):
            decision = evaluate(principal(role, privilege), ctx(doc_class),
                                action, purpose, MATRIX)
            assert decision.outcome in Outcome
            again = evaluate(principal(role, privilege), ctx(doc_class),
                             action, purpose, MATRIX)
            assert again == decision

    def test_super_user_never_gets_dual_auth_on_read(self):
        for role in (Role.CLINICAL, Role.ADMIN):
            for doc_class, purpose in itertools.product(DocClass, Purpose):
                decision = evaluate(
                    principal(role, Privilege.HIGH, kind=Kind.SUPER_USER),
                    ctx(doc_class), Action.READ, purpose, MATRIX)
                assert decision.outcome is not Outcome.REQUIRE_DUAL_AUTH

    def test_super_user_guard_holds_under_hostile_override(self):
        # Even a matrix override routing clinical-high reads to dual auth
        # must not subject an approver to approval by their own peers.
        hostile = PermissionMatrix({
            "clinical.high.clinical.read.treatment": "dual_auth"})
        approver = principal(Role.CLINICAL, Privilege.HIGH, kind=Kind.SUPER_USER)
        decision = evaluate(approver, ctx(), Action.READ, Purpose.TREATMENT, hostile)
        assert decision.outcome is Outcome.PERMIT
        plain = principal(Role.CLINICAL, Privilege.HIGH)
        assert evaluate(plain, ctx(), Action.READ, Purpose.TREATMENT,
                        hostile).outcome is Outcome.REQUIRE_DUAL_AUTH


class TestExplain:
    def test_permit_trace_shows_four_stages(self):
        decision = evaluate(principal(Role.CLINICAL, Privilege.HIGH), ctx(),
                            Action.READ, Purpose.TREATMENT, MATRIX)
        text = explain(decision)
        for stage in range(1, 5):
            assert f"stage {stage}" in text
        assert text.count("fail") == 0
        assert text.endswith("decision: permit [ok]")

    def test_restricted_trace_stops_at_stage_one(self):
        decision = evaluate(principal(Role.CLINICAL, Privilege.HIGH, pid="G"),
                            ctx(blocked_principals={"G"}),
                            Action.READ, Purpose.TREATMENT, MATRIX)
        text = explain(decision)
        assert "stage 1 patient-restriction: fail" in text
        assert "stage 2 role-check: not reached" in text

    def test_dual_auth_trace_passes_first_three(self):
        decision = evaluate(principal(Role.NON_CLINICAL, Privilege.LOW), ctx(),
                            Action.READ, Purpose.RECALL_REMINDER, MATRIX)
        text = explain(decision)
        for stage_name in ("patient-restriction", "role-check", "purpose-check"):
            assert f"{stage_name}: pass" in text
        assert "require_dual_auth" in text


class TestMatrixOverrides:
    def test_override_applies(self):
        matrix = PermissionMatrix({
            "non_clinical.low.clinical.read.recall_reminder": "deny_purpose"})
        decision = evaluate(principal(Role.NON_CLINICAL, Privilege.LOW), ctx(),
                            Action.READ, Purpose.RECALL_REMINDER, matrix)
        assert decision.outcome is Outcome.DENY

    def test_bad_override_key_rejected(self):
        with pytest.raises(ValueError):
            PermissionMatrix({"not.enough.parts": "permit"})
        with pytest.raises(ValueError):
            PermissionMatrix({"non_clinical.low.clinical.read.recall_reminder":
                              "bogus_cell"})
