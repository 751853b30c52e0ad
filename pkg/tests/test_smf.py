from pairgate.audit import AuditEntry, EventKind
from pairgate.smf import RuleId, Severity, SmfConfig, scan

CFG = SmfConfig()

HOUR_US = 3_600_000_000
MIN_US = 60_000_000
SEC_US = 1_000_000

# 2020-01-01 00:00:00 UTC falls on a day boundary, which keeps the local-hour
# arithmetic in the off-hours tests easy to reason about.
BASE_US = 1_577_836_800_000_000


def entry(seq, ts_us, actor, kind, subject, detail):
    return AuditEntry(seq=seq, ts_us=ts_us, actor_id=actor, kind=kind,
                      subject=subject, detail=detail, prev_hash="0" * 64,
                      entry_hash="0" * 64)


def approval_cycle(entries, request_id, user, approver, submit_ts, decide_ts):
    entries.append(entry(len(entries), submit_ts, user,
                         EventKind.REQUEST_SUBMITTED, request_id,
                         {"user_id": user, "patient_scope": "P1",
                          "purpose": "recall_reminder",
                          "alert_targets": "D,E,F"}))
    entries.append(entry(len(entries), decide_ts, approver,
                         EventKind.REQUEST_DECIDED, request_id,
                         {"verdict": "approve", "channel": "push_console",
                          "user_id": user}))


def build_approvals(count, approver="D", spacing_s=120, decide_delay_s=30):
    entries = []
    at_nine = BASE_US + 9 * HOUR_US      # mid-morning, inside business hours
    for i in range(count):
        submit = at_nine + i * spacing_s * SEC_US
        approval_cycle(entries, f"req-{i:03d}", "A", approver, submit,
                       submit + decide_delay_s * SEC_US)
    return entries


def window(entries):
    return 0, max(e.ts_us for e in entries) + 1 if entries else 1


class TestR1PairExclusivity:
    def _oracle_share(self, entries, user):
        # Independent linear count: approvals of this user's requests per approver.
        submitted = {e.subject for e in entries
                     if e.kind is EventKind.REQUEST_SUBMITTED
                     and e.detail["user_id"] == user}
        decided = [e for e in entries if e.kind is EventKind.REQUEST_DECIDED
                   and e.subject in submitted]
        approvals = [e for e in decided if e.detail["verdict"] == "approve"]
        counts = {}
        for e in approvals:
            counts[e.actor_id] = counts.get(e.actor_id, 0) + 1
        return len(decided), counts

    def test_twenty_five_single_approver_raises_critical(self):
        entries = build_approvals(25)
        decided, counts = self._oracle_share(entries, "A")
        assert decided == 25 and counts == {"D": 25}
        alerts = scan(entries, *window(entries), CFG)
        r1 = [a for a in alerts if a.rule_id is RuleId.R1_PAIR_EXCLUSIVITY]
        assert len(r1) == 1
        assert r1[0].severity is Severity.CRITICAL
        assert r1[0].involved == frozenset({"A", "D"})
        assert len(r1[0].evidence) == 25

    def test_nineteen_is_below_the_floor(self):
        entries = build_approvals(19)
        alerts = scan(entries, *window(entries), CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R1_PAIR_EXCLUSIVITY]

    def test_twenty_is_exactly_at_the_floor(self):
        entries = build_approvals(20)
        alerts = scan(entries, *window(entries), CFG)
        assert [a for a in alerts if a.rule_id is RuleId.R1_PAIR_EXCLUSIVITY]

    def test_balanced_approvers_do_not_alert(self):
        entries = []
        at_nine = BASE_US + 9 * HOUR_US
        for i in range(24):
            approver = ("D", "E", "F")[i % 3]
            submit = at_nine + i * 120 * SEC_US
            approval_cycle(entries, f"req-{i:03d}", "A", approver, submit,
                           submit + 30 * SEC_US)
        alerts = scan(entries, *window(entries), CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R1_PAIR_EXCLUSIVITY]

    def test_share_boundary_is_strict(self):
        # 18 of 20 approvals by D is exactly 90%: not an alert. 19 of 20 is.
        entries = []
        at_nine = BASE_US + 9 * HOUR_US
        for i in range(20):
            approver = "D" if i < 18 else "E"
            submit = at_nine + i * 120 * SEC_US
            approval_cycle(entries, f"req-{i:03d}", "A", approver, submit,
                           submit + 30 * SEC_US)
        alerts = scan(entries, *window(entries), CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R1_PAIR_EXCLUSIVITY]

        entries = []
        for i in range(20):
            approver = "D" if i < 19 else "E"
            submit = at_nine + i * 120 * SEC_US
            approval_cycle(entries, f"req-{i:03d}", "A", approver, submit,
                           submit + 30 * SEC_US)
        alerts = scan(entries, *window(entries), CFG)
        r1 = [a for a in alerts if a.rule_id is RuleId.R1_PAIR_EXCLUSIVITY]
        assert len(r1) == 1 and r1[0].involved == frozenset({"A", "D"})


class TestR2VolumeSpike:
    def _submissions(self, count, spacing_s):
        entries = []
        at_nine = BASE_US + 9 * HOUR_US
        for i in range(count):
            entries.append(entry(i, at_nine + i * spacing_s * SEC_US, "A",
                                 EventKind.REQUEST_SUBMITTED, f"req-{i:03d}",
                                 {"user_id": "A", "patient_scope": "P1",
                                  "purpose": "recall_reminder",
                                  "alert_targets": "D"}))
        return entries

    def test_thirty_one_in_an_hour_alerts(self):
        entries = self._submissions(31, spacing_s=60)     # spans 30 minutes
        alerts = scan(entries, *window(entries), CFG)
        r2 = [a for a in alerts if a.rule_id is RuleId.R2_VOLUME_SPIKE]
        assert len(r2) == 1
        assert r2[0].involved == frozenset({"A"})
        assert len(r2[0].evidence) == 31

    def test_thirty_in_an_hour_does_not_alert(self):
        entries = self._submissions(30, spacing_s=60)
        alerts = scan(entries, *window(entries), CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R2_VOLUME_SPIKE]

    def test_spread_over_hours_does_not_alert(self):
        entries = self._submissions(40, spacing_s=150)    # 100 minutes span
        # Any sliding hour holds at most 24 of these.
        alerts = scan(entries, *window(entries), CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R2_VOLUME_SPIKE]


class TestR3OffHours:
    def _read_at(self, seq, hour, minute=0, reader="A"):
        ts = BASE_US + hour * HOUR_US + minute * MIN_US
        return entry(seq, ts, reader, EventKind.DOC_READ, "doc-1",
                     {"patient_id": "P1", "purpose": "treatment", "grant": ""})

    def test_reads_outside_business_window_alert(self):
        entries = [self._read_at(0, 6, 59), self._read_at(1, 23, 0)]
        alerts = scan(entries, 0, BASE_US + 2_000_000_000_000, CFG)
        r3 = [a for a in alerts if a.rule_id is RuleId.R3_OFF_HOURS]
        assert len(r3) == 1
        assert len(r3[0].evidence) == 2

    def test_business_hours_reads_are_quiet(self):
        entries = [self._read_at(0, 7, 0), self._read_at(1, 12, 30),
                   self._read_at(2, 18, 59)]
        alerts = scan(entries, 0, BASE_US + 2_000_000_000_000, CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R3_OFF_HOURS]

    def test_closing_boundary_is_exclusive(self):
        entries = [self._read_at(0, 19, 0)]
        alerts = scan(entries, 0, BASE_US + 2_000_000_000_000, CFG)
        assert [a for a in alerts if a.rule_id is RuleId.R3_OFF_HOURS]

    def test_utc_offset_shifts_the_window(self):
        # 21:00 UTC is 08:00 at +11 hours: inside business hours there.
        entries = [self._read_at(0, 21, 0)]
        local = SmfConfig(utc_offset_min=11 * 60)
        alerts = scan(entries, 0, BASE_US + 2_000_000_000_000, local)
        assert not [a for a in alerts if a.rule_id is RuleId.R3_OFF_HOURS]


class TestR4RubberStamp:
    def test_five_instant_approvals_alert(self):
        entries = build_approvals(5, decide_delay_s=0.5)
        alerts = scan(entries, *window(entries), CFG)
        r4 = [a for a in alerts if a.rule_id is RuleId.R4_RUBBER_STAMP]
        assert len(r4) == 1
        assert r4[0].involved == frozenset({"D"})
        assert r4[0].severity is Severity.CRITICAL

    def test_four_instant_approvals_do_not_alert(self):
        entries = build_approvals(4, decide_delay_s=0.5)
        alerts = scan(entries, *window(entries), CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R4_RUBBER_STAMP]

    def test_considered_approvals_do_not_alert(self):
        entries = build_approvals(8, decide_delay_s=2)
        alerts = scan(entries, *window(entries), CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R4_RUBBER_STAMP]


class TestScanBehavior:
    def test_empty_log_is_quiet(self):
        assert scan([], 0, 10**18, CFG) == []

    def test_scan_is_pure_and_deterministic(self):
        entries = build_approvals(25, decide_delay_s=0.5)
        first = scan(entries, *window(entries), CFG)
        second = scan(entries, *window(entries), CFG)
        assert first == second
        assert len(first) >= 2      # R1 and R4 both fire on this shape

    def test_window_bounds_filter_entries(self):
        entries = build_approvals(25)
        cutoff = entries[10].ts_us
        alerts = scan(entries, 0, cutoff, CFG)
        assert not [a for a in alerts if a.rule_id is RuleId.R1_PAIR_EXCLUSIVITY]

    def test_evidence_seqs_exist_and_fall_in_window(self):
        entries = build_approvals(25, decide_delay_s=0.5)
        known = {e.seq: e.ts_us for e in entries}
        for alert in scan(entries, *window(entries), CFG):
            for seq in alert.evidence:
                assert seq in known
                assert (alert.window_start_us <= known[seq]
                        <= alert.window_end_us)


class TestEndToEndOverService:
    def test_abuse_pattern_detected_via_http(self, harness):
        for _ in range(21):
            request = harness.submit("A")
            harness.approve("D", request["request_id"])
            harness.clock.advance(45)
        alerts = harness.get("root", "/audit/smf").json()
        rules = {a["rule_id"] for a in alerts}
        assert "R1_PairExclusivity" in rules
        recorded = harness.post("root", "/audit/smf/record").json()
        assert recorded["recorded"] >= 1
        again = harness.post("root", "/audit/smf/record").json()
        assert again["recorded"] == 0     # dedup: same findings not re-journaled
