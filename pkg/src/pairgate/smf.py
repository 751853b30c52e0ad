"""Rule-based activity monitor over the audit journal.

Dual control shares responsibility; it cannot stop a user and an approver
who collude. These rules scan the journal for the traces such collusion
(and plain misuse) leaves behind. Scanning is a pure function of the
entries, the window, and the thresholds: the same inputs always yield the
same alerts, in a stable order.

  R1  one approver dominates a user's approvals (>share over >=N decided)
  R2  request-submission volume spike (more than N in any sliding hour)
  R3  document reads outside business hours
  R4  rubber-stamping: approvals consistently within seconds of the alert
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from pairgate.audit import AuditEntry, EventKind


class RuleId(str, Enum):
    R1_PAIR_EXCLUSIVITY = "R1_PairExclusivity"
    R2_VOLUME_SPIKE = "R2_VolumeSpike"
    R3_OFF_HOURS = "R3_OffHours"
    R4_RUBBER_STAMP = "R4_RubberStamp"


class Severity(str, Enum):
    INFO = "info"
    WARN = "warn"
    CRITICAL = "critical"


@dataclass(frozen=True)
class SmfAlert:
    rule_id: RuleId
    window_start_us: int
    window_end_us: int
    involved: frozenset
    evidence: tuple      # journal seq numbers
    severity: Severity

    def view(self) -> dict:
        return {
            "rule_id": self.rule_id.value,
            "window_start_us": self.window_start_us,
            "window_end_us": self.window_end_us,
            "involved": sorted(self.involved),
            "evidence": list(self.evidence),
            "severity": self.severity.value,
        }

    def dedup_key(self) -> tuple:
        return (self.rule_id.value, tuple(sorted(self.involved)), self.evidence)


@dataclass(frozen=True)
class SmfConfig:
    r1_min_decided: int = 20
    r1_share: float = 0.9
    r2_hourly_max: int = 30
    r3_open_hour: int = 7
    r3_close_hour: int = 19
    r4_window_s: float = 1.0
    r4_min_count: int = 5
    utc_offset_min: int = 0


HOUR_US = 3_600_000_000


def _span(entries) -> tuple:
    times = [e.ts_us for e in entries]
    return min(times), max(times)


def _scan_r1(entries, cfg: SmfConfig) -> list:
    decided_by_user: dict = {}
    submitters = {e.subject: e.detail.get("user_id", "")
                  for e in entries if e.kind is EventKind.REQUEST_SUBMITTED}
    for e in entries:
        if e.kind is not EventKind.REQUEST_DECIDED:
            continue
        user = e.detail.get("user_id") or submitters.get(e.subject, "")
        decided_by_user.setdefault(user, []).append(e)
    alerts = []
    for user, decided in sorted(decided_by_user.items()):
        if len(decided) < cfg.r1_min_decided:
            continue
        approvals = [e for e in decided if e.detail.get("verdict") == "approve"]
        if not approvals:
            continue
        counts: dict = {}
        for e in approvals:
            counts[e.actor_id] = counts.get(e.actor_id, 0) + 1
        for approver, count in sorted(counts.items()):
            if count / len(approvals) > cfg.r1_share:
                evidence = tuple(e.seq for e in approvals if e.actor_id == approver)
                start, end = _span([e for e in approvals if e.actor_id == approver])
                alerts.append(SmfAlert(RuleId.R1_PAIR_EXCLUSIVITY, start, end,
                                       frozenset({user, approver}), evidence,
                                       Severity.CRITICAL))
    return alerts


def _scan_r2(entries, cfg: SmfConfig) -> list:
    submissions: dict = {}
    for e in entries:
        if e.kind is EventKind.REQUEST_SUBMITTED:
            submissions.setdefault(e.actor_id, []).append(e)
    alerts = []
    for user, subs in sorted(submissions.items()):
        subs.sort(key=lambda e: (e.ts_us, e.seq))
        best: list | None = None
        for i, anchor in enumerate(subs):
            window = [e for e in subs[i:] if e.ts_us < anchor.ts_us + HOUR_US]
            if len(window) > cfg.r2_hourly_max and (best is None or len(window) > len(best)):
                best = window
        if best is not None:
            start, end = _span(best)
            alerts.append(SmfAlert(RuleId.R2_VOLUME_SPIKE, start, end,
                                   frozenset({user}), tuple(e.seq for e in best),
                                   Severity.WARN))
    return alerts


def _local_hour(ts_us: int, utc_offset_min: int) -> float:
    local_s = ts_us / 1_000_000 + utc_offset_min * 60
    return (local_s % 86_400) / 3_600


def _scan_r3(entries, cfg: SmfConfig) -> list:
    off_hours: dict = {}
    for e in entries:
        if e.kind is not EventKind.DOC_READ:
            continue
        hour = _local_hour(e.ts_us, cfg.utc_offset_min)
        if not cfg.r3_open_hour <= hour < cfg.r3_close_hour:
            off_hours.setdefault(e.actor_id, []).append(e)
    alerts = []
    for reader, reads in sorted(off_hours.items()):
        start, end = _span(reads)
        alerts.append(SmfAlert(RuleId.R3_OFF_HOURS, start, end, frozenset({reader}),
                               tuple(e.seq for e in reads), Severity.INFO))
    return alerts


def _scan_r4(entries, cfg: SmfConfig) -> list:
    submitted_at = {e.subject: e.ts_us for e in entries
                    if e.kind is EventKind.REQUEST_SUBMITTED}
    fast: dict = {}
    limit_us = int(cfg.r4_window_s * 1_000_000)
    for e in entries:
        if e.kind is not EventKind.REQUEST_DECIDED or e.detail.get("verdict") != "approve":
            continue
        alerted = submitted_at.get(e.subject)
        if alerted is not None and e.ts_us - alerted <= limit_us:
            fast.setdefault(e.actor_id, []).append(e)
    alerts = []
    for approver, approvals in sorted(fast.items()):
        if len(approvals) >= cfg.r4_min_count:
            start, end = _span(approvals)
            alerts.append(SmfAlert(RuleId.R4_RUBBER_STAMP, start, end,
                                   frozenset({approver}),
                                   tuple(e.seq for e in approvals), Severity.CRITICAL))
    return alerts


def scan(entries, window_start_us: int, window_end_us: int,
         cfg: SmfConfig) -> list:
    """Run every rule over the entries inside [window_start_us, window_end_us)."""
    windowed = [e for e in entries if window_start_us <= e.ts_us < window_end_us]
    alerts: list = []
    for rule in (_scan_r1, _scan_r2, _scan_r3, _scan_r4):
        alerts.extend(rule(windowed, cfg))
    alerts.sort(key=lambda a: (a.rule_id.value, sorted(a.involved), a.window_start_us))
    return alerts
