"""Service configuration.

Config files are plain ``key=value`` lines; ``#`` starts a comment. Keys
match the field names below. Policy matrix overrides use dotted keys of the
form ``policy.<role>.<privilege>.<doc_class>.<action>.<purpose>=<cell>``
(see pairgate.policy for cell values) and are collected unparsed into
``policy_overrides``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class Config:
    listen: str = "127.0.0.1:8032"
    journal_path: str = "pairgate-journal.log"

    approval_timeout_s: float = 120.0
    grant_ttl_s: float = 900.0
    pending_cap: int = 5
    passcode_ttl_s: float = 60.0

    lockout_threshold: int = 5
    lockout_duration_s: float = 900.0
    session_ttl_s: float = 28800.0
    kdf_iterations: int = 60_000
    journal_fsync: bool = True

    # Admin principal seeded on a fresh journal; secret must satisfy the
    # password policy and is mandatory when the journal does not exist yet.
    bootstrap_admin_id: str = "root"
    bootstrap_admin_secret: str = ""

    # Activity-monitor rule thresholds.
    smf_r1_min_decided: int = 20
    smf_r1_share: float = 0.9
    smf_r2_hourly_max: int = 30
    smf_r3_open_hour: int = 7
    smf_r3_close_hour: int = 19
    smf_r4_window_s: float = 1.0
    smf_r4_min_count: int = 5
    utc_offset_min: int = 0

    policy_overrides: dict = field(default_factory=dict)

    def validate(self) -> "Config":
        for name in ("approval_timeout_s", "grant_ttl_s", "passcode_ttl_s",
                     "lockout_duration_s", "session_ttl_s", "smf_r4_window_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("pending_cap", "lockout_threshold", "kdf_iterations",
                     "smf_r1_min_decided", "smf_r2_hourly_max", "smf_r4_min_count"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.smf_r1_share <= 1.0:
            raise ValueError("smf_r1_share must be in (0, 1]")
        if not 0 <= self.smf_r3_open_hour < self.smf_r3_close_hour <= 24:
            raise ValueError("business hours must satisfy 0 <= open < close <= 24")
        return self

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        cfg = cls()
        text = Path(path).read_text(encoding="utf-8")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key.startswith("policy."):
                cfg.policy_overrides[key[len("policy."):]] = value
                continue
            if key not in fields or key == "policy_overrides":
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            ftype = fields[key].type
            if ftype == "bool":
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(f"{path}:{lineno}: {key} must be a boolean")
                parsed = value.lower() in ("true", "1")
            elif ftype == "int":
                parsed = int(value)
            elif ftype == "float":
                parsed = float(value)
            else:
                parsed = value
            setattr(cfg, key, parsed)
        return cfg.validate()

    def echo(self) -> dict:
        """Flat string mapping of the effective configuration.

        Written to the journal at startup. The bootstrap secret is omitted:
        the journal must never hold credential material.
        """
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("bootstrap_admin_secret", "policy_overrides"):
                continue
            out[f.name] = str(getattr(self, f.name))
        for key, value in sorted(self.policy_overrides.items()):
            out[f"policy.{key}"] = value
        return out
