"""Admin command line.

``serve`` runs the gateway; the remaining subcommands either drive a running
gateway over HTTP (init-demo, user-add, pair-set, pair-list, patient-add,
request-submit) or work offline against a journal file (verify-audit,
smf-scan) or self-contained instances (threat-run).

Failures exit non-zero and print a single machine-readable JSON error line
to stderr.
"""

from __future__ import annotations

import argparse
import getpass
import json
import sys

import httpx

from pairgate.config import Config


def _fail(code: str, message: str, **extra) -> int:
    print(json.dumps({"error": {"code": code, "message": message, **extra}}),
          file=sys.stderr)
    return 1


def _client(args) -> httpx.Client:
    return httpx.Client(base_url=args.url, timeout=10.0)


def _login(client: httpx.Client, principal_id: str, secret: str) -> str:
    response = client.post("/login", json={"id": principal_id, "secret": secret})
    if response.status_code != 200:
        raise SystemExit(_fail("login_failed", response.text))
    return response.json()["token"]


def _admin_secret(args) -> str:
    if args.admin_secret:
        return args.admin_secret
    return getpass.getpass(f"secret for {args.admin_id}: ")


def _authed_post(client, token, path, payload) -> dict:
    response = client.post(path, json=payload,
                           headers={"Authorization": f"Bearer {token}"})
    if response.status_code >= 300:
        raise SystemExit(_fail("request_failed", response.text, path=path,
                               status=response.status_code))
    return response.json()


def cmd_serve(args) -> int:
    from pairgate.http_api import serve
    config = Config.from_file(args.config) if args.config else Config()
    if args.journal:
        config.journal_path = args.journal
    if args.listen:
        config.listen = args.listen
    config.validate()
    serve(config, console_dir=args.console_dir)
    return 0


def cmd_init_demo(args) -> int:
    from pairgate.seed import SeedError, seed_demo
    with _client(args) as client:
        try:
            summary = seed_demo(client, args.admin_id, _admin_secret(args))
        except SeedError as exc:
            return _fail("seed_failed", str(exc))
    print(json.dumps(summary, indent=2))
    return 0


def cmd_user_add(args) -> int:
    with _client(args) as client:
        token = _login(client, args.admin_id, _admin_secret(args))
        created = _authed_post(client, token, "/principals", {
            "name": args.name,
            "kind": args.kind,
            "role": args.role,
            "privilege": args.privilege,
            "secret": args.secret or getpass.getpass(f"secret for {args.name}: "),
            "display_name": args.display_name,
        })
    print(json.dumps(created, indent=2))
    return 0


def cmd_pair_set(args) -> int:
    with _client(args) as client:
        token = _login(client, args.admin_id, _admin_secret(args))
        pair = _authed_post(client, token, "/pairs", {
            "user_id": args.user,
            "super_user_ids": args.super_users,
        })
    print(json.dumps(pair, indent=2))
    return 0


def cmd_pair_list(args) -> int:
    with _client(args) as client:
        token = _login(client, args.admin_id, _admin_secret(args))
        response = client.get("/pairs", headers={"Authorization": f"Bearer {token}"})
        if response.status_code != 200:
            return _fail("request_failed", response.text, status=response.status_code)
    print(json.dumps(response.json(), indent=2))
    return 0


def cmd_patient_add(args) -> int:
    with _client(args) as client:
        token = _login(client, args.admin_id, _admin_secret(args))
        patient = _authed_post(client, token, "/patients",
                               {"patient_id": args.patient})
    print(json.dumps(patient, indent=2))
    return 0


def cmd_request_submit(args) -> int:
    with _client(args) as client:
        token = _login(client, args.as_user,
                       args.secret or getpass.getpass(f"secret for {args.as_user}: "))
        request = _authed_post(client, token, "/requests", {
            "patient_id": args.patient,
            "purpose": args.purpose,
        })
    print(json.dumps(request, indent=2))
    return 0


def cmd_verify_audit(args) -> int:
    from pairgate.audit import verify_file
    result = verify_file(args.journal)
    if result.ok:
        print(json.dumps({"ok": True}))
        return 0
    print(json.dumps({"ok": False, "first_bad_seq": result.first_bad_seq}))
    return 1


def cmd_smf_scan(args) -> int:
    from pairgate.audit import AuditLog
    from pairgate.smf import scan, SmfConfig
    log = AuditLog(args.journal, fsync=False)
    try:
        cfg = Config.from_file(args.config) if args.config else Config()
        smf_cfg = SmfConfig(
            r1_min_decided=cfg.smf_r1_min_decided, r1_share=cfg.smf_r1_share,
            r2_hourly_max=cfg.smf_r2_hourly_max, r3_open_hour=cfg.smf_r3_open_hour,
            r3_close_hour=cfg.smf_r3_close_hour, r4_window_s=cfg.smf_r4_window_s,
            r4_min_count=cfg.smf_r4_min_count, utc_offset_min=cfg.utc_offset_min)
        start = args.start_us if args.start_us is not None else 0
        end = args.end_us if args.end_us is not None else (1 << 62)
        alerts = scan(log.entries, start, end, smf_cfg)
    finally:
        log.close()
    for alert in alerts:
        print(json.dumps(alert.view()))
    print(json.dumps({"alerts": len(alerts)}))
    return 0


def cmd_threat_run(args) -> int:
    from pairgate import threatsim
    results = threatsim.run_all()
    print(threatsim.summarize(results))
    if args.transcripts:
        for result in results:
            for action, response in result.transcript:
                print(f"# {result.scenario_id.value} | {action} -> {response}")
    return 1 if any(r.outcome is threatsim.Outcome.BREACHED for r in results) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairgate",
        description="dual-authorization access gateway for sensitive records")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the gateway service")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--journal", help="journal path (overrides config)")
    p.add_argument("--listen", help="host:port (overrides config)")
    p.add_argument("--console-dir", help="directory of built console assets")
    p.set_defaults(func=cmd_serve)

    def client_parser(name, help_text):
        cp = sub.add_parser(name, help=help_text)
        cp.add_argument("--url", default="http://127.0.0.1:8032",
                        help="gateway base URL")
        return cp

    def admin_parser(name, help_text):
        ap = client_parser(name, help_text)
        ap.add_argument("--admin-id", default="root")
        ap.add_argument("--admin-secret", default="",
                        help="prompted for when omitted")
        return ap

    p = admin_parser("init-demo", "seed the demo pair design and sample records")
    p.set_defaults(func=cmd_init_demo)

    p = admin_parser("user-add", "create a principal")
    p.add_argument("name")
    p.add_argument("--kind", choices=["user", "super_user"], default="user")
    p.add_argument("--role", choices=["clinical", "non_clinical", "admin"],
                   default="non_clinical")
    p.add_argument("--privilege", choices=["high", "medium", "low"], default="low")
    p.add_argument("--secret", default="", help="prompted for when omitted")
    p.add_argument("--display-name", default=None)
    p.set_defaults(func=cmd_user_add)

    p = admin_parser("pair-set", "assign a user's approver pair")
    p.add_argument("user")
    p.add_argument("super_users", nargs="+")
    p.set_defaults(func=cmd_pair_set)

    p = admin_parser("pair-list", "list approver pair assignments")
    p.set_defaults(func=cmd_pair_list)

    p = admin_parser("patient-add", "register a patient")
    p.add_argument("patient")
    p.set_defaults(func=cmd_patient_add)

    p = client_parser("request-submit", "submit an access request as a user")
    p.add_argument("--as-user", required=True)
    p.add_argument("--secret", default="", help="prompted for when omitted")
    p.add_argument("--patient", required=True)
    p.add_argument("--purpose", default="recall_reminder",
                   choices=["treatment", "recall_reminder", "billing",
                            "audit", "emergency"])
    p.set_defaults(func=cmd_request_submit)

    p = sub.add_parser("verify-audit", help="verify a journal's hash chain offline")
    p.add_argument("--journal", required=True)
    p.set_defaults(func=cmd_verify_audit)

    p = sub.add_parser("smf-scan", help="run the activity monitor over a journal")
    p.add_argument("--journal", required=True)
    p.add_argument("--config", help="key=value config for thresholds")
    p.add_argument("--start-us", type=int, default=None)
    p.add_argument("--end-us", type=int, default=None)
    p.set_defaults(func=cmd_smf_scan)

    p = sub.add_parser("threat-run",
                       help="run the eight attack scenarios on fresh instances")
    p.add_argument("--transcripts", action="store_true",
                   help="print per-step transcripts")
    p.set_defaults(func=cmd_threat_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code is not None else 0
    except Exception as exc:   # noqa: BLE001 - CLI boundary
        return _fail(getattr(exc, "code", "error"), str(exc))


if __name__ == "__main__":
    sys.exit(main())
