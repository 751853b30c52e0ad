from __future__ import annotations

import socket
import threading
import time

import pytest
from fastapi.testclient import TestClient

from pairgate import seed
from pairgate.clock import ManualClock
from pairgate.config import Config
from pairgate.http_api import build_app
from pairgate.service import CoreService

ADMIN_SECRET = "rooty-long-bootstrap-77"

_SESSION_START = time.monotonic()
RUNTIME_BUDGET_S = 180.0


def make_config(tmp_path, **overrides) -> Config:
    defaults = dict(
        journal_path=str(tmp_path / "journal.log"),
        journal_fsync=False,
        kdf_iterations=400,
        bootstrap_admin_secret=ADMIN_SECRET,
    )
    defaults.update(overrides)
    return Config(**defaults)


class Harness:
    """Service + HTTP client + convenience logins over one manual clock."""

    def __init__(self, tmp_path, *, seeded=True, sabotage=frozenset(), **overrides):
        self.clock = ManualClock()
        self.config = make_config(tmp_path, **overrides)
        self.service = CoreService(self.config, self.clock, sabotage=sabotage)
        self.client = TestClient(build_app(self.service),
                                 raise_server_exceptions=False)
        self.tokens: dict = {}
        if seeded:
            self.seeded = seed.seed_demo(self.client, "root", ADMIN_SECRET)

    def login(self, principal_id: str, secret: str | None = None) -> str:
        if principal_id not in self.tokens:
            secret = secret or (ADMIN_SECRET if principal_id == "root"
                                else seed.DEMO_SECRETS[principal_id])
            self.tokens[principal_id] = seed.login(self.client, principal_id, secret)
        return self.tokens[principal_id]

    def auth(self, principal_id: str) -> dict:
        return {"Authorization": f"Bearer {self.login(principal_id)}"}

    def post(self, principal_id: str, path: str, payload: dict | None = None):
        return self.client.post(path, json=payload, headers=self.auth(principal_id))

    def get(self, principal_id: str, path: str, **params):
        return self.client.get(path, params=params or None,
                               headers=self.auth(principal_id))

    def submit(self, user: str, patient: str = "P1",
               purpose: str = "recall_reminder") -> dict:
        response = self.post(user, "/requests",
                             {"patient_id": patient, "purpose": purpose})
        assert response.status_code == 201, response.text
        return response.json()

    def approve(self, decider: str, request_id: str) -> dict:
        response = self.post(decider, f"/requests/{request_id}/approve")
        assert response.status_code == 200, response.text
        return response.json()

    def grant_for(self, user: str, request_id: str) -> str:
        response = self.get(user, f"/requests/{request_id}")
        assert response.status_code == 200, response.text
        return response.json()["grant"]["token"]

    def close(self):
        self.service.close()


@pytest.fixture
def harness(tmp_path):
    h = Harness(tmp_path)
    yield h
    h.close()


@pytest.fixture
def bare_harness(tmp_path):
    h = Harness(tmp_path, seeded=False)
    yield h
    h.close()


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveServer:
    """uvicorn in a thread, for tests that need real sockets (SSE)."""

    def __init__(self, app):
        import uvicorn

        self.port = _free_port()
        self.base_url = f"http://127.0.0.1:{self.port}"
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port,
                                log_level="error")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.thread.start()
        deadline = time.monotonic() + 10
        while not self.server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("uvicorn did not start")
            time.sleep(0.02)

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=5)


@pytest.fixture
def live_harness(tmp_path):
    h = Harness(tmp_path)
    server = LiveServer(build_app(h.service))
    h.base_url = server.base_url
    yield h
    server.stop()
    h.close()


# -- acceptance reporting -------------------------------------------------------

_acceptance_results: list = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(label): marks a test as one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker:
        _acceptance_results.append((marker.args[0], report.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.monotonic() - _SESSION_START
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed in _acceptance_results:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {label}")
    runtime_ok = elapsed <= RUNTIME_BUDGET_S
    terminalreporter.write_line(
        f"[{'PASS' if runtime_ok else 'FAIL'}] suite runtime {elapsed:.1f}s "
        f"(budget {RUNTIME_BUDGET_S:.0f}s)")


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.monotonic() - _SESSION_START
    if _acceptance_results and elapsed > RUNTIME_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1
