from __future__ import annotations

import itertools

import pytest

from switchboard.chat import ChatService
from switchboard.registry import BackendConfig, ModelRegistry
from switchboard.server import ServerConfig, build_services, create_app
from switchboard.store import Store

from stubs import StubHub, StubOpenAI, StubRunner

_counter = itertools.count(1)


@pytest.fixture
def store(tmp_path):
    return Store(tmp_path / "store")


@pytest.fixture
def runner():
    with StubRunner() as stub:
        yield stub


@pytest.fixture
def remote():
    with StubOpenAI() as stub:
        yield stub


@pytest.fixture
def hub_stub():
    with StubHub() as stub:
        yield stub


@pytest.fixture
def registry(store, runner):
    reg = ModelRegistry(store)
    reg.register_backend(BackendConfig(id="local", kind="local-runner",
                                       base_url=runner.base_url))
    return reg


@pytest.fixture
def engine(store, tmp_path, registry):
    from switchboard.plugins import PluginEngine
    eng = PluginEngine(store, tmp_path / "plugins", registry,
                       invoke_timeout=5.0)
    yield eng
    eng.shutdown()


@pytest.fixture
def chat(store):
    return ChatService(store)


@pytest.fixture
def services(tmp_path, runner):
    config = ServerConfig(
        data_dir=str(tmp_path / "data"),
        backends=[BackendConfig(id="local", kind="local-runner",
                                base_url=runner.base_url)],
        limits={"max_parallel_generations": 8, "plugin_timeout_s": 5,
                "tool_max_rounds": 5},
    )
    svc = build_services(config)
    yield svc
    svc.close()


@pytest.fixture
def client(services):
    from fastapi.testclient import TestClient
    with TestClient(create_app(services)) as test_client:
        yield test_client


def signup_and_login(client, name=None, password="hunter2hunter2"):
    """Create an account, log in, and return (user_dict, auth_headers)."""
    n = next(_counter)
    name = name or f"user{n}"
    email = f"{name}-{n}@example.test"
    resp = client.post("/api/auth/signup", json={
        "name": name, "email": email, "password": password})
    assert resp.status_code == 201, resp.text
    user = resp.json()
    resp = client.post("/api/auth/login", json={
        "email": email, "password": password})
    assert resp.status_code == 200, resp.text
    token = resp.json()["token"]
    return user, {"Authorization": f"Bearer {token}"}


@pytest.fixture
def admin(client):
    # first signup on a fresh data dir becomes the admin
    return signup_and_login(client, name="admin")


@pytest.fixture
def admin_headers(admin):
    return admin[1]


@pytest.fixture
def member(client, admin):
    """A second, approved, non-admin account."""
    user, headers = signup_and_login(client, name="member")
    resp = client.post(f"/api/users/{user['id']}/approve",
                       headers=admin[1])
    assert resp.status_code == 200, resp.text
    return user, headers


@pytest.fixture
def member_headers(member):
    return member[1]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of every run."""
    verdicts = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            when = getattr(report, "when", "call")
            if status == "passed" and when != "call":
                continue
            name = nodeid.rsplit("::", 1)[-1]
            ok = status == "passed"
            verdicts.append((name, ok))
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in sorted(verdicts):
        terminalreporter.write_line(
            f"{name}: {'PASS' if ok else 'FAIL'}")
