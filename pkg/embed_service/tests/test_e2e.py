"""End-to-end: the evolution engine drives a live service over localhost.

Hermetic stand-in for the networked smoke run: hash embeddings instead of
CLIP, stub upstreams instead of real APIs, the real wire protocol and a
real socket in between. The engine is exercised purely through its CLI.
"""

import json
import os
import socket
import subprocess
import sys
import threading
import time

import pytest
import uvicorn

from conftest import unique_chat_handler, upstream_pair
from embed_service.app import create_app


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _run_cli(args, env, timeout=180):
    return subprocess.run(
        [sys.executable, "-m", "wander.cli", *args],
        capture_output=True,
        text=True,
        env=env,
        timeout=timeout,
    )


@pytest.fixture
def live_service(service_config):
    chat, image = upstream_pair(service_config, chat_fn=unique_chat_handler)
    app = create_app(service_config, chat=chat, image=image, token=None)
    port = _free_port()
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 15
    while not server.started:
        if time.monotonic() > deadline or not thread.is_alive():
            pytest.fail("service did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=15)


def test_two_generation_run_against_live_service(live_service, tmp_path):
    engine_config = {
        "initial_prompt": "a quiet harbor at dawn",
        "pool_capacity": 4,
        "initial_count": 4,
        "generations": 2,
        "mutations_per_generation": 3,
        "k": 1,
        "seed": 1,
        "provider": {
            "kind": "http",
            "base_url": live_service,
            "timeout_seconds": 30.0,
            "max_attempts": 3,
        },
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(engine_config), encoding="utf-8")
    run_dir = tmp_path / "run"

    env = dict(os.environ)
    env.pop("WANDER_PROVIDER_TOKEN", None)

    ran = _run_cli(["run", "--config", str(config_path), "--out", str(run_dir)], env)
    assert ran.returncode == 0, ran.stderr

    report = _run_cli(["report", str(run_dir), "--csv"], env)
    assert report.returncode == 0, report.stderr
    lines = report.stdout.strip().splitlines()
    assert len(lines) == 1 + engine_config["generations"] + 1  # header + baseline + per-gen
    header = lines[0].split(",")
    assert "vendi" in header and "cumulative_tokens" in header
