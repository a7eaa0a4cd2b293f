from __future__ import annotations

import socket
from pathlib import Path

import pytest

from ecabot.environment import load_environment

GOLDEN_DIR = Path(__file__).parent / "golden"

_REAL_CONNECT = socket.socket.connect


def _loopback_only_connect(self, address, *args, **kwargs):
    if self.family != socket.AF_UNIX:
        host = address[0] if isinstance(address, tuple) else address
        if isinstance(host, bytes):
            host = host.decode("ascii", "replace")
        if not (host.startswith("127.") or host in ("::1", "localhost")):
            raise AssertionError(f"external network access attempted: {address!r}")
    return _REAL_CONNECT(self, address, *args, **kwargs)


@pytest.fixture(autouse=True, scope="session")
def forbid_external_network():
    """The whole suite must pass with loopback as the only reachable network."""
    socket.socket.connect = _loopback_only_connect
    yield
    socket.socket.connect = _REAL_CONNECT


@pytest.fixture
def vr_env():
    return load_environment("vr-museum")


@pytest.fixture
def ar_env():
    return load_environment("ar-home")


@pytest.fixture
def golden_dir():
    return GOLDEN_DIR
