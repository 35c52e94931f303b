import socket
import time

import pytest

import rowe
from rowe.endpoint import EndpointConfig


def free_port() -> int:
    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    s.bind(("", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def wait_connected(*endpoints, timeout=5.0) -> None:
    deadline = time.monotonic() + timeout
    for ep in endpoints:
        while ep.state is not rowe.EndpointState.CONNECTED:
            if time.monotonic() > deadline:
                raise TimeoutError(f"{ep.role} not connected within {timeout}s")
            time.sleep(0.005)


@pytest.fixture(params=["local-alpha", "remote-alpha"])
def pair(request):
    """A connected endpoint pair (alpha, beta), run in both role orientations.

    Every test written against this fixture therefore has to hold regardless
    of which side listened and which side dialed.
    """
    port = free_port()
    server = rowe.open_local_endpoint(port)
    client = rowe.open_remote_endpoint("127.0.0.1", port)
    wait_connected(server, client)
    if request.param == "local-alpha":
        alpha, beta = server, client
    else:
        alpha, beta = client, server
    yield alpha, beta
    client.close()
    server.close()


@pytest.fixture
def small_outgoing_config():
    return EndpointConfig(outgoing_capacity=4)
