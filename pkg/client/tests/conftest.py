import socket
import threading
import time

import pytest
import uvicorn

from hopaas.api import create_app
from hopaas.storage import Storage

ADMIN_KEY = "client-admin-key"
WORKER_SECRET = "client-worker-secret"


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class LiveServer:
    def __init__(self, data_dir):
        self.port = free_port()
        self.store = Storage(data_dir)
        self.store._insert_token("w1", WORKER_SECRET, "worker", 24 * 3600)
        config = uvicorn.Config(create_app(self.store, admin_key=ADMIN_KEY),
                                host="127.0.0.1", port=self.port, log_level="warning")
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    @property
    def url(self):
        return f"http://127.0.0.1:{self.port}"

    def start(self):
        self._thread.start()
        deadline = time.time() + 10
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        return self

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=10)
        self.store.close()


@pytest.fixture
def live_server(tmp_path):
    server = LiveServer(tmp_path / "data").start()
    yield server
    server.stop()
