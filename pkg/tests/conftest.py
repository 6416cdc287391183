import socket
import threading

import numpy as np
import pytest

from wlansense.channel import ArrayGeometry, BeamPattern, Path, PathSet, synthesize_frame

# Angles that sit exactly on the 0.5 degree grid, away from the edges.
GRID_ANGLES = np.arange(-80.0, 80.5, 0.5)


@pytest.fixture
def geometry():
    return ArrayGeometry()


@pytest.fixture
def identity():
    return BeamPattern.identity(4)


def two_path_window(angles, gains=(1.0, 1.0), noise_power=0.0, seed=0, num_frames=7,
                    num_subcarriers=53, coherent=False):
    """Frames of a static two-path scene with random per-subcarrier path phases."""
    rng = np.random.default_rng(seed)
    geom = ArrayGeometry()
    frames = []
    for t in range(num_frames):
        g1 = np.exp(2j * np.pi * rng.random(num_subcarriers))
        g2 = 0.8 * g1 if coherent else np.exp(2j * np.pi * rng.random(num_subcarriers))
        paths = PathSet((Path(angles[0], gains[0] * g1), Path(angles[1], gains[1] * g2)))
        frames.append(synthesize_frame(geom, BeamPattern.identity(4), paths, noise_power, t, rng=rng))
    return frames


class Sink:
    """Loopback TCP sink. With ``close_after`` the first connection is closed
    by the sink after that many lines; later connections are read to EOF."""

    def __init__(self, close_after=None):
        self.server = socket.create_server(("127.0.0.1", 0))
        self.port = self.server.getsockname()[1]
        self.close_after = close_after
        self.connections = []
        self.first_closed = threading.Event()
        self.stopping = threading.Event()
        self.server.settimeout(0.05)
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def _run(self):
        while True:
            try:
                conn, _ = self.server.accept()
            except socket.timeout:
                # Only give up once no connection is waiting in the backlog.
                if self.stopping.is_set():
                    return
                continue
            except OSError:
                return
            conn.settimeout(None)
            lines = []
            self.connections.append(lines)
            limit = self.close_after if len(self.connections) == 1 else None
            with conn, conn.makefile("rb") as fh:
                for raw in fh:
                    lines.append(raw.decode().rstrip("\n"))
                    if limit and len(lines) >= limit:
                        break
            if limit:
                self.first_closed.set()

    def stop(self):
        self.stopping.set()
        self.thread.join(5)
        self.server.close()

    @property
    def endpoint(self):
        return f"127.0.0.1:{self.port}"


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Remember one acceptance outcome; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
