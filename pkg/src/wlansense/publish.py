"""Newline-delimited JSON event publisher over TCP.

Delivery is at-most-once: an event whose write fails is dropped, never
resent. After a disconnect the publisher reconnects with exponential backoff
(250 ms doubling up to 8 s). Every disconnect opens a gap record
``{"after_t", "resumed_t", "dropped"}`` in the report: the last event
delivered before it, the first one delivered after it, and how many events
were lost in between.
"""

import logging
import select
import socket
import sys
import time
from dataclasses import dataclass, field

from .exceptions import ConfigurationError, DeliveryError
from .formats import dumps, to_record

logger = logging.getLogger(__name__)

BACKOFF_BASE_S = 0.25
BACKOFF_CAP_S = 8.0


@dataclass
class DeliveryReport:
    delivered: int = 0
    dropped: int = 0
    reconnects: int = 0
    gaps: list = field(default_factory=list)

    def to_dict(self):
        return {"delivered": self.delivered, "dropped": self.dropped,
                "reconnects": self.reconnects, "gaps": list(self.gaps)}


def parse_endpoint(endpoint):
    host, _, port = str(endpoint).rpartition(":")
    if not host or not port.isdigit():
        raise ConfigurationError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


def backoff_delays(max_retries, base=BACKOFF_BASE_S, cap=BACKOFF_CAP_S):
    return [min(base * 2 ** k, cap) for k in range(max_retries)]


def _peer_closed(sock):
    # The sink never talks back, so readability means EOF or a reset.
    try:
        readable, _, _ = select.select([sock], [], [], 0)
        if not readable:
            return False
        return sock.recv(4096) == b""
    except OSError:
        return True


class EventPublisher:
    """Stateful TCP client; use as a context manager or call :meth:`close`."""

    def __init__(self, endpoint, max_retries=6, connect_timeout=2.0, sleep=time.sleep,
                 base_delay=BACKOFF_BASE_S, max_delay=BACKOFF_CAP_S):
        self.host, self.port = parse_endpoint(endpoint)
        self.max_retries = max_retries
        self.connect_timeout = connect_timeout
        self.sleep = sleep
        self.delays = backoff_delays(max_retries, base_delay, max_delay)
        self.report = DeliveryReport()
        self._sock = None
        self._gap = None
        self._last_t = None

    def _connect(self):
        last = None
        for attempt, delay in enumerate([0.0] + self.delays):
            if delay:
                self.sleep(delay)
            try:
                sock = socket.create_connection((self.host, self.port), timeout=self.connect_timeout)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._sock = sock
                return
            except OSError as exc:
                last = exc
                logger.debug("connect attempt %d to %s:%d failed: %s", attempt, self.host, self.port, exc)
        raise DeliveryError(f"cannot reach {self.host}:{self.port}: {last}",
                            dropped=self.report.dropped, report=self.report)

    def _open_gap(self):
        if self._gap is None:
            self._gap = {"after_t": self._last_t, "resumed_t": None, "dropped": 0}
            self.report.gaps.append(self._gap)

    def _drop(self):
        self.report.dropped += 1
        self._open_gap()
        self._gap["dropped"] += 1

    def send(self, event):
        record = to_record(event)
        payload = (dumps(record) + "\n").encode()
        event_t = record.get("t") if isinstance(record, dict) else None
        if self._sock is not None and _peer_closed(self._sock):
            logger.warning("peer closed the connection; reconnecting")
            self._open_gap()
            self._reset()
        if self._sock is None:
            try:
                self._connect()
            except DeliveryError:
                self._drop()
                raise DeliveryError(f"cannot reach {self.host}:{self.port}",
                                    dropped=self.report.dropped, report=self.report) from None
            if self.report.delivered or self.report.dropped:
                self.report.reconnects += 1
        try:
            self._sock.sendall(payload)
        except OSError as exc:
            logger.warning("send failed (%s); dropping event and reconnecting", exc)
            self._drop()
            self._reset()
            return False
        self.report.delivered += 1
        self._last_t = event_t
        if self._gap is not None:
            self._gap["resumed_t"] = event_t
            self._gap = None
        return True

    def _reset(self):
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def close(self):
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass
        self._reset()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def publish_events(endpoint, events, dry_run=False, out=None, **kwargs):
    """Publish events as JSON lines; returns a :class:`DeliveryReport`.

    ``dry_run`` writes the lines to ``out`` (standard output by default)
    instead of opening a connection.
    """
    if dry_run:
        out = out or sys.stdout
        report = DeliveryReport()
        for event in events:
            out.write(dumps(to_record(event)) + "\n")
            report.delivered += 1
        out.flush()
        return report
    with EventPublisher(endpoint, **kwargs) as pub:
        for event in events:
            pub.send(event)
        return pub.report
