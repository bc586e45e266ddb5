"""Live status stream: newline-delimited JSON records broadcast over TCP.

Each subscriber gets its own bounded queue and sender thread. When a
subscriber falls behind and its queue fills, it is disconnected; publishing
never blocks.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import socketserver
import threading

log = logging.getLogger(__name__)

SUBSCRIBER_BUFFER = 4096
_CLOSE = object()


class _Subscriber:
    def __init__(self, sock: socket.socket, buffer: int):
        self.sock = sock
        self.queue: queue.Queue = queue.Queue(maxsize=buffer)
        self.alive = True

    def offer(self, line: str) -> bool:
        try:
            self.queue.put_nowait(line)
            return True
        except queue.Full:
            return False

    def run(self):
        try:
            while True:
                item = self.queue.get()
                if item is _CLOSE:
                    break
                self.sock.sendall(item.encode() + b"\n")
        except OSError:
            pass
        finally:
            self.alive = False
            try:
                self.sock.close()
            except OSError:
                pass


class StreamServer:
    """Accepts subscribers on ``(host, port)``; port 0 picks a free port.

    Binding happens in the constructor so a bad address fails before any case starts.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, metadata: dict | None = None,
                 buffer: int = SUBSCRIBER_BUFFER):
        self.metadata = {"type": "campaign", **(metadata or {})}
        self.buffer = buffer
        self._subs: list[_Subscriber] = []
        self._lock = threading.Lock()
        self.dropped = 0
        server = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                sub = _Subscriber(self.request, server.buffer)
                sub.offer(json.dumps(server.metadata, separators=(",", ":")))
                with server._lock:
                    server._subs.append(sub)
                sub.run()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.address = self._server.server_address
        self._thread = threading.Thread(target=self._server.serve_forever, name="stream-server", daemon=True)

    def start(self) -> "StreamServer":
        self._thread.start()
        return self

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return sum(1 for s in self._subs if s.alive)

    def publish(self, line: str):
        """Queue one record line for every live subscriber; slow ones are dropped."""
        with self._lock:
            keep = []
            for sub in self._subs:
                if not sub.alive:
                    continue
                if sub.offer(line):
                    keep.append(sub)
                else:
                    self.dropped += 1
                    log.info("dropping slow stream subscriber")
                    sub.alive = False
                    try:
                        sub.sock.shutdown(socket.SHUT_RDWR)
                    except OSError:
                        pass
            self._subs = keep

    def publish_record(self, record: dict):
        self.publish(json.dumps(record, separators=(",", ":")))

    def close(self):
        with self._lock:
            subs, self._subs = self._subs, []
        for sub in subs:
            try:
                sub.queue.put_nowait(_CLOSE)
            except queue.Full:
                try:
                    sub.sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
        if self._thread.is_alive():
            self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()
