"""Small synchronous client used by the CLI and the benchmark."""

import socket

from .errors import ConnectError, error_for
from .protocol import Error, Status, encode_command, read_reply


def _as_bytes(arg) -> bytes:
    if isinstance(arg, bytes):
        return arg
    if isinstance(arg, str):
        return arg.encode()
    return str(arg).encode()


class Client:
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectError(f"cannot reach {host}:{port}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._reader = self._sock.makefile("rb")

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def execute(self, *args):
        """Send one command; return the decoded reply or raise the typed
        error an -ERR reply names."""
        self._sock.sendall(encode_command([_as_bytes(a) for a in args]))
        reply = read_reply(self._reader)
        if isinstance(reply, Error):
            raise error_for(reply.code, reply.message)
        if isinstance(reply, Status):
            return reply.text
        return reply

    # convenience wrappers ------------------------------------------------

    def auth(self, actor: str, secret: str) -> None:
        self.execute("AUTH", actor, secret)

    def put(self, key, value, owner, purpose, **meta) -> str:
        args = ["PUT", key, value, f"owner={owner}", f"purpose={purpose}"]
        for name, val in meta.items():
            args.append(f"{name}={val}")
        return self.execute(*args)

    def get(self, key, purpose):
        value, meta_line = self.execute("GET", key, f"purpose={purpose}")
        return value, meta_line

    def delete(self, key) -> bool:
        return bool(self.execute("DEL", key))

    def info(self) -> dict:
        text = self.execute("INFO").decode()
        out = {}
        for line in text.splitlines():
            k, _, v = line.partition("=")
            out[k] = v
        return out
