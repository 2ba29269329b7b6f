"""TCP front end: per-connection sessions, command dispatch, scheduler.

Each connection is served by one thread that reads framed commands and
answers in order (pipelining works naturally). All commands funnel into
the engine, whose lock makes them totally ordered across connections.
A scheduler thread drives expiry ticks and periodic compaction.

Sessions must AUTH before anything except AUTH and INFO. Credentials
live in the config (``auth.<actor> = <secret>``) and are compared as
constant-time SHA-256 digests.
"""

import hmac
import logging
import socket
import threading

from .auditlog import QueryFilter
from .compliance import render_meta_line
from .config import ComplianceConfig, secret_digest
from .engine import Engine
from .errors import ArityError, GdprKvError, ProtocolError
from .model import RecordMeta
from .protocol import OK, Error, Status, encode_reply, read_command

log = logging.getLogger("gdprkv.server")


def _parse_kv(args: list[bytes], allowed: set[str]) -> dict[str, bytes]:
    out = {}
    for arg in args:
        name, sep, value = arg.partition(b"=")
        key = name.decode(errors="replace")
        if not sep or key not in allowed:
            raise ArityError(f"unexpected argument {key!r}")
        out[key] = value
    return out


def _tokens(raw: bytes | None) -> frozenset:
    if not raw:
        return frozenset()
    return frozenset(t for t in raw.decode().split(",") if t)


def _int_arg(raw: bytes, what: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ArityError(f"{what} wants an integer") from None


class Session:
    __slots__ = ("actor",)

    def __init__(self):
        self.actor: str | None = None


class Server:
    def __init__(self, engine: Engine, config: ComplianceConfig | None = None):
        self.engine = engine
        self.config = config or engine.config
        self._sock: socket.socket | None = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.port: int | None = None

    # -- lifecycle --------------------------------------------------------

    def start(self) -> int:
        """Bind, spawn the acceptor and scheduler, return the bound port."""
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((self.config.host, self.config.port))
        self._sock.listen(64)
        self.port = self._sock.getsockname()[1]
        acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        scheduler = threading.Thread(target=self._schedule_loop, daemon=True)
        self._threads = [acceptor, scheduler]
        acceptor.start()
        scheduler.start()
        log.info("listening on %s:%d", self.config.host, self.port)
        return self.port

    def stop(self) -> None:
        self._stop.set()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=5)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._sock.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_conn, args=(conn,), daemon=True)
            t.start()

    def _schedule_loop(self) -> None:
        tick_s = self.engine.config.expiry_tick_ms / 1000.0
        while not self._stop.wait(tick_s):
            try:
                self.engine.tick()
                self.engine.maybe_compact()
            except GdprKvError as exc:
                log.error("scheduler stopped: %s", exc)
                return

    def _serve_conn(self, conn: socket.socket) -> None:
        session = Session()
        reader = conn.makefile("rb")
        try:
            while not self._stop.is_set():
                try:
                    args = read_command(reader)
                except ProtocolError as exc:
                    conn.sendall(encode_reply(Error(exc.code, exc.message)))
                    return
                if args is None:
                    return
                reply = self.dispatch(session, args)
                conn.sendall(encode_reply(reply))
        except OSError:
            pass
        finally:
            reader.close()
            conn.close()

    # -- dispatch ----------------------------------------------------------

    def dispatch(self, session: Session, args: list[bytes]):
        name = args[0].decode(errors="replace").upper()
        handler = _COMMANDS.get(name)
        if handler is None:
            return Error("UNKNOWN_COMMAND", name)
        if session.actor is None and name not in ("AUTH", "INFO"):
            return Error("NOAUTH", "authenticate first")
        min_args, max_args, fn = handler
        n = len(args) - 1
        if n < min_args or (max_args is not None and n > max_args):
            return Error("ARITY", f"{name} takes {min_args}..{max_args or 'n'} arguments")
        try:
            return fn(self, session, args[1:])
        except GdprKvError as exc:
            return Error(exc.code, exc.message)

    # -- command handlers ----------------------------------------------------

    def _cmd_auth(self, session, args):
        actor = args[0].decode(errors="replace")
        supplied = secret_digest(args[1].decode(errors="replace"))
        expected = self.config.auth.get(actor)
        if expected is None or not hmac.compare_digest(supplied, expected):
            return Error("NOAUTH", "bad credentials")
        session.actor = actor
        return OK

    _PUT_KEYS = {"owner", "purpose", "purposes", "objections", "recipients",
                 "regions", "origin", "expiry"}

    def _cmd_put(self, session, args):
        kv = _parse_kv(args[2:], self._PUT_KEYS)
        if "owner" not in kv or "purpose" not in kv:
            raise ArityError("PUT needs owner= and purpose=")
        meta = RecordMeta(
            owner=kv["owner"].decode(errors="replace"),
            purposes=_tokens(kv.get("purposes")),
            objections=_tokens(kv.get("objections")),
            expiry=_int_arg(kv["expiry"], "expiry") if "expiry" in kv else None,
            recipients=_tokens(kv.get("recipients")),
            origin=kv.get("origin", b"direct").decode(errors="replace"),
            allowed_regions=_tokens(kv.get("regions")),
        )
        result = self.engine.put(args[0], args[1], meta, session.actor, kv["purpose"].decode(errors="replace"))
        return Status(result)

    def _purpose_arg(self, args):
        kv = _parse_kv(args, {"purpose"})
        if "purpose" not in kv:
            raise ArityError("purpose= is mandatory")
        return kv["purpose"].decode(errors="replace")

    def _cmd_get(self, session, args):
        purpose = self._purpose_arg(args[1:])
        value, meta = self.engine.get(args[0], session.actor, purpose)
        return [value, render_meta_line(meta).encode()]

    def _cmd_getmeta(self, session, args):
        purpose = self._purpose_arg(args[1:])
        meta, created_at = self.engine.getmeta(args[0], session.actor, purpose)
        return render_meta_line(meta, created_at).encode()

    def _cmd_del(self, session, args):
        return int(self.engine.delete(args[0], session.actor))

    def _cmd_ttlset(self, session, args):
        self.engine.set_ttl(args[0], _int_arg(args[1], "expiry"), session.actor)
        return OK

    def _cmd_ttlclear(self, session, args):
        self.engine.clear_ttl(args[0], session.actor)
        return OK

    def _cmd_object(self, session, args):
        subject = args[0].decode(errors="replace")
        purpose = args[1].decode(errors="replace")
        return self.engine.object_subject(subject, purpose, session.actor)

    _GRANT_KEYS = {"ops", "purposes", "valid_until"}

    def _cmd_grant(self, session, args):
        kv = _parse_kv(args[1:], self._GRANT_KEYS)
        valid_until = _int_arg(kv["valid_until"], "valid_until") if "valid_until" in kv else None
        self.engine.grant(
            args[0].decode(errors="replace"),
            _tokens(kv.get("ops")),
            _tokens(kv.get("purposes")),
            valid_until,
            session.actor,
        )
        return OK

    def _cmd_revoke(self, session, args):
        self.engine.revoke(args[0].decode(errors="replace"), session.actor)
        return OK

    def _cmd_subjaccess(self, session, args):
        from .compliance import render_report

        report = self.engine.subject_access(args[0].decode(errors="replace"), session.actor)
        return render_report(report)

    def _cmd_subjexport(self, session, args):
        return self.engine.export_portable(args[0].decode(errors="replace"), session.actor)

    def _cmd_subjforget(self, session, args):
        return self.engine.forget_subject(args[0].decode(errors="replace"), session.actor)

    _AUDITQ_KEYS = {"subject", "key", "actor", "since", "until"}

    def _cmd_auditq(self, session, args):
        kv = _parse_kv(args, self._AUDITQ_KEYS)
        flt = QueryFilter(
            subject=kv["subject"].decode(errors="replace") if "subject" in kv else None,
            key=kv.get("key"),
            actor=kv["actor"].decode(errors="replace") if "actor" in kv else None,
            since_us=_int_arg(kv["since"], "since") if "since" in kv else None,
            until_us=_int_arg(kv["until"], "until") if "until" in kv else None,
        )
        entries = self.engine.breach_trail(flt, session.actor)
        return [e.describe().encode() for e in entries]

    def _cmd_compact(self, session, args):
        self.engine.compact(session.actor)
        return OK

    def _cmd_info(self, session, args):
        info = self.engine.info()
        text = "".join(f"{k}={v}\n" for k, v in info.items())
        return text.encode()


_COMMANDS = {
    "AUTH": (2, 2, Server._cmd_auth),
    "PUT": (4, 10, Server._cmd_put),
    "GET": (2, 2, Server._cmd_get),
    "GETMETA": (2, 2, Server._cmd_getmeta),
    "DEL": (1, 1, Server._cmd_del),
    "TTLSET": (2, 2, Server._cmd_ttlset),
    "TTLCLEAR": (1, 1, Server._cmd_ttlclear),
    "OBJECT": (2, 2, Server._cmd_object),
    "GRANT": (1, 4, Server._cmd_grant),
    "REVOKE": (1, 1, Server._cmd_revoke),
    "SUBJACCESS": (1, 1, Server._cmd_subjaccess),
    "SUBJEXPORT": (1, 1, Server._cmd_subjexport),
    "SUBJFORGET": (1, 1, Server._cmd_subjforget),
    "AUDITQ": (0, 5, Server._cmd_auditq),
    "COMPACT": (0, 0, Server._cmd_compact),
    "INFO": (0, 0, Server._cmd_info),
}
