"""Deployment configuration: the knobs that place an instance on the
real-time vs eventual spectrum (durability, erasure, compaction, cipher)
plus server plumbing.

Config files are plain ``key = value`` lines; ``#`` starts a comment.
``auth.<actor> = <secret>`` adds a connection credential, ``admin``
names comma-separated actors that boot with an admin grant.
"""

import hashlib
from dataclasses import dataclass, field, replace

from .auditlog import FsyncPolicy
from .errors import ConfigError
from .expiry import LazyParams, STRATEGIES

DEFAULT_PORT = 7979


@dataclass(frozen=True)
class ComplianceConfig:
    fsync_mode: str = "every"  # always | every | none
    fsync_interval_ms: int = 1000
    expiry_strategy: str = "eager"  # eager | lazy
    expiry_tick_ms: int = 100
    lazy_sample_size: int = 20
    lazy_repeat_threshold: int = 5
    compaction_interval_s: int = 3600
    forget_compaction: str = "immediate"  # immediate | periodic
    server_region: str = "local"
    cipher: str = "none"
    key_file: str | None = None
    log_file: str = "gdprkv.aoflog"
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    admins: tuple = ()
    auth: dict = field(default_factory=dict)  # actor -> sha256(secret)

    def fsync_policy(self) -> FsyncPolicy:
        return FsyncPolicy(self.fsync_mode, self.fsync_interval_ms)

    def lazy_params(self) -> LazyParams:
        return LazyParams(self.expiry_tick_ms, self.lazy_sample_size, self.lazy_repeat_threshold)

    def validate(self) -> "ComplianceConfig":
        if self.expiry_strategy not in STRATEGIES:
            raise ConfigError(f"unknown expiry_strategy: {self.expiry_strategy}")
        if self.forget_compaction not in ("immediate", "periodic"):
            raise ConfigError(f"unknown forget_compaction: {self.forget_compaction}")
        try:
            self.fsync_policy()
            self.lazy_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


def secret_digest(secret: str) -> bytes:
    return hashlib.sha256(secret.encode()).digest()


_INT_KEYS = {
    "fsync_interval_ms",
    "expiry_tick_ms",
    "lazy_sample_size",
    "lazy_repeat_threshold",
    "compaction_interval_s",
    "port",
}
_STR_KEYS = {
    "fsync_mode",
    "expiry_strategy",
    "forget_compaction",
    "server_region",
    "cipher",
    "key_file",
    "log_file",
    "host",
}


def parse_config(text: str) -> ComplianceConfig:
    cfg = ComplianceConfig()
    auth: dict[str, bytes] = {}
    admins: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("auth."):
            actor = key[len("auth."):]
            if not actor:
                raise ConfigError(f"line {lineno}: auth entry without actor")
            auth[actor] = secret_digest(value)
        elif key == "admin":
            admins.extend(a.strip() for a in value.split(",") if a.strip())
        elif key in _INT_KEYS:
            try:
                cfg = replace(cfg, **{key: int(value)})
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} wants an integer") from None
        elif key in _STR_KEYS:
            cfg = replace(cfg, **{key: value})
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    cfg = replace(cfg, auth=auth, admins=tuple(admins))
    return cfg.validate()


def load_config(path: str) -> ComplianceConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())
