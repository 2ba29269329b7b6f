"""gdprkv: a key-value store built for data-protection compliance.

Records carry purpose, objection, retention, disclosure, and residency
metadata; every interaction lands in a CRC-framed, replayable audit log
whose durability, erasure strategy, compaction cadence, and at-rest
cipher are configuration, spanning the strict-to-eventual compliance
range.
"""

from .auditlog import AuditLog, FsyncPolicy, QueryFilter, verify
from .clock import ManualClock, system_clock
from .config import ComplianceConfig, load_config, parse_config
from .engine import Engine
from .errors import GdprKvError
from .expiry import LazyParams, LazySimulator, simulate_lazy
from .model import AclGrant, Record, RecordMeta, SubjectReport
from .replay import replay
from .server import Server
from .store import Store

__version__ = "0.1.0"

__all__ = [
    "AclGrant",
    "AuditLog",
    "ComplianceConfig",
    "Engine",
    "FsyncPolicy",
    "GdprKvError",
    "LazyParams",
    "LazySimulator",
    "ManualClock",
    "QueryFilter",
    "Record",
    "RecordMeta",
    "Server",
    "Store",
    "SubjectReport",
    "__version__",
    "load_config",
    "parse_config",
    "replay",
    "simulate_lazy",
    "system_clock",
    "verify",
]
