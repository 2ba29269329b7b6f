"""Subject-level views: access reports and the portability format.

The export stream is newline-delimited text, one record per line in
ascending key order, with tab-separated fields in fixed order:

    key(b64)  value(b64)  owner  purposes(csv)  objections(csv)
    expiry_us|-  origin  recipients(csv)  created_at

Token lists are comma-joined in sorted order, so exporting the same
state twice yields byte-identical streams.
"""

import base64

from .errors import BadMeta
from .model import Record, RecordMeta, SubjectReport, SubjectReportEntry
from .store import Store


def build_subject_report(store: Store, subject: str, now_us: int) -> SubjectReport:
    report = SubjectReport(subject=subject, generated_at=now_us)
    for key in store.keys_by_owner(subject, now_us):
        rec = store.records[key]
        report.entries.append(
            SubjectReportEntry(
                key=key,
                purposes=tuple(sorted(rec.purposes)),
                objections=tuple(sorted(rec.objections)),
                recipients=tuple(sorted(rec.recipients)),
                origin=rec.origin,
                storage_period=rec.storage_period(),
                created_at=rec.created_at,
            )
        )
    return report


def render_report(report: SubjectReport) -> bytes:
    lines = [
        f"subject={report.subject}\tgenerated_at={report.generated_at}\trecords={len(report.entries)}"
    ]
    for e in report.entries:
        lines.append(
            "\t".join(
                (
                    f"key={base64.b64encode(e.key).decode()}",
                    f"purposes={','.join(e.purposes)}",
                    f"objections={','.join(e.objections)}",
                    f"recipients={','.join(e.recipients)}",
                    f"origin={e.origin}",
                    f"storage_period={e.storage_period}",
                    f"created_at={e.created_at}",
                )
            )
        )
    return ("\n".join(lines) + "\n").encode()


def render_meta_line(meta: RecordMeta, created_at: int | None = None) -> str:
    expiry = str(meta.expiry) if meta.expiry is not None else "-"
    return "\t".join(
        (
            f"owner={meta.owner}",
            f"purposes={','.join(sorted(meta.purposes))}",
            f"objections={','.join(sorted(meta.objections))}",
            f"expiry={expiry}",
            f"origin={meta.origin}",
            f"recipients={','.join(sorted(meta.recipients))}",
            f"regions={','.join(sorted(meta.allowed_regions))}",
            f"created_at={created_at if created_at is not None else '-'}",
        )
    )


def export_records(store: Store, subject: str, now_us: int) -> bytes:
    lines = []
    for key in store.keys_by_owner(subject, now_us):
        rec = store.records[key]
        lines.append(
            "\t".join(
                (
                    base64.b64encode(rec.key).decode(),
                    base64.b64encode(rec.value).decode(),
                    rec.owner,
                    ",".join(sorted(rec.purposes)),
                    ",".join(sorted(rec.objections)),
                    str(rec.expiry) if rec.expiry is not None else "-",
                    rec.origin,
                    ",".join(sorted(rec.recipients)),
                    str(rec.created_at),
                )
            )
        )
    return ("\n".join(lines) + "\n").encode() if lines else b""


def _csv_set(s: str) -> frozenset:
    return frozenset(s.split(",")) if s else frozenset()


def parse_export(data: bytes) -> list[tuple[bytes, bytes, RecordMeta, int]]:
    """Inverse of export_records: (key, value, meta, created_at) tuples."""
    out = []
    for lineno, line in enumerate(data.decode().splitlines(), 1):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 9:
            raise BadMeta(f"export line {lineno}: expected 9 fields, got {len(fields)}")
        key_b64, value_b64, owner, purposes, objections, expiry, origin, recipients, created = fields
        meta = RecordMeta(
            owner=owner,
            purposes=_csv_set(purposes),
            objections=_csv_set(objections),
            expiry=None if expiry == "-" else int(expiry),
            recipients=_csv_set(recipients),
            origin=origin,
        )
        out.append((base64.b64decode(key_b64), base64.b64decode(value_b64), meta, int(created)))
    return out
