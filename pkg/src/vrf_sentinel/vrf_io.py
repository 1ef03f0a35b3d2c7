"""Snapshot parsing, temporal diffing, and change-record CSV round trips."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import re
from dataclasses import dataclass, replace

from .errors import FileParseError, IntegrityError, SchemaError, VrfError
from .records import (
    ADDRESS_FIELDS,
    NAME_FIELDS,
    BallotKind,
    ChangeRecord,
    ChangeType,
    FieldDelta,
    Snapshot,
    VoteEvent,
    VoterRecord,
    VoterStatus,
    normalize_text,
)

logger = logging.getLogger(__name__)

# Logical fields a schema config may map. voter_id / locale / status must be
# present; the rest default to empty when unmapped.
REQUIRED_FIELDS = ("voter_id", "locale", "status")
OPTIONAL_FIELDS = (
    "first_name",
    "middle_name",
    "last_name",
    "house_num",
    "street_name",
    "unit",
    "city",
    "zip",
    "party",
    "gender",
    "birth_date",
    "registration_date",
    "last_update_date",
    "vote_history",
)
LOGICAL_FIELDS = REQUIRED_FIELDS + OPTIONAL_FIELDS

_DATE_IN_NAME = re.compile(r"(\d{4}-\d{2}-\d{2})")


@dataclass(frozen=True)
class SnapshotSchema:
    """Maps logical voter fields to the columns of one snapshot file."""

    columns: dict[str, str]
    delimiter: str = ","
    snapshot_date: dt.date | None = None

    def __post_init__(self) -> None:
        missing = [f for f in REQUIRED_FIELDS if f not in self.columns]
        if missing:
            raise SchemaError(f"schema does not map required fields: {', '.join(missing)}")
        unknown = [f for f in self.columns if f not in LOGICAL_FIELDS]
        if unknown:
            raise SchemaError(f"schema maps unknown logical fields: {', '.join(unknown)}")


def identity_schema(snapshot_date: dt.date | None = None) -> SnapshotSchema:
    """Schema where every column is named after its logical field."""
    return SnapshotSchema(
        columns={f: f for f in LOGICAL_FIELDS}, snapshot_date=snapshot_date
    )


def load_schema(path: str) -> SnapshotSchema:
    """Read a key-value schema config (one `logical = column` pair per line).

    Lines starting with '#' are comments. Special keys: `delimiter` and
    `snapshot_date` (ISO-8601).
    """
    columns: dict[str, str] = {}
    delimiter = ","
    snapshot_date = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'logical = column', got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "delimiter":
                delimiter = value
            elif key == "snapshot_date":
                snapshot_date = _parse_date(value, f"{path}:{lineno}")
            else:
                columns[key] = value
    return SnapshotSchema(columns=columns, delimiter=delimiter, snapshot_date=snapshot_date)


def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise FileParseError(f"{where}: bad date {text!r}") from exc


@dataclass(frozen=True)
class RowIssue:
    line: int
    field: str
    message: str


_VOTE_TOKEN_CACHE: dict[str, VoteEvent] = {}


def _parse_vote_history(cell: str, where: str) -> tuple[VoteEvent, ...]:
    """Decode `election_id|date|kind|party` tuples joined by ';'.

    Tokens repeat heavily across voters (same elections), so parsed events
    are memoized; VoteEvent is immutable and safe to share.
    """
    cell = cell.strip()
    if not cell:
        return ()
    events = []
    for token in cell.split(";"):
        cached = _VOTE_TOKEN_CACHE.get(token)
        if cached is not None:
            events.append(cached)
            continue
        parts = token.split("|")
        if len(parts) != 4:
            raise FileParseError(f"{where}: bad vote-history token {token!r}")
        election_id, date_text, kind_text, party = (p.strip() for p in parts)
        try:
            kind = BallotKind(kind_text)
        except ValueError as exc:
            raise FileParseError(f"{where}: unknown ballot kind {kind_text!r}") from exc
        event = VoteEvent(
            election_id=election_id,
            election_date=_parse_date(date_text, where),
            kind=kind,
            party_ballot=party or None,
        )
        if len(_VOTE_TOKEN_CACHE) < 1_000_000:
            _VOTE_TOKEN_CACHE[token] = event
        events.append(event)
    return tuple(events)


def format_vote_history(history: tuple[VoteEvent, ...]) -> str:
    return ";".join(
        f"{ev.election_id}|{ev.election_date.isoformat()}|{ev.kind.value}|{ev.party_ballot or ''}"
        for ev in history
    )


def parse_snapshot(
    path: str,
    schema: SnapshotSchema,
    snapshot_date: dt.date | None = None,
    issues: list[RowIssue] | None = None,
) -> Snapshot:
    """Parse a delimited snapshot file into a Snapshot.

    Rows whose required fields cannot be parsed are appended to `issues`
    (and logged) rather than silently dropped. Duplicate voter ids abort
    with an IntegrityError naming the offenders.
    """
    date = snapshot_date or schema.snapshot_date or _date_from_filename(path)
    if issues is None:
        issues = []
    records: dict[str, VoterRecord] = {}
    duplicates: list[str] = []
    status_map = {s.value: s for s in VoterStatus}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        header = next(reader, None) or []
        for logical in REQUIRED_FIELDS:
            if schema.columns[logical] not in header:
                raise SchemaError(
                    f"{path}: missing required column {schema.columns[logical]!r} "
                    f"(logical field {logical!r})"
                )
        position = {name: i for i, name in enumerate(header)}
        # positional index per logical field, -1 when unmapped
        idx = {
            logical: position.get(name, -1)
            for logical, name in schema.columns.items()
        }
        col = [idx.get(f, -1) for f in LOGICAL_FIELDS]
        (i_vid, i_loc, i_status, i_first, i_middle, i_last, i_house, i_street,
         i_unit, i_city, i_zip, i_party, i_gender, i_birth, i_reg, i_upd,
         i_hist) = col

        def cell(row: list[str], i: int) -> str:
            return row[i].strip() if 0 <= i < len(row) else ""

        for lineno, row in enumerate(reader, start=2):
            voter_id = cell(row, i_vid)
            if not voter_id:
                issues.append(RowIssue(lineno, "voter_id", "empty voter_id"))
                continue
            locale = cell(row, i_loc)
            if not locale:
                issues.append(RowIssue(lineno, "locale", "empty locale"))
                continue
            status = status_map.get(cell(row, i_status).casefold())
            if status is None:
                issues.append(
                    RowIssue(lineno, "status", f"unknown status {cell(row, i_status)!r}")
                )
                continue
            where = f"{path}:{lineno}"
            try:
                record = VoterRecord(
                    voter_id=voter_id,
                    locale=locale,
                    first_name=cell(row, i_first),
                    middle_name=cell(row, i_middle),
                    last_name=cell(row, i_last),
                    address=(
                        cell(row, i_house),
                        cell(row, i_street),
                        cell(row, i_unit),
                        cell(row, i_city),
                        cell(row, i_zip),
                    ),
                    status=status,
                    party=cell(row, i_party),
                    gender=cell(row, i_gender),
                    birth_date=_opt_date(cell(row, i_birth), where),
                    registration_date=_opt_date(cell(row, i_reg), where),
                    last_update_date=_opt_date(cell(row, i_upd), where),
                    vote_history=_parse_vote_history(cell(row, i_hist), where),
                )
            except (FileParseError, IntegrityError) as exc:
                issues.append(RowIssue(lineno, "-", str(exc)))
                continue
            if voter_id in records:
                duplicates.append(voter_id)
                continue
            records[voter_id] = record

    if duplicates:
        raise IntegrityError(
            f"{path}: duplicate voter_id values: {', '.join(sorted(set(duplicates)))}"
        )
    for issue in issues:
        logger.warning("%s:%d %s: %s", path, issue.line, issue.field, issue.message)
    return Snapshot(snapshot_date=date, records=records)


def _opt_date(cell: str, where: str) -> dt.date | None:
    return _parse_date(cell, where) if cell else None


def _date_from_filename(path: str) -> dt.date:
    match = _DATE_IN_NAME.search(path)
    if not match:
        raise SchemaError(
            f"{path}: snapshot date not given and no ISO date found in filename"
        )
    return dt.date.fromisoformat(match.group(1))


def write_snapshot(snapshot: Snapshot, path: str) -> None:
    """Write a snapshot in the identity-schema column layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOGICAL_FIELDS)
        for voter_id in sorted(snapshot.records):
            rec = snapshot.records[voter_id]
            addr = rec.address_map()
            writer.writerow(
                [
                    rec.voter_id,
                    rec.locale,
                    rec.status.value,
                    rec.first_name,
                    rec.middle_name,
                    rec.last_name,
                    addr["house_num"],
                    addr["street_name"],
                    addr["unit"],
                    addr["city"],
                    addr["zip"],
                    rec.party,
                    rec.gender,
                    rec.birth_date.isoformat() if rec.birth_date else "",
                    rec.registration_date.isoformat() if rec.registration_date else "",
                    rec.last_update_date.isoformat() if rec.last_update_date else "",
                    format_vote_history(rec.vote_history),
                ]
            )


# --- diffing ---------------------------------------------------------------

_STATUS_TRANSITIONS = {
    (VoterStatus.ACTIVE, VoterStatus.INACTIVE): ChangeType.DEACTIVATION,
    (VoterStatus.INACTIVE, VoterStatus.ACTIVE): ChangeType.ACTIVATION,
}
# pending is operationally "not yet active"; transitions out of it are
# classified like their destination unless strict mode is on.
_EXTENDED_TRANSITIONS = {
    (VoterStatus.PENDING, VoterStatus.ACTIVE): ChangeType.ACTIVATION,
    (VoterStatus.PENDING, VoterStatus.INACTIVE): ChangeType.DEACTIVATION,
}


def _registration_deltas(rec: VoterRecord) -> tuple[FieldDelta, ...]:
    deltas = [FieldDelta(f, "", getattr(rec, f)) for f in NAME_FIELDS]
    deltas += [FieldDelta(f, "", v) for f, v in rec.address_map().items()]
    deltas.append(FieldDelta("status", "", rec.status.value))
    deltas.append(FieldDelta("party", "", rec.party))
    return tuple(deltas)


def diff_snapshots(
    anterior: Snapshot,
    posterior: Snapshot,
    strict_status: bool = False,
) -> list[ChangeRecord]:
    """Compute typed change records between two temporally adjacent snapshots.

    A voter may emit several records of different types in one diff. Output
    is sorted by (voter_id, change_type) and is a pure function of the
    inputs. Field comparisons ignore surrounding whitespace and case.
    """
    if anterior.snapshot_date >= posterior.snapshot_date:
        raise VrfError(
            f"anterior snapshot date {anterior.snapshot_date} must precede "
            f"posterior {posterior.snapshot_date}"
        )
    transitions = dict(_STATUS_TRANSITIONS)
    if not strict_status:
        transitions.update(_EXTENDED_TRANSITIONS)

    dates = {"anterior_date": anterior.snapshot_date, "posterior_date": posterior.snapshot_date}
    changes: list[ChangeRecord] = []
    ante, post = anterior.records, posterior.records

    for voter_id, old in ante.items():
        if voter_id not in post:
            changes.append(
                ChangeRecord(
                    voter_id=voter_id,
                    locale=old.locale,
                    change_type=ChangeType.REMOVAL,
                    **dates,
                )
            )

    for voter_id, new in post.items():
        old = ante.get(voter_id)
        if old is None:
            changes.append(
                ChangeRecord(
                    voter_id=voter_id,
                    locale=new.locale,
                    change_type=ChangeType.REGISTRATION,
                    field_deltas=_registration_deltas(new),
                    **dates,
                )
            )
            continue

        if old.name_key() != new.name_key():
            deltas = tuple(
                FieldDelta(f, getattr(old, f), getattr(new, f))
                for f in NAME_FIELDS
                if normalize_text(getattr(old, f)) != normalize_text(getattr(new, f))
            )
            changes.append(
                ChangeRecord(
                    voter_id=voter_id,
                    locale=new.locale,
                    change_type=ChangeType.NAME,
                    field_deltas=deltas,
                    **dates,
                )
            )
        if old.address_key() != new.address_key():
            old_addr, new_addr = old.address_map(), new.address_map()
            deltas = tuple(
                FieldDelta(f, old_addr[f], new_addr[f])
                for f in ADDRESS_FIELDS
                if normalize_text(old_addr[f]) != normalize_text(new_addr[f])
            )
            changes.append(
                ChangeRecord(
                    voter_id=voter_id,
                    locale=new.locale,
                    change_type=ChangeType.ADDRESS,
                    field_deltas=deltas,
                    **dates,
                )
            )
        if old.party_key() != new.party_key():
            changes.append(
                ChangeRecord(
                    voter_id=voter_id,
                    locale=new.locale,
                    change_type=ChangeType.PARTY,
                    field_deltas=(FieldDelta("party", old.party, new.party),),
                    **dates,
                )
            )
        status_change = transitions.get((old.status, new.status))
        if status_change is not None:
            changes.append(
                ChangeRecord(
                    voter_id=voter_id,
                    locale=new.locale,
                    change_type=status_change,
                    field_deltas=(FieldDelta("status", old.status.value, new.status.value),),
                    **dates,
                )
            )

    changes.sort(key=ChangeRecord.sort_key)
    return changes


# --- change-record CSV -----------------------------------------------------

CHANGE_CSV_COLUMNS = (
    "voter_id",
    "locale",
    "change_type",
    "anterior_date",
    "posterior_date",
    "field_deltas",
)


def changes_to_csv(changes: list[ChangeRecord], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_changes(changes, fh)


def write_changes(changes: list[ChangeRecord], fh: io.TextIOBase) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CHANGE_CSV_COLUMNS)
    for ch in changes:
        writer.writerow(
            [
                ch.voter_id,
                ch.locale,
                ch.change_type.value,
                ch.anterior_date.isoformat(),
                ch.posterior_date.isoformat(),
                json.dumps([d.as_list() for d in ch.field_deltas]),
            ]
        )


def csv_to_changes(path: str) -> list[ChangeRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_changes(fh, path)


def read_changes(fh, where: str = "<stream>") -> list[ChangeRecord]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(header) != CHANGE_CSV_COLUMNS:
        raise FileParseError(f"{where}: bad change-record header: {header}")
    changes = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(CHANGE_CSV_COLUMNS):
            raise FileParseError(f"{where}:{lineno}: expected {len(CHANGE_CSV_COLUMNS)} columns")
        voter_id, locale, type_token, ante, post, deltas_json = row
        try:
            change_type = ChangeType(type_token)
        except ValueError as exc:
            raise FileParseError(
                f"{where}:{lineno}: unknown change_type token {type_token!r}"
            ) from exc
        try:
            raw_deltas = json.loads(deltas_json)
            deltas = tuple(FieldDelta(*d) for d in raw_deltas)
        except (ValueError, TypeError) as exc:
            raise FileParseError(f"{where}:{lineno}: bad field_deltas: {exc}") from exc
        changes.append(
            ChangeRecord(
                voter_id=voter_id,
                locale=locale,
                change_type=change_type,
                anterior_date=_parse_date(ante, f"{where}:{lineno}"),
                posterior_date=_parse_date(post, f"{where}:{lineno}"),
                field_deltas=deltas,
            )
        )
    return changes


def with_date(snapshot: Snapshot, date: dt.date) -> Snapshot:
    """Copy of a snapshot carrying a different capture date."""
    return replace(snapshot, snapshot_date=date)
