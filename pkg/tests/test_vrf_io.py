import datetime as dt

import pytest

import vrf_sentinel.synthgen as sg
import vrf_sentinel.vrf_io as io
from vrf_sentinel.errors import FileParseError, IntegrityError, SchemaError
from vrf_sentinel.records import (
    ChangeType,
    Snapshot,
    VoterRecord,
    VoterStatus,
)

D1 = dt.date(2019, 1, 3)
D2 = dt.date(2019, 1, 10)


def make_voter(voter_id, locale="polk", **kwargs):
    defaults = dict(
        first_name="ada",
        last_name="barnes",
        address=("12", "oak st", "", "polk city", "50001"),
        status=VoterStatus.ACTIVE,
        party="democrat",
    )
    defaults.update(kwargs)
    return VoterRecord(voter_id=voter_id, locale=locale, **defaults)


def snap(date, *voters):
    return Snapshot(snapshot_date=date, records={v.voter_id: v for v in voters})


# --- parsing -----------------------------------------------------------------


def write_snapshot_file(tmp_path, rows, name="snapshot_2019-01-03.csv"):
    header = "voter_id,locale,status,first_name,last_name,party\n"
    path = tmp_path / name
    path.write_text(header + "".join(rows))
    return str(path)


def simple_schema():
    return io.SnapshotSchema(
        columns={
            "voter_id": "voter_id",
            "locale": "locale",
            "status": "status",
            "first_name": "first_name",
            "last_name": "last_name",
            "party": "party",
        }
    )


def test_parse_well_formed(tmp_path):
    path = write_snapshot_file(
        tmp_path,
        ["A1,polk,active,ada,barnes,democrat\n",
         "A2,polk,inactive,bea,calder,republican\n",
         "A3,story,pending,carl,dietz,no_party\n"],
    )
    snapshot = io.parse_snapshot(path, simple_schema())
    assert len(snapshot) == 3
    assert snapshot.snapshot_date == D1  # from filename
    assert snapshot.locale_counts == {"polk": 2, "story": 1}
    assert snapshot.records["A2"].status == VoterStatus.INACTIVE


def test_parse_duplicate_voter_id(tmp_path):
    path = write_snapshot_file(
        tmp_path,
        ["A1,polk,active,ada,barnes,democrat\n",
         "A1,polk,active,ada,barnes,democrat\n"],
    )
    with pytest.raises(IntegrityError, match="A1"):
        io.parse_snapshot(path, simple_schema())


def test_parse_missing_status_column(tmp_path):
    path = tmp_path / "snapshot_2019-01-03.csv"
    path.write_text("voter_id,locale\nA1,polk\n")
    with pytest.raises(SchemaError, match="status"):
        io.parse_snapshot(str(path), simple_schema())


def test_schema_requires_required_fields():
    with pytest.raises(SchemaError, match="locale"):
        io.SnapshotSchema(columns={"voter_id": "id", "status": "st"})


def test_bad_rows_reported_not_dropped_silently(tmp_path):
    path = write_snapshot_file(
        tmp_path,
        ["A1,polk,active,ada,barnes,democrat\n",
         ",polk,active,bea,calder,republican\n",
         "A3,polk,nonsense,carl,dietz,no_party\n"],
    )
    issues = []
    snapshot = io.parse_snapshot(path, simple_schema(), issues=issues)
    assert len(snapshot) == 1
    assert {(i.line, i.field) for i in issues} == {(3, "voter_id"), (4, "status")}


def test_load_schema_file(tmp_path):
    cfg = tmp_path / "schema.cfg"
    cfg.write_text(
        "# comment\nvoter_id = id\nlocale = county\nstatus = st\nsnapshot_date = 2020-05-01\n"
    )
    schema = io.load_schema(str(cfg))
    assert schema.columns["locale"] == "county"
    assert schema.snapshot_date == dt.date(2020, 5, 1)


def test_snapshot_write_parse_round_trip(tmp_path):
    config = sg.snapshot_pair_config(seed=5, n_voters=400)
    snapshots, _ = sg.generate_scenario(config)
    path = tmp_path / f"snapshot_{snapshots[0].snapshot_date}.csv"
    io.write_snapshot(snapshots[0], str(path))
    parsed = io.parse_snapshot(str(path), io.identity_schema())
    assert parsed.snapshot_date == snapshots[0].snapshot_date
    assert parsed.records == snapshots[0].records


# --- diffing ------------------------------------------------------------------


def test_removal_and_registration():
    anterior = snap(D1, make_voter("A1"), make_voter("A2"))
    posterior = snap(D2, make_voter("A2"), make_voter("A9", locale="story"))
    changes = io.diff_snapshots(anterior, posterior)
    by_type = {c.change_type: c for c in changes}
    assert set(by_type) == {ChangeType.REMOVAL, ChangeType.REGISTRATION}
    assert by_type[ChangeType.REMOVAL].voter_id == "A1"
    assert by_type[ChangeType.REMOVAL].locale == "polk"  # anterior locale
    assert by_type[ChangeType.REGISTRATION].locale == "story"


def test_identical_snapshots_empty_diff():
    voters = [make_voter("A1"), make_voter("A2")]
    assert io.diff_snapshots(snap(D1, *voters), snap(D2, *voters)) == []


def test_multiple_types_for_one_voter():
    before = make_voter("A1")
    after = make_voter(
        "A1",
        address=("12", "maple st", "", "polk city", "50001"),
        status=VoterStatus.INACTIVE,
    )
    changes = io.diff_snapshots(snap(D1, before), snap(D2, after))
    assert [c.change_type for c in changes] == [ChangeType.ADDRESS, ChangeType.DEACTIVATION]
    deltas = changes[0].field_deltas
    assert [(d.field, d.old, d.new) for d in deltas] == [("street_name", "oak st", "maple st")]


def test_whitespace_and_case_not_a_change():
    before = make_voter("A1", first_name="Ada ")
    after = make_voter("A1", first_name="ada")
    assert io.diff_snapshots(snap(D1, before), snap(D2, after)) == []


def test_party_and_name_changes():
    before = make_voter("A1")
    after = make_voter("A1", last_name="Calder", party="no_party")
    changes = io.diff_snapshots(snap(D1, before), snap(D2, after))
    assert [c.change_type for c in changes] == [ChangeType.NAME, ChangeType.PARTY]


def test_pending_transitions_extended_vs_strict():
    before = make_voter("A1", status=VoterStatus.PENDING)
    after = make_voter("A1", status=VoterStatus.ACTIVE)
    extended = io.diff_snapshots(snap(D1, before), snap(D2, after))
    assert [c.change_type for c in extended] == [ChangeType.ACTIVATION]
    strict = io.diff_snapshots(snap(D1, before), snap(D2, after), strict_status=True)
    assert strict == []


def test_date_order_precondition():
    a = snap(D2, make_voter("A1"))
    b = snap(D1, make_voter("A1"))
    with pytest.raises(Exception, match="precede"):
        io.diff_snapshots(a, b)


def test_locale_move_is_address_change_at_posterior_locale():
    before = make_voter("A1", locale="polk")
    after = make_voter(
        "A1", locale="story", address=("40", "elm st", "", "story city", "50248")
    )
    changes = io.diff_snapshots(snap(D1, before), snap(D2, after))
    assert [c.change_type for c in changes] == [ChangeType.ADDRESS]
    assert changes[0].locale == "story"


def test_diff_deterministic_order():
    anterior = snap(D1, make_voter("A1"), make_voter("A2"), make_voter("A3"))
    posterior = snap(
        D2,
        make_voter("A1", party="no_party", last_name="tate"),
        make_voter("A3", status=VoterStatus.INACTIVE),
        make_voter("A4"),
    )
    changes = io.diff_snapshots(anterior, posterior)
    keys = [(c.voter_id, c.change_type.value) for c in changes]
    assert keys == [
        ("A1", "name"),
        ("A1", "party"),
        ("A2", "removal"),
        ("A3", "deactivation"),
        ("A4", "registration"),
    ]


def test_mirror_symmetry_of_counts():
    config = sg.snapshot_pair_config(seed=11, n_voters=600)
    (s0, s1), _ = sg.generate_scenario(config)
    forward = io.diff_snapshots(s0, s1)
    backward = io.diff_snapshots(
        io.with_date(s1, s0.snapshot_date), io.with_date(s0, s1.snapshot_date)
    )

    def counts(changes):
        out = {}
        for c in changes:
            out[c.change_type] = out.get(c.change_type, 0) + 1
        return out

    f, b = counts(forward), counts(backward)
    assert f.get(ChangeType.REMOVAL, 0) == b.get(ChangeType.REGISTRATION, 0)
    assert f.get(ChangeType.REGISTRATION, 0) == b.get(ChangeType.REMOVAL, 0)
    assert f.get(ChangeType.DEACTIVATION, 0) == b.get(ChangeType.ACTIVATION, 0)
    assert f.get(ChangeType.ACTIVATION, 0) == b.get(ChangeType.DEACTIVATION, 0)


def test_diff_patch_consistency():
    config = sg.snapshot_pair_config(seed=23, n_voters=800)
    (s0, s1), _ = sg.generate_scenario(config)
    changes = io.diff_snapshots(s0, s1)
    patched = sg.apply_changes(s0, changes, s1.snapshot_date)
    assert sg.diff_projection(patched) == sg.diff_projection(s1)


# --- change CSV round trip -----------------------------------------------------


def test_changes_csv_round_trip(tmp_path):
    anterior = snap(D1, make_voter("A1"), make_voter("A2"), make_voter("A3"))
    posterior = snap(
        D2,
        make_voter("A1", party="other", address=("9", "fir st", "2b", "polk city", "50001")),
        make_voter("A3", status=VoterStatus.INACTIVE, last_name="sloan"),
        make_voter("B7"),
    )
    changes = io.diff_snapshots(anterior, posterior)
    assert len(changes) == 6
    path = tmp_path / "changes.csv"
    io.changes_to_csv(changes, str(path))
    assert io.csv_to_changes(str(path)) == changes


def test_changes_csv_empty_round_trip(tmp_path):
    path = tmp_path / "changes.csv"
    io.changes_to_csv([], str(path))
    assert path.read_text().strip() == ",".join(io.CHANGE_CSV_COLUMNS)
    assert io.csv_to_changes(str(path)) == []


def test_changes_csv_unknown_type(tmp_path):
    path = tmp_path / "changes.csv"
    path.write_text(
        ",".join(io.CHANGE_CSV_COLUMNS)
        + "\nA1,polk,upgrade,2019-01-03,2019-01-10,[]\n"
    )
    with pytest.raises(FileParseError, match="upgrade"):
        io.csv_to_changes(str(path))


def test_changes_csv_byte_identical(tmp_path):
    config = sg.snapshot_pair_config(seed=2, n_voters=500)
    (s0, s1), _ = sg.generate_scenario(config)
    changes = io.diff_snapshots(s0, s1)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    io.changes_to_csv(changes, str(p1))
    io.changes_to_csv(changes, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
