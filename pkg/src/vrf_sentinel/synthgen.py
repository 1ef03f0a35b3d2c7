"""Seeded synthetic voter-file scenarios and ground truth.

Everything the pipeline consumes can be generated here without real data:
snapshot sequences whose pairwise diffs realize a configured organic
Poisson background plus systematic maintenance events and planted per-cell
anomalies, with a ground-truth record of every caused change; and, for
detector studies, modification matrices sampled directly at the cell level
over a low-rank background.

All randomness flows from the config seed through named sub-streams, so a
given config is byte-reproducible.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError
from .modmatrix import (
    DateInterval,
    MatrixEntryRef,
    ModificationMatrix,
    build_intervals,
    normalized_values,
)
from .records import (
    ADDRESS_FIELDS,
    BallotKind,
    ChangeRecord,
    ChangeType,
    Snapshot,
    VoteEvent,
    VoterRecord,
    VoterStatus,
)

EVENT_LABELS = (
    "inactivity_mailing_response_processing",
    "systematic_september_maintenance",
    "ncoa_mailings",
    "other",
)
ANOMALY_CAUSE = "anomaly"
ORGANIC_CAUSE = "organic"

_FIRST_NAMES = (
    "ada amos bea carl dora earl faye gus hana ivan june kofi lena miguel nia "
    "omar pia quinn rosa sam tess umar vera walt xena yuri zoe arlo bree cole "
    "dean elsa finn gwen hugo iris jack kira liam maya noel opal pete ruth"
).split()
_LAST_NAMES = (
    "acker barnes calder dietz ellison fry gable hobbs ibarra jessup kling "
    "lowell mercer nolan obrien paulsen quimby ritter sloan tate urbina vance "
    "whitman yates zeller ash boyd crane dunn estes ford gray hale irwin jove "
    "keen lund moss ness otis park reyes shaw toups velez wolfe young"
).split()
_STREETS = (
    "oak maple cedar elm walnut birch spruce willow aspen chestnut sycamore "
    "poplar hickory locust magnolia dogwood juniper hawthorn alder laurel"
).split()
_GENDERS = ("female", "male", "other", "unknown")
_GENDER_P = (0.48, 0.48, 0.02, 0.02)
_PARTIES = ("democrat", "republican", "no_party", "libertarian", "other")
_PARTY_P = (0.32, 0.32, 0.30, 0.04, 0.02)
_STATUSES = (VoterStatus.ACTIVE, VoterStatus.INACTIVE, VoterStatus.PENDING)
_STATUS_P = (0.88, 0.10, 0.02)


# --- election calendar -------------------------------------------------------


@dataclass(frozen=True)
class CalendarElection:
    election_id: str
    date: dt.date
    is_primary: bool
    scale: float  # relative statewide turnout, in (0, 1]


def default_election_calendar(first_year: int = 2012, last_year: int = 2018) -> tuple[CalendarElection, ...]:
    """Generals and primaries in even years, small city races in odd years."""
    elections = []
    for year in range(first_year, last_year + 1):
        if year % 2 == 0:
            elections.append(
                CalendarElection(f"{year}-primary", dt.date(year, 6, 5), True, 0.35)
            )
            elections.append(
                CalendarElection(f"{year}-general", dt.date(year, 11, 3), False, 1.0)
            )
        else:
            elections.append(
                CalendarElection(f"{year}-city", dt.date(year, 9, 10), False, 0.12)
            )
    return tuple(elections)


# --- configs -----------------------------------------------------------------


@dataclass(frozen=True)
class EventSpec:
    """One systematic maintenance event: a set of cells plus how voters are
    drawn for it."""

    kind: str                      # one of EVENT_LABELS
    change_type: ChangeType
    locales: tuple[str, ...]       # locale codes, or () for statewide
    interval_index: int
    per_1000: float                # target changes per 1000 registered voters
    companion_address_fraction: float = 0.0  # share also getting an address change

    def __post_init__(self) -> None:
        if self.kind not in EVENT_LABELS:
            raise ConfigError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class PlantedAnomaly:
    locale: str
    interval_index: int
    change_type: ChangeType
    count: int


@dataclass(frozen=True)
class ScenarioConfig:
    n_locales: int = 99
    population_median: float = 10_000.0
    population_sigma: float = 0.5
    n_intervals: int = 149
    interval_days: int = 7
    start_date: dt.date = dt.date(2018, 6, 4)
    # organic background, changes per-day per-1000 voters by type
    base_rates: dict[ChangeType, float] = field(
        default_factory=lambda: {
            ChangeType.ADDRESS: 0.30,
            ChangeType.NAME: 0.06,
            ChangeType.REMOVAL: 0.10,
            ChangeType.REGISTRATION: 0.25,
            ChangeType.DEACTIVATION: 0.12,
            ChangeType.ACTIVATION: 0.08,
            ChangeType.PARTY: 0.05,
        }
    )
    events: tuple[EventSpec, ...] = ()
    anomalies: tuple[PlantedAnomaly, ...] = ()
    never_voted_fraction: float = 0.22
    old_registration_fraction: float = 0.35
    seed: int = 0

    def locale_codes(self) -> tuple[str, ...]:
        return tuple(f"L{i:03d}" for i in range(1, self.n_locales + 1))

    def snapshot_dates(self) -> tuple[dt.date, ...]:
        return tuple(
            self.start_date + dt.timedelta(days=i * self.interval_days)
            for i in range(self.n_intervals + 1)
        )


@dataclass(frozen=True)
class TruthChange:
    interval_index: int
    voter_id: str
    locale: str
    change_type: ChangeType
    cause: str


@dataclass
class GroundTruth:
    """Everything the generator did, for oracle-style verification."""

    config_seed: int
    start_date: dt.date
    interval_days: int
    n_intervals: int
    locales: tuple[str, ...]
    changes: list[TruthChange] = field(default_factory=list)
    cell_causes: dict[tuple[str, int, str], str] = field(default_factory=dict)
    inserted_voters: int = 0
    removed_voters: int = 0

    def changes_for_interval(self, interval_index: int) -> set[tuple[str, str]]:
        return {
            (c.voter_id, c.change_type.value)
            for c in self.changes
            if c.interval_index == interval_index
        }

    def anomaly_cells(self) -> set[tuple[str, int, str]]:
        return {cell for cell, cause in self.cell_causes.items() if cause == ANOMALY_CAUSE}

    def interval(self, index: int) -> DateInterval:
        start = self.start_date + dt.timedelta(days=(index + 1) * self.interval_days)
        return DateInterval(start, start + dt.timedelta(days=self.interval_days))

    def to_json(self) -> str:
        payload = {
            "config_seed": self.config_seed,
            "start_date": self.start_date.isoformat(),
            "interval_days": self.interval_days,
            "n_intervals": self.n_intervals,
            "locales": list(self.locales),
            "inserted_voters": self.inserted_voters,
            "removed_voters": self.removed_voters,
            "changes": [
                [c.interval_index, c.voter_id, c.locale, c.change_type.value, c.cause]
                for c in self.changes
            ],
            "cell_causes": [
                [locale, interval, change_type, cause]
                for (locale, interval, change_type), cause in sorted(self.cell_causes.items())
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        raw = json.loads(text)
        truth = cls(
            config_seed=raw["config_seed"],
            start_date=dt.date.fromisoformat(raw["start_date"]),
            interval_days=raw["interval_days"],
            n_intervals=raw["n_intervals"],
            locales=tuple(raw["locales"]),
            inserted_voters=raw["inserted_voters"],
            removed_voters=raw["removed_voters"],
        )
        truth.changes = [
            TruthChange(i, v, loc, ChangeType(ct), cause)
            for i, v, loc, ct, cause in raw["changes"]
        ]
        truth.cell_causes = {
            (locale, interval, ct): cause
            for locale, interval, ct, cause in raw["cell_causes"]
        }
        return truth


# --- voter universe ----------------------------------------------------------


class _Universe:
    """Mutable working state for one scenario walk."""

    def __init__(self, config: ScenarioConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.calendar = default_election_calendar(
            config.start_date.year - 6, config.start_date.year
        )
        self.records: dict[str, VoterRecord] = {}
        self.by_locale: dict[str, list[str]] = {code: [] for code in config.locale_codes()}
        # ids are zero-padded and issued in order, so append keeps each list sorted
        self._counter = 0
        self.change_log: dict[str, list[tuple[ChangeType, int]]] = {}

        pops = _locale_populations(config, rng)
        for code, pop in zip(config.locale_codes(), pops):
            for rec in self._batch_new_voters(code, pop, config.start_date, established=True):
                self.records[rec.voter_id] = rec
                self.by_locale[code].append(rec.voter_id)

    def _next_id(self) -> str:
        self._counter += 1
        return f"V{self._counter:07d}"

    def _batch_new_voters(
        self, locale: str, n: int, as_of: dt.date, established: bool
    ) -> list[VoterRecord]:
        """Sample all attribute columns at once, then assemble records."""
        rng = self.rng
        cfg = self.config
        age_years = rng.uniform(18.5, 94.0, size=n)
        adult_days = np.maximum(60, ((age_years - 18.0) * 365).astype(int))
        if established:
            old = rng.random(n) < cfg.old_registration_fraction
            recent_days = rng.uniform(90, 3650, size=n).astype(int)
            old_days = rng.uniform(3650, 10950, size=n).astype(int)
            reg_days = np.where(old & (adult_days > 3650), old_days, recent_days)
            reg_days = np.minimum(np.maximum(reg_days, 30), adult_days)
            statuses = rng.choice(len(_STATUSES), size=n, p=_STATUS_P)
        else:
            reg_days = np.zeros(n, dtype=int)
            statuses = np.where(rng.random(n) < 0.9, 0, 2)  # active or pending
        parties = rng.choice(len(_PARTIES), size=n, p=_PARTY_P)
        genders = rng.choice(len(_GENDERS), size=n, p=_GENDER_P)
        firsts = rng.integers(len(_FIRST_NAMES), size=n)
        lasts = rng.integers(len(_LAST_NAMES), size=n)
        houses = rng.integers(1, 9900, size=n)
        streets = rng.integers(len(_STREETS), size=n)
        zips = rng.integers(0, 9999, size=n)
        never = rng.random(n) < cfg.never_voted_fraction
        propensity = rng.uniform(0.25, 0.95, size=n)
        # per-election participation draws, columns aligned with the calendar
        turnout = rng.random((n, len(self.calendar)))
        kind_draw = rng.random((n, len(self.calendar)))

        records = []
        for i in range(n):
            birth = as_of - dt.timedelta(days=int(age_years[i] * 365.25))
            registration = as_of - dt.timedelta(days=int(reg_days[i]))
            party = _PARTIES[parties[i]]
            history: tuple[VoteEvent, ...] = ()
            if not never[i]:
                events = []
                for e, election in enumerate(self.calendar):
                    if election.date <= registration or election.date >= cfg.start_date:
                        continue
                    if turnout[i, e] < propensity[i] * election.scale:
                        if kind_draw[i, e] < 0.08:
                            kind = BallotKind.PROVISIONAL
                        elif kind_draw[i, e] < 0.30:
                            kind = BallotKind.ABSENTEE
                        else:
                            kind = BallotKind.REGULAR
                        events.append(
                            VoteEvent(
                                election_id=election.election_id,
                                election_date=election.date,
                                kind=kind,
                                party_ballot=party if election.is_primary else None,
                            )
                        )
                history = tuple(events)
            records.append(
                VoterRecord(
                    voter_id=self._next_id(),
                    locale=locale,
                    first_name=_FIRST_NAMES[firsts[i]],
                    middle_name="",
                    last_name=_LAST_NAMES[lasts[i]],
                    address=(
                        str(int(houses[i])),
                        f"{_STREETS[streets[i]]} st",
                        "",
                        f"{locale} city",
                        f"5{int(zips[i]):04d}",
                    ),
                    status=_STATUSES[statuses[i]],
                    party=party,
                    gender=_GENDERS[genders[i]],
                    birth_date=birth,
                    registration_date=registration,
                    last_update_date=registration,
                    vote_history=history,
                )
            )
        return records

    def _new_voter(self, locale: str, as_of: dt.date, established: bool) -> VoterRecord:
        return self._batch_new_voters(locale, 1, as_of, established)[0]

    def take_snapshot(self, date: dt.date) -> Snapshot:
        return Snapshot(snapshot_date=date, records=dict(self.records))

    def log_change(self, voter_id: str, change_type: ChangeType, interval_index: int) -> None:
        self.change_log.setdefault(voter_id, []).append((change_type, interval_index))


def _locale_populations(config: ScenarioConfig, rng: np.random.Generator) -> list[int]:
    draws = rng.normal(0.0, 1.0, size=config.n_locales)
    pops = np.round(config.population_median * np.exp(config.population_sigma * draws))
    return [int(max(50, p)) for p in pops]


# --- scenario walk -----------------------------------------------------------

_FIELD_TYPES = (ChangeType.ADDRESS, ChangeType.NAME, ChangeType.PARTY)
_STATUS_TYPES = (ChangeType.DEACTIVATION, ChangeType.ACTIVATION)


class _IntervalGuard:
    """Tracks which voters may still receive which change this interval, so
    the generated stream matches the diff semantics exactly: one record per
    (voter, type), no same-interval status flip-flops, and insertions or
    removals never combine with anything else."""

    def __init__(self) -> None:
        self.by_type: dict[ChangeType, set[str]] = {ct: set() for ct in ChangeType}
        self.status_touched: set[str] = set()
        self.any_touched: set[str] = set()
        self.frozen: set[str] = set()  # registered or removed this interval

    def can_field_change(self, voter_id: str, change_type: ChangeType) -> bool:
        return voter_id not in self.by_type[change_type] and voter_id not in self.frozen

    def can_status_change(self, voter_id: str) -> bool:
        return voter_id not in self.status_touched and voter_id not in self.frozen

    def can_remove(self, voter_id: str) -> bool:
        return voter_id not in self.any_touched

    def mark(self, voter_id: str, change_type: ChangeType) -> None:
        self.by_type[change_type].add(voter_id)
        if change_type in _STATUS_TYPES:
            self.status_touched.add(voter_id)
        if change_type in (ChangeType.REGISTRATION, ChangeType.REMOVAL):
            self.frozen.add(voter_id)
        self.any_touched.add(voter_id)


def generate_scenario(config: ScenarioConfig) -> tuple[list[Snapshot], GroundTruth]:
    """Materialize the full snapshot sequence plus ground truth."""
    snapshots = []
    truth = None
    for snapshot, truth in iter_scenario_snapshots(config):
        snapshots.append(snapshot)
    assert truth is not None
    return snapshots, truth


def iter_scenario_snapshots(config: ScenarioConfig):
    """Yield (snapshot, truth) pairs one interval at a time.

    The truth object is shared and grows as intervals are generated; it is
    complete once the final snapshot has been yielded. Streaming keeps big
    scenarios out of memory.
    """
    _validate_config(config)
    root = np.random.SeedSequence(config.seed)
    universe_seq, walk_seq = root.spawn(2)
    universe = _Universe(config, np.random.default_rng(universe_seq))
    truth = GroundTruth(
        config_seed=config.seed,
        start_date=config.start_date,
        interval_days=config.interval_days,
        n_intervals=config.n_intervals,
        locales=config.locale_codes(),
    )
    dates = config.snapshot_dates()
    yield universe.take_snapshot(dates[0]), truth

    walk_rng = np.random.default_rng(walk_seq)
    events_by_interval: dict[int, list[EventSpec]] = {}
    for event in config.events:
        events_by_interval.setdefault(event.interval_index, []).append(event)
    anomalies_by_interval: dict[int, list[PlantedAnomaly]] = {}
    for anomaly in config.anomalies:
        anomalies_by_interval.setdefault(anomaly.interval_index, []).append(anomaly)

    for t in range(config.n_intervals):
        guard = _IntervalGuard()
        _apply_organic(universe, truth, walk_rng, t, guard)
        for event in events_by_interval.get(t, ()):
            _apply_event(universe, truth, walk_rng, t, event, guard)
        for anomaly in anomalies_by_interval.get(t, ()):
            _apply_anomaly(universe, truth, walk_rng, t, anomaly, guard)
        yield universe.take_snapshot(dates[t + 1]), truth


def _validate_config(config: ScenarioConfig) -> None:
    codes = set(config.locale_codes())
    for event in config.events:
        if not 0 <= event.interval_index < config.n_intervals:
            raise ConfigError(f"event interval {event.interval_index} out of range")
        unknown = set(event.locales) - codes
        if unknown:
            raise ConfigError(f"event references unknown locales: {sorted(unknown)}")
    for anomaly in config.anomalies:
        if anomaly.locale not in codes:
            raise ConfigError(f"anomaly references unknown locale {anomaly.locale!r}")
        if not 0 <= anomaly.interval_index < config.n_intervals:
            raise ConfigError(f"anomaly interval {anomaly.interval_index} out of range")
    for change_type, rate in config.base_rates.items():
        if rate < 0:
            raise ConfigError(f"negative base rate for {change_type.value}")


def _apply_organic(
    universe: _Universe,
    truth: GroundTruth,
    rng: np.random.Generator,
    t: int,
    guard: _IntervalGuard,
) -> None:
    cfg = universe.config
    for locale in cfg.locale_codes():
        pop = len(universe.by_locale[locale])
        for change_type in ChangeType:
            rate = cfg.base_rates.get(change_type, 0.0)
            if rate <= 0.0 or pop == 0:
                continue
            count = int(rng.poisson(rate * cfg.interval_days * pop / 1000.0))
            for _ in range(count):
                _apply_one_change(universe, truth, rng, t, locale, change_type, ORGANIC_CAUSE, guard)


def _apply_event(
    universe: _Universe,
    truth: GroundTruth,
    rng: np.random.Generator,
    t: int,
    event: EventSpec,
    guard: _IntervalGuard,
) -> None:
    locales = event.locales or universe.config.locale_codes()
    for locale in locales:
        pop = len(universe.by_locale[locale])
        count = max(1, int(round(event.per_1000 * pop / 1000.0)))
        if event.kind == "other":
            count = int(rng.integers(3, 16))  # small clusters by definition
        applied = 0
        for _ in range(count):
            voter_id = _apply_one_change(
                universe, truth, rng, t, locale, event.change_type, event.kind, guard,
                bias=event.kind,
            )
            if voter_id is None:
                continue
            applied += 1
            if (
                event.companion_address_fraction > 0
                and rng.random() < event.companion_address_fraction
                and guard.can_field_change(voter_id, ChangeType.ADDRESS)
            ):
                _mutate_field(universe, truth, rng, t, voter_id, ChangeType.ADDRESS, event.kind, guard)
        if applied == 0:
            raise ConfigError(
                f"event {event.kind} at interval {t} found no eligible voters in {locale}"
            )


def _apply_anomaly(
    universe: _Universe,
    truth: GroundTruth,
    rng: np.random.Generator,
    t: int,
    anomaly: PlantedAnomaly,
    guard: _IntervalGuard,
) -> None:
    applied = 0
    for _ in range(anomaly.count):
        if _apply_one_change(
            universe, truth, rng, t, anomaly.locale, anomaly.change_type, ANOMALY_CAUSE, guard
        ):
            applied += 1
    if applied < anomaly.count:
        raise ConfigError(
            f"anomaly at ({anomaly.locale}, {t}) wanted {anomaly.count} "
            f"{anomaly.change_type.value} changes, applied {applied}"
        )


def _apply_one_change(
    universe: _Universe,
    truth: GroundTruth,
    rng: np.random.Generator,
    t: int,
    locale: str,
    change_type: ChangeType,
    cause: str,
    guard: _IntervalGuard,
    bias: str | None = None,
) -> str | None:
    """Apply one change of the given type; returns the voter id or None if
    no eligible voter exists."""
    if change_type == ChangeType.REGISTRATION:
        rec = universe._new_voter(locale, _interval_end(universe.config, t), established=False)
        universe.records[rec.voter_id] = rec
        universe.by_locale[locale].append(rec.voter_id)
        guard.mark(rec.voter_id, change_type)
        truth.inserted_voters += 1
        _record(truth, universe, t, rec.voter_id, locale, change_type, cause)
        return rec.voter_id

    if change_type == ChangeType.REMOVAL:
        voter_id = _pick_voter(universe, rng, locale, lambda v: guard.can_remove(v.voter_id))
        if voter_id is None:
            return None
        del universe.records[voter_id]
        universe.by_locale[locale].remove(voter_id)
        guard.mark(voter_id, change_type)
        truth.removed_voters += 1
        _record(truth, universe, t, voter_id, locale, change_type, cause)
        return voter_id

    if change_type in _STATUS_TYPES:
        want = VoterStatus.ACTIVE if change_type == ChangeType.DEACTIVATION else VoterStatus.INACTIVE
        new_status = (
            VoterStatus.INACTIVE if change_type == ChangeType.DEACTIVATION else VoterStatus.ACTIVE
        )
        voter_id = _pick_voter(
            universe,
            rng,
            locale,
            lambda v: v.status == want and guard.can_status_change(v.voter_id),
            bias=bias,
        )
        if voter_id is None:
            return None
        universe.records[voter_id] = replace(universe.records[voter_id], status=new_status)
        guard.mark(voter_id, change_type)
        universe.log_change(voter_id, change_type, t)
        _record(truth, universe, t, voter_id, locale, change_type, cause)
        return voter_id

    voter_id = _pick_voter(
        universe, rng, locale, lambda v: guard.can_field_change(v.voter_id, change_type), bias=bias
    )
    if voter_id is None:
        return None
    _mutate_field(universe, truth, rng, t, voter_id, change_type, cause, guard)
    return voter_id


def _mutate_field(
    universe: _Universe,
    truth: GroundTruth,
    rng: np.random.Generator,
    t: int,
    voter_id: str,
    change_type: ChangeType,
    cause: str,
    guard: _IntervalGuard,
) -> None:
    rec = universe.records[voter_id]
    if change_type == ChangeType.ADDRESS:
        addr = list(rec.address)
        house_idx = ADDRESS_FIELDS.index("house_num")
        street_idx = ADDRESS_FIELDS.index("street_name")
        addr[house_idx] = str(int(rng.integers(1, 9900)))
        new_street = f"{_STREETS[rng.integers(len(_STREETS))]} ave"
        if new_street == addr[street_idx]:
            new_street = f"{_STREETS[rng.integers(len(_STREETS))]} rd"
        addr[street_idx] = new_street
        new_rec = replace(rec, address=tuple(addr))
    elif change_type == ChangeType.NAME:
        new_last = _LAST_NAMES[rng.integers(len(_LAST_NAMES))]
        if new_last == rec.last_name:
            new_last = rec.last_name + "son"
        new_rec = replace(rec, last_name=new_last)
    elif change_type == ChangeType.PARTY:
        choices = [p for p in _PARTIES if p != rec.party]
        new_rec = replace(rec, party=choices[rng.integers(len(choices))])
    else:
        raise ConfigError(f"not a field change type: {change_type.value}")
    universe.records[voter_id] = new_rec
    guard.mark(voter_id, change_type)
    universe.log_change(voter_id, change_type, t)
    _record(truth, universe, t, voter_id, rec.locale, change_type, cause)


def _record(
    truth: GroundTruth,
    universe: _Universe,
    t: int,
    voter_id: str,
    locale: str,
    change_type: ChangeType,
    cause: str,
) -> None:
    truth.changes.append(TruthChange(t, voter_id, locale, change_type, cause))
    if cause != ORGANIC_CAUSE:
        cell = (locale, t, change_type.value)
        # anomaly marks win over event marks when both touch a cell
        if truth.cell_causes.get(cell) != ANOMALY_CAUSE:
            truth.cell_causes[cell] = cause


def _interval_end(config: ScenarioConfig, t: int) -> dt.date:
    return config.start_date + dt.timedelta(days=(t + 1) * config.interval_days)


def _pick_voter(
    universe: _Universe,
    rng: np.random.Generator,
    locale: str,
    eligible,
    bias: str | None = None,
) -> str | None:
    ids = universe.by_locale[locale]
    if not ids:
        return None
    if bias is None or bias == "other":
        # unbiased picks dominate; try rejection sampling before scanning
        for _ in range(40):
            vid = ids[int(rng.integers(len(ids)))]
            if eligible(universe.records[vid]):
                return vid
        pool = [vid for vid in ids if eligible(universe.records[vid])]
        if not pool:
            return None
        return pool[int(rng.integers(len(pool)))]
    pool = [vid for vid in ids if eligible(universe.records[vid])]
    if not pool:
        return None
    as_of = universe.config.start_date
    weights = np.array(
        [_bias_weight(universe.records[vid], bias, as_of, universe) for vid in pool]
    )
    total = float(weights.sum())
    if total <= 0:
        return pool[int(rng.integers(len(pool)))]
    return pool[int(rng.choice(len(pool), p=weights / total))]


def _bias_weight(rec: VoterRecord, bias: str, as_of: dt.date, universe: _Universe) -> float:
    """Demographic bias profiles making event cohorts separable by kind."""
    last_vote = max((ev.election_date for ev in rec.vote_history), default=None)
    days_since_vote = (as_of - last_vote).days if last_vote else None
    reg_days = (as_of - rec.registration_date).days if rec.registration_date else 0
    age_years = (as_of - rec.birth_date).days / 365.25 if rec.birth_date else 50.0

    if bias == "inactivity_mailing_response_processing":
        # lapsed voters: voted before, but not in the last two years
        if days_since_vote is not None and days_since_vote >= 700:
            return 1.0
        return 0.02
    if bias == "systematic_september_maintenance":
        # stale registrations that never produced a ballot or a change
        if days_since_vote is None and reg_days >= 3000 and not universe.change_log.get(rec.voter_id):
            return 1.0
        return 0.02
    if bias == "ncoa_mailings":
        # older movers with a live voting habit
        if age_years >= 64 and days_since_vote is not None and days_since_vote < 800:
            return 1.0
        return 0.02
    return 1.0


# --- patch oracle ------------------------------------------------------------


def apply_changes(anterior: Snapshot, changes: list[ChangeRecord], posterior_date: dt.date) -> Snapshot:
    """Replay change records on top of a snapshot.

    Covers exactly the diff-visible fields: presence, names, address
    components, party, and status. Used as the independent patch oracle
    against diff output.
    """
    records = dict(anterior.records)
    for change in changes:
        if change.change_type == ChangeType.REMOVAL:
            records.pop(change.voter_id, None)
            continue
        if change.change_type == ChangeType.REGISTRATION:
            fields = {d.field: d.new for d in change.field_deltas}
            address = tuple(fields.get(f, "") for f in ADDRESS_FIELDS)
            records[change.voter_id] = VoterRecord(
                voter_id=change.voter_id,
                locale=change.locale,
                first_name=fields.get("first_name", ""),
                middle_name=fields.get("middle_name", ""),
                last_name=fields.get("last_name", ""),
                address=address,
                status=VoterStatus(fields.get("status", "active")),
                party=fields.get("party", ""),
            )
            continue
        rec = records.get(change.voter_id)
        if rec is None:
            raise DataError(f"change for unknown voter {change.voter_id}")
        updates: dict = {}
        address = list(rec.address)
        for delta in change.field_deltas:
            if delta.field in ADDRESS_FIELDS:
                address[ADDRESS_FIELDS.index(delta.field)] = delta.new
            elif delta.field == "status":
                updates["status"] = VoterStatus(delta.new)
            elif delta.field in ("first_name", "middle_name", "last_name", "party"):
                updates[delta.field] = delta.new
            else:
                raise DataError(f"unexpected delta field {delta.field!r}")
        updates["address"] = tuple(address)
        records[change.voter_id] = replace(rec, **updates)
    return Snapshot(snapshot_date=posterior_date, records=records)


def diff_projection(snapshot: Snapshot) -> dict[str, tuple]:
    """Diff-visible view of a snapshot, for patch-oracle comparisons."""
    return {
        vid: (rec.name_key(), rec.address_key(), rec.party_key(), rec.status)
        for vid, rec in snapshot.records.items()
    }


# --- labels ------------------------------------------------------------------

DEFAULT_LABEL_PROPORTIONS = (99, 37, 27, 21)  # by EVENT_LABELS order


def scenario_labels(
    truth: GroundTruth,
    change_type: ChangeType,
    total: int | None = None,
    proportions: tuple[int, ...] = DEFAULT_LABEL_PROPORTIONS,
) -> list[tuple[str, int, str]]:
    """(locale, interval_index, label) triples for systematic change groups.

    Cells are drawn from the ground truth's event-marked cells for the
    change type, with per-label counts apportioned to `total` by largest
    remainder over `proportions`. Deterministic: cells are taken in sorted
    order.
    """
    if len(proportions) != len(EVENT_LABELS):
        raise ConfigError("proportions must align with the event label list")
    by_label: dict[str, list[tuple[str, int]]] = {label: [] for label in EVENT_LABELS}
    for (locale, interval, ct), cause in sorted(truth.cell_causes.items()):
        if ct == change_type.value and cause in by_label:
            by_label[cause].append((locale, interval))

    if total is None:
        total = sum(proportions)
    weight = sum(proportions)
    quotas = [total * p / weight for p in proportions]
    counts = [int(q) for q in quotas]
    remainders = sorted(
        range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i)
    )
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1

    labeled = []
    for label, count in zip(EVENT_LABELS, counts):
        cells = by_label[label]
        if len(cells) < count:
            raise ConfigError(
                f"ground truth has {len(cells)} {label} cells, need {count}"
            )
        labeled.extend((locale, interval, label) for locale, interval in cells[:count])
    return labeled


# --- matrix-level scenarios ----------------------------------------------------


@dataclass(frozen=True)
class MatrixScenarioConfig:
    """Direct cell-level sampling of one change type's modification matrix
    over a low-rank background: smooth locale levels and seasonality plus a
    handful of statewide event columns, Poisson-sampled counts, and planted
    anomaly cells."""

    n_locales: int = 99
    n_intervals: int = 149
    interval_days: int = 7
    start_date: dt.date = dt.date(2018, 6, 4)
    change_type: ChangeType = ChangeType.DEACTIVATION
    population_median: float = 10_000.0
    population_sigma: float = 0.5
    base_rate: float = 0.18
    locale_sigma: float = 0.12
    seasonal_amplitude: float = 0.25
    seasonal_period: float = 52.0
    # each event column carries its own locale profile, so the systematic
    # structure spans more independent components than a k=5 factorization
    # can spend on single-cell spikes
    event_intervals: tuple[int, ...] = (12, 18, 34, 44, 70, 96, 122, 140)
    event_intensities: tuple[float, ...] = (9.0, 8.0, 12.0, 13.0, 7.0, 11.0, 16.0, 8.0)
    event_profile_sigma: float = 0.30
    anomaly_cells: tuple[tuple[int, int], ...] = ()
    anomaly_multiplier: float = 10.0  # times the organic background mean value
    seed: int = 0


@dataclass(frozen=True)
class MatrixGroundTruth:
    anomaly_refs: tuple[MatrixEntryRef, ...]
    event_intervals: tuple[int, ...]
    background_mean: float


def generate_matrix_scenario(
    config: MatrixScenarioConfig,
) -> tuple[ModificationMatrix, MatrixGroundTruth]:
    if len(config.event_intervals) != len(config.event_intensities):
        raise ConfigError("event intervals and intensities must align")
    for j in config.event_intervals:
        if not 0 <= j < config.n_intervals:
            raise ConfigError(f"event interval {j} out of range")
    for i, j in config.anomaly_cells:
        if not (0 <= i < config.n_locales and 0 <= j < config.n_intervals):
            raise ConfigError(f"anomaly cell ({i}, {j}) out of range")

    root = np.random.SeedSequence(config.seed)
    pop_rng, level_rng, profile_rng, count_rng = (
        np.random.default_rng(s) for s in root.spawn(4)
    )

    pops = np.round(
        config.population_median
        * np.exp(config.population_sigma * pop_rng.normal(size=config.n_locales))
    ).astype(np.int64)
    pops = np.maximum(pops, 500)

    level = np.exp(config.locale_sigma * level_rng.normal(size=config.n_locales))
    phase = np.arange(config.n_intervals) * 2.0 * np.pi / config.seasonal_period
    season = 1.0 + config.seasonal_amplitude * np.sin(phase)
    rates = config.base_rate * np.outer(level, season)

    profiles = np.exp(
        config.event_profile_sigma
        * profile_rng.normal(size=(len(config.event_intervals), config.n_locales))
    )
    for e, (j, intensity) in enumerate(zip(config.event_intervals, config.event_intensities)):
        rates[:, j] += config.base_rate * intensity * profiles[e]

    lam = rates * config.interval_days * pops[:, np.newaxis] / 1000.0
    raw = count_rng.poisson(lam).astype(np.int64)

    pop_grid = np.repeat(pops[:, np.newaxis], config.n_intervals, axis=1)
    days = np.full(config.n_intervals, float(config.interval_days))
    background_mean = float(np.mean(normalized_values(raw, pop_grid, days)))

    anomaly_refs = []
    for i, j in config.anomaly_cells:
        extra_value = config.anomaly_multiplier * background_mean
        extra = max(1, int(round(extra_value * config.interval_days * pops[i] / 1000.0)))
        raw[i, j] += extra
        anomaly_refs.append(MatrixEntryRef(i, j))

    values = normalized_values(raw, pop_grid, days)
    intervals = build_intervals(
        config.start_date,
        config.start_date + dt.timedelta(days=(config.n_intervals - 1) * config.interval_days),
        config.interval_days,
    )
    matrix = ModificationMatrix(
        change_type=config.change_type,
        locales=tuple(f"L{i:03d}" for i in range(1, config.n_locales + 1)),
        intervals=intervals,
        values=values,
        raw_counts=raw,
        populations=pop_grid,
    )
    return matrix, MatrixGroundTruth(
        anomaly_refs=tuple(anomaly_refs),
        event_intervals=config.event_intervals,
        background_mean=background_mean,
    )


def planted_anomaly_matrix_config(seed: int = 0) -> MatrixScenarioConfig:
    """Default 99x149 study: four planted cells in quiet regions."""
    return MatrixScenarioConfig(
        anomaly_cells=((7, 23), (31, 58), (54, 87), (80, 112)),
        seed=seed,
    )


# --- scenario presets ----------------------------------------------------------


def snapshot_pair_config(seed: int, n_voters: int = 12_000) -> ScenarioConfig:
    """Two-snapshot scenario with at least ~n_voters across a few locales."""
    n_locales = 6
    return ScenarioConfig(
        n_locales=n_locales,
        population_median=n_voters / n_locales,
        population_sigma=0.2,
        n_intervals=1,
        base_rates={
            ChangeType.ADDRESS: 2.0,
            ChangeType.NAME: 0.8,
            ChangeType.REMOVAL: 1.0,
            ChangeType.REGISTRATION: 1.5,
            ChangeType.DEACTIVATION: 1.2,
            ChangeType.ACTIVATION: 0.8,
            ChangeType.PARTY: 0.6,
        },
        seed=seed,
    )


def small_scenario_config(seed: int = 0) -> ScenarioConfig:
    """Compact end-to-end scenario: 12 locales x 20 intervals with one
    statewide event and one planted anomaly."""
    locales = tuple(f"L{i:03d}" for i in range(1, 13))
    return ScenarioConfig(
        n_locales=12,
        population_median=900.0,
        population_sigma=0.3,
        n_intervals=20,
        events=(
            EventSpec(
                kind="inactivity_mailing_response_processing",
                change_type=ChangeType.DEACTIVATION,
                locales=(),
                interval_index=8,
                per_1000=25.0,
                companion_address_fraction=0.3,
            ),
        ),
        anomalies=(
            PlantedAnomaly(locale=locales[4], interval_index=14,
                           change_type=ChangeType.DEACTIVATION, count=40),
        ),
        seed=seed,
    )


def full_scenario_config(seed: int = 0) -> ScenarioConfig:
    """Voter-level scenario on the full 99-locale x 149-interval grid.

    Locale populations are kept small so the ~3-year walk, the 150 snapshot
    files, and their diffs stay inside a few minutes of pure-python work;
    the matrix-level generator is the right tool when only detector inputs
    are needed at this scale."""
    codes = tuple(f"L{i:03d}" for i in range(1, 100))
    events = []
    for kind, interval, intensity in (
        ("inactivity_mailing_response_processing", 36, 30.0),
        ("systematic_september_maintenance", 66, 25.0),
        ("inactivity_mailing_response_processing", 88, 30.0),
        ("ncoa_mailings", 118, 25.0),
    ):
        events.append(
            EventSpec(
                kind=kind,
                change_type=ChangeType.DEACTIVATION,
                locales=(),
                interval_index=interval,
                per_1000=intensity,
                companion_address_fraction=0.25,
            )
        )
    return ScenarioConfig(
        n_locales=99,
        population_median=320.0,
        population_sigma=0.35,
        n_intervals=149,
        events=tuple(events),
        anomalies=(
            PlantedAnomaly(locale=codes[7], interval_index=23,
                           change_type=ChangeType.DEACTIVATION, count=25),
            PlantedAnomaly(locale=codes[31], interval_index=58,
                           change_type=ChangeType.DEACTIVATION, count=25),
            PlantedAnomaly(locale=codes[54], interval_index=87,
                           change_type=ChangeType.DEACTIVATION, count=25),
            PlantedAnomaly(locale=codes[80], interval_index=112,
                           change_type=ChangeType.DEACTIVATION, count=25),
        ),
        seed=seed,
    )


def labeled_scenario_config(seed: int = 0) -> ScenarioConfig:
    """Scenario whose deactivation cells support the default 99:37:27:21
    label proportions: one statewide mailing event, a 37-locale September
    maintenance, a 27-locale address-list event, and 21 small clusters."""
    n_locales = 99
    codes = tuple(f"L{i:03d}" for i in range(1, n_locales + 1))
    events = [
        EventSpec(
            kind="inactivity_mailing_response_processing",
            change_type=ChangeType.DEACTIVATION,
            locales=(),
            interval_index=6,
            per_1000=55.0,
            companion_address_fraction=0.35,
        ),
        EventSpec(
            kind="systematic_september_maintenance",
            change_type=ChangeType.DEACTIVATION,
            locales=codes[5:42],
            interval_index=9,
            per_1000=40.0,
        ),
        EventSpec(
            kind="ncoa_mailings",
            change_type=ChangeType.DEACTIVATION,
            locales=codes[50:77],
            interval_index=12,
            per_1000=40.0,
        ),
    ]
    cluster_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(97,)))
    cluster_intervals = [t for t in range(2, 15) if t not in (6, 9, 12)]
    used: set[tuple[int, int]] = set()
    for _ in range(21):
        while True:
            loc = int(cluster_rng.integers(0, n_locales))
            interval = cluster_intervals[int(cluster_rng.integers(len(cluster_intervals)))]
            if (loc, interval) not in used:
                used.add((loc, interval))
                break
        events.append(
            EventSpec(
                kind="other",
                change_type=ChangeType.DEACTIVATION,
                locales=(codes[loc],),
                interval_index=interval,
                per_1000=10.0,
            )
        )
    return ScenarioConfig(
        n_locales=n_locales,
        population_median=520.0,
        population_sigma=0.3,
        n_intervals=16,
        base_rates={
            ChangeType.ADDRESS: 0.5,
            ChangeType.NAME: 0.08,
            ChangeType.REMOVAL: 0.10,
            ChangeType.REGISTRATION: 0.25,
            ChangeType.DEACTIVATION: 0.10,
            ChangeType.ACTIVATION: 0.08,
            ChangeType.PARTY: 0.06,
        },
        events=tuple(events),
        seed=seed,
    )
