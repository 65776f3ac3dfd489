"""Trip records, survey loading, consistency filters and stratified splits."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import codes
from .codes import Area, Gender, Mode, Ownership
from .errors import SchemaError, SizeError
from .sampling import largest_remainder

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TripRecord:
    trip_id: str
    age: int
    gender: Gender
    has_license: bool
    employed: bool
    household_size: int
    vehicle_count: int
    income_bracket: int
    home_ownership: Ownership
    trip_purpose: str
    distance_miles: float
    duration_minutes: float
    urban_rural: Area
    msa_population_bracket: int
    rail_available: bool
    gas_price_cents: float
    is_driver: bool
    mode_code: int
    companion_count: int | None = None
    driver_identified: bool | None = None
    extras: Mapping[str, float] = field(default_factory=dict, hash=False)

    @property
    def observed_mode(self) -> Mode | None:
        """Study mode, or None when the survey mode is outside the six."""
        return codes.STUDY_MODE_CODES.get(self.mode_code)

    @property
    def speed_mph(self) -> float:
        return 60.0 * self.distance_miles / self.duration_minutes


@dataclass(frozen=True)
class FilterEvent:
    trip_id: str
    rule: str
    detail: str

    def to_json(self) -> str:
        return json.dumps({"trip_id": self.trip_id, "rule": self.rule, "detail": self.detail})


@dataclass(frozen=True)
class Rejection:
    row: int
    trip_id: str | None
    reason: str
    detail: str


@dataclass(frozen=True)
class LoadReport:
    accepted: int
    rejected: tuple[Rejection, ...] = ()


@dataclass(frozen=True)
class Dataset:
    records: tuple[TripRecord, ...]
    source: str = "<memory>"
    log: tuple[FilterEvent, ...] = ()
    notes: tuple[str, ...] = ()

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def trip_ids(self) -> list[str]:
        return [r.trip_id for r in self.records]

    def derive(self, records: Iterable[TripRecord], events: Iterable[FilterEvent] = (),
               notes: Iterable[str] = ()) -> "Dataset":
        new_notes = tuple(n for n in notes if n not in self.notes)
        return replace(self, records=tuple(records), log=self.log + tuple(events),
                       notes=self.notes + new_notes)

    def mode_counts(self) -> dict[Mode, int]:
        counts = {m: 0 for m in codes.MODES}
        for r in self.records:
            m = r.observed_mode
            if m is not None:
                counts[m] += 1
        return counts


def write_filter_log(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in ds.log:
            fh.write(ev.to_json() + "\n")


# --------------------------------------------------------------------------
# loading

REQUIRED_FIELDS = (
    "trip_id", "age", "gender", "has_license", "employed", "household_size",
    "vehicle_count", "income_bracket", "home_ownership", "trip_purpose",
    "distance_miles", "duration_minutes", "urban_rural", "msa_population_bracket",
    "rail_available", "gas_price_cents", "is_driver", "mode",
)
OPTIONAL_FIELDS = ("companion_count", "driver_identified")

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "2", "false", "f", "no", "n"}


class _RowError(Exception):
    def __init__(self, reason, detail):
        self.reason = reason
        self.detail = detail


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise _RowError("ParseFailure", f"not a boolean: {s!r}")


def _parse_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise _RowError("ParseFailure", f"not a number: {s!r}") from None
    if not math.isfinite(v):
        raise _RowError("ParseFailure", f"not finite: {s!r}")
    return v


def _parse_int(s: str) -> int:
    v = _parse_float(s)
    if v != int(v):
        raise _RowError("ParseFailure", f"not an integer: {s!r}")
    return int(v)


def _code_or_key(s: str, by_code: Mapping[int, object], by_key: Mapping[str, object], what: str):
    v = s.strip()
    try:
        code = int(float(v))
    except ValueError:
        code = None
    if code is not None:
        if code in by_code:
            return by_code[code]
    else:
        hit = by_key.get(v.lower())
        if hit is not None:
            return hit
    raise _RowError("UnknownCode", f"unknown {what}: {s!r}")


_GENDER_KEYS = {"male": Gender.MALE, "m": Gender.MALE, "female": Gender.FEMALE, "f": Gender.FEMALE,
                "other": Gender.OTHER, "other/unknown": Gender.OTHER, "unknown": Gender.OTHER}
_OWN_KEYS = {o.value.lower(): o for o in Ownership}
_AREA_CODES = {1: Area.URBAN, 2: Area.RURAL}
_AREA_KEYS = {"urban": Area.URBAN, "rural": Area.RURAL}
_MODE_KEYS = {**{name.lower(): c for c, name in codes.SURVEY_MODES.items()},
              **{m.value.lower(): c for m, c in codes.MODE_TO_CODE.items()},
              **{m.name.lower(): c for m, c in codes.MODE_TO_CODE.items()}}


def _parse_gender(s: str) -> Gender:
    v = s.strip()
    try:
        return codes.GENDER_CODES.get(int(float(v)), Gender.OTHER)
    except ValueError:
        pass
    try:
        return _GENDER_KEYS[v.lower()]
    except KeyError:
        raise _RowError("UnknownCode", f"unknown gender: {s!r}") from None


def _positive(v: float, name: str) -> float:
    if v <= 0:
        raise _RowError("OutOfRange", f"{name} must be > 0, got {v}")
    return v


def _parse_row(raw: Mapping[str, str], schema: Mapping[str, str], extras: Sequence[str]) -> TripRecord:
    def get(name):
        return raw[schema[name]]

    age = _parse_int(get("age"))
    if age < 0:
        raise _RowError("OutOfRange", f"age must be >= 0, got {age}")
    household = _parse_int(get("household_size"))
    if household < 1:
        raise _RowError("OutOfRange", f"household_size must be >= 1, got {household}")
    vehicles = _parse_int(get("vehicle_count"))
    if vehicles < 0:
        raise _RowError("OutOfRange", f"vehicle_count must be >= 0, got {vehicles}")
    income = _parse_int(get("income_bracket"))
    if income not in codes.INCOME_BRACKETS:
        raise _RowError("UnknownCode", f"unknown income bracket: {income}")
    msa = _parse_int(get("msa_population_bracket"))
    if msa not in codes.MSA_BRACKETS:
        raise _RowError("UnknownCode", f"unknown MSA bracket: {msa}")

    companion = None
    if "companion_count" in schema and raw.get(schema["companion_count"], "").strip() != "":
        companion = _parse_int(get("companion_count"))
    driver_identified = None
    if "driver_identified" in schema and raw.get(schema["driver_identified"], "").strip() != "":
        driver_identified = _parse_bool(get("driver_identified"))

    return TripRecord(
        trip_id=get("trip_id").strip(),
        age=age,
        gender=_parse_gender(get("gender")),
        has_license=_parse_bool(get("has_license")),
        employed=_parse_bool(get("employed")),
        household_size=household,
        vehicle_count=vehicles,
        income_bracket=income,
        home_ownership=_code_or_key(get("home_ownership"), codes.OWNERSHIP_CODES, _OWN_KEYS, "ownership"),
        trip_purpose=_code_or_key(get("trip_purpose"), {c: k for c, (k, _) in codes.PURPOSES.items()},
                                  {k: k for k in codes.PURPOSE_KEYS}, "trip purpose"),
        distance_miles=_positive(_parse_float(get("distance_miles")), "distance_miles"),
        duration_minutes=_positive(_parse_float(get("duration_minutes")), "duration_minutes"),
        urban_rural=_code_or_key(get("urban_rural"), _AREA_CODES, _AREA_KEYS, "urban/rural"),
        msa_population_bracket=msa,
        rail_available=_parse_bool(get("rail_available")),
        gas_price_cents=_positive(_parse_float(get("gas_price_cents")), "gas_price_cents"),
        is_driver=_parse_bool(get("is_driver")),
        mode_code=_code_or_key(get("mode"), {c: c for c in codes.SURVEY_MODES}, _MODE_KEYS, "mode"),
        companion_count=companion,
        driver_identified=driver_identified,
        extras={name: _parse_float(raw[name]) for name in extras},
    )


def load_records(path, schema: Mapping[str, str] | None = None,
                 extras: Sequence[str] = ()) -> tuple[Dataset, LoadReport]:
    """Read a comma-separated survey export into a Dataset.

    ``schema`` maps record field names (plus ``mode``) to column headers;
    unmapped fields default to a column of the same name. ``extras`` lists
    additional numeric columns carried along as candidate features.
    Malformed rows are rejected into the LoadReport rather than raising.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    schema = dict(schema or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for name in REQUIRED_FIELDS:
            schema.setdefault(name, name)
        for name in OPTIONAL_FIELDS:
            if name not in schema and name in header:
                schema[name] = name
        missing = [f"{k} -> {schema[k]}" for k in REQUIRED_FIELDS if schema[k] not in header]
        missing += [f"extra {e}" for e in extras if e not in header]
        if missing:
            raise SchemaError(f"missing required columns: {', '.join(missing)}")
        optional_present = {k for k in OPTIONAL_FIELDS if k in schema and schema[k] in header}
        schema = {k: v for k, v in schema.items() if k in REQUIRED_FIELDS or k in optional_present}

        records, rejected = [], []
        for rownum, raw in enumerate(reader, start=2):
            tid = raw.get(schema["trip_id"])
            try:
                records.append(_parse_row(raw, schema, extras))
            except _RowError as exc:
                rejected.append(Rejection(rownum, tid, exc.reason, exc.detail))
            except (TypeError, AttributeError):
                rejected.append(Rejection(rownum, tid, "ParseFailure", "short row"))
    notes = tuple(f"column {k} absent" for k in OPTIONAL_FIELDS if k not in optional_present)
    report = LoadReport(accepted=len(records), rejected=tuple(rejected))
    if rejected:
        log.warning("%s: rejected %d of %d rows", path, len(rejected), len(rejected) + len(records))
    return Dataset(records=tuple(records), source=path, notes=notes), report


# --------------------------------------------------------------------------
# filters


@dataclass(frozen=True)
class SpeedLimits:
    walk_max_mph: float = 5.0
    motorized_min_mph: float = 2.0
    motorized_max_mph: float = 90.0


def _apply(ds: Dataset, check: Callable[[TripRecord], tuple[str, str] | None], notes=()) -> Dataset:
    kept, events = [], []
    for r in ds.records:
        hit = check(r)
        if hit is None:
            kept.append(r)
        else:
            events.append(FilterEvent(r.trip_id, *hit))
    return ds.derive(kept, events, notes)


def speed_consistency_filter(ds: Dataset, limits: SpeedLimits = SpeedLimits()) -> Dataset:
    """Drop trips whose distance/duration speed is implausible for the mode."""

    def check(r: TripRecord):
        speed = r.speed_mph
        if r.mode_code in codes.WALK_CODES and speed > limits.walk_max_mph:
            return "walk_speed_high", f"walk at {speed:.2f} mph > {limits.walk_max_mph}"
        if r.mode_code in codes.MOTORIZED_CODES:
            if speed < limits.motorized_min_mph:
                return "motorized_speed_low", f"unrealistically low {speed:.2f} mph < {limits.motorized_min_mph}"
            if speed > limits.motorized_max_mph:
                return "motorized_speed_high", f"{speed:.2f} mph > {limits.motorized_max_mph}"
        return None

    return _apply(ds, check)


def sociodemographic_filter(ds: Dataset, min_driving_age: int = 16,
                            min_unaccompanied_transit_age: int = 10) -> Dataset:
    """Drop trips whose traveler attributes contradict the reported travel."""
    has_companion = any(r.companion_count is not None for r in ds.records)
    has_driver_id = any(r.driver_identified is not None for r in ds.records)
    notes = []
    if ds.records and not has_companion:
        notes.append("companion_count unavailable: unaccompanied-child transit rule skipped")
        log.info(notes[-1])
    if ds.records and not has_driver_id:
        notes.append("driver_identified unavailable: driverless private-vehicle rule skipped")
        log.info(notes[-1])

    def check(r: TripRecord):
        if r.is_driver and r.age < min_driving_age:
            return "underage_driver", f"driver aged {r.age} < {min_driving_age}"
        if r.is_driver and not r.has_license:
            return "unlicensed_driver", "driver without a license"
        if (r.mode_code in codes.PUBLIC_TRANSIT_CODES and r.age < min_unaccompanied_transit_age
                and r.companion_count == 0):
            return "unaccompanied_child_transit", f"age {r.age} alone on transit"
        if r.mode_code in codes.PRIVATE_VEHICLE_CODES and r.driver_identified is False:
            return "no_identified_driver", "private vehicle trip without an identified driver"
        return None

    return _apply(ds, check, notes)


def restrict_modes(ds: Dataset) -> Dataset:
    def check(r: TripRecord):
        if r.observed_mode is None:
            return "excluded_mode", codes.SURVEY_MODES.get(r.mode_code, str(r.mode_code))
        return None

    return _apply(ds, check)


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitSpec:
    sample_size: int
    seed: int = 0


def stratified_allocation(counts: Sequence[int], sample_size: int) -> list[int]:
    return largest_remainder(sample_size, [float(c) for c in counts], caps=list(counts))


def stratified_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Draw a mode-stratified test set of ``spec.sample_size`` records.

    Returns ``(train, test)``; both keep the dataset's record order.
    """
    if spec.sample_size > len(ds):
        raise SizeError(f"sample_size {spec.sample_size} exceeds dataset size {len(ds)}")
    if spec.sample_size < 0:
        raise SizeError("sample_size must be non-negative")
    by_mode: dict[Mode, list[int]] = {m: [] for m in codes.MODES}
    for i, r in enumerate(ds.records):
        m = r.observed_mode
        if m is None:
            raise SchemaError(f"record {r.trip_id} has an excluded mode; call restrict_modes first")
        by_mode[m].append(i)
    alloc = stratified_allocation([len(by_mode[m]) for m in codes.MODES], spec.sample_size)
    rng = np.random.default_rng(spec.seed)
    chosen: set[int] = set()
    for m, take in zip(codes.MODES, alloc):
        idx = by_mode[m]
        if not idx:
            continue
        perm = rng.permutation(len(idx))
        chosen.update(idx[j] for j in perm[:take])
    test = [r for i, r in enumerate(ds.records) if i in chosen]
    train = [r for i, r in enumerate(ds.records) if i not in chosen]
    return ds.derive(train), ds.derive(test)
