"""Synthetic trip-survey generator used for offline fixtures and tests."""
from __future__ import annotations

import csv
import math
from typing import Mapping

import numpy as np

from . import codes
from .codes import Area, Gender, Mode, Ownership
from .errors import ConfigError
from .sampling import largest_remainder
from .survey import Dataset, TripRecord

# Observed shares of the six modes in the reference survey subset; they sum
# to 0.970 over the six study modes and are renormalised before use.
RAW_MODE_SHARES: dict[Mode, float] = {
    Mode.CAR: 0.379,
    Mode.SUV_CROSSOVER: 0.335,
    Mode.PICKUP_TRUCK: 0.107,
    Mode.WALK: 0.068,
    Mode.VAN: 0.060,
    Mode.SCHOOL_BUS: 0.021,
}
_raw_total = sum(RAW_MODE_SHARES.values())
DEFAULT_MODE_SHARES: dict[Mode, float] = {m: s / _raw_total for m, s in RAW_MODE_SHARES.items()}

EXTRA_FEATURES = ("household_drivers", "household_workers", "population_density", "trip_start_hour", "weekend")

_VEHICLE_MODES = (Mode.CAR, Mode.SUV_CROSSOVER, Mode.PICKUP_TRUCK, Mode.VAN)
_ADULT_PURPOSES = ["home", "work", "shopping", "social", "medical", "meals", "transport_someone", "other"]
_ADULT_PURPOSE_P = [0.33, 0.17, 0.17, 0.12, 0.04, 0.08, 0.06, 0.03]
_OWNERSHIP = [Ownership.OWNED_MORTGAGE, Ownership.OWNED_OUTRIGHT, Ownership.RENTED, Ownership.OTHER]


def normalize_shares(shares: Mapping[Mode | str, float] | None) -> dict[Mode, float]:
    if shares is None:
        return dict(DEFAULT_MODE_SHARES)
    out = {m: 0.0 for m in codes.MODES}
    for key, v in shares.items():
        m = key if isinstance(key, Mode) else Mode.from_label(key)
        if v < 0 or not math.isfinite(v):
            raise ConfigError(f"share for {m.value} must be a non-negative number")
        out[m] = float(v)
    total = sum(out.values())
    if abs(total - 1.0) > 1e-6:
        raise ConfigError(f"mode shares sum to {total:.6f}, expected 1")
    return out


def mode_counts(n: int, shares: Mapping[Mode, float]) -> dict[Mode, int]:
    alloc = largest_remainder(n, [shares[m] for m in codes.MODES])
    return dict(zip(codes.MODES, alloc))


def _speed_minutes(rng, distance: float, lo: float, hi: float) -> float:
    speed = rng.uniform(lo, hi)
    return round(max(distance / speed * 60.0, 1.0), 1)


def _draw(rng: np.random.Generator, mode: Mode, trip_id: str) -> TripRecord:
    urban = rng.random() < (0.45 if mode is Mode.PICKUP_TRUCK else 0.8)
    msa = int(rng.choice([1, 2, 3, 4, 5])) if urban else int(rng.choice([1, 2, 6], p=[0.3, 0.2, 0.5]))
    rail = bool(urban and msa >= 4 and rng.random() < 0.6)
    household = int(rng.choice([1, 2, 3, 4, 5, 6], p=[0.2, 0.32, 0.18, 0.17, 0.08, 0.05]))

    if mode is Mode.SCHOOL_BUS:
        age = int(rng.integers(5, 18))
        household = max(household, 3)
        purpose = "school"
    elif mode is Mode.WALK:
        age = int(rng.integers(8, 86))
        purpose = str(rng.choice(["home", "social", "shopping", "school", "meals", "other"],
                                 p=[0.35, 0.25, 0.15, 0.1, 0.1, 0.05]))
    else:
        age = int(rng.integers(16, 86)) if rng.random() < 0.82 else int(rng.integers(5, 16))
        purpose = str(rng.choice(_ADULT_PURPOSES, p=_ADULT_PURPOSE_P)) if age >= 18 else \
            str(rng.choice(["school", "home", "social"], p=[0.4, 0.4, 0.2]))
    if mode is Mode.VAN:
        household = max(household, int(rng.integers(3, 7)))
    if age < 18:
        household = max(household, 2)

    gender = Gender.MALE if rng.random() < (0.7 if mode is Mode.PICKUP_TRUCK else 0.48) else Gender.FEMALE
    if rng.random() < 0.02:
        gender = Gender.OTHER
    licensed = age >= 16 and rng.random() < 0.9
    employed = 18 <= age < 70 and rng.random() < 0.7

    if mode is Mode.WALK:
        vehicles = 0 if rng.random() < 0.35 else int(rng.integers(1, 3))
    elif mode is Mode.SCHOOL_BUS:
        vehicles = int(rng.integers(0, 4))
    else:
        vehicles = int(rng.integers(1, 5))

    income_mu = {Mode.SUV_CROSSOVER: 7.5, Mode.VAN: 6.5, Mode.PICKUP_TRUCK: 6.0, Mode.CAR: 6.0,
                 Mode.WALK: 4.5, Mode.SCHOOL_BUS: 5.0}[mode]
    income = int(np.clip(round(rng.normal(income_mu, 2.2)), 1, 11))
    ownership = _OWNERSHIP[int(rng.choice(4, p=[0.45, 0.2, 0.3, 0.05] if income > 5 else [0.2, 0.15, 0.6, 0.05]))]

    if mode is Mode.WALK:
        distance = round(float(rng.uniform(0.1, 1.6)), 1)
        duration = _speed_minutes(rng, distance, 2.0, 4.0)
    elif mode is Mode.SCHOOL_BUS:
        distance = round(float(rng.uniform(0.8, 9.0)), 1)
        duration = _speed_minutes(rng, distance, 8.0, 25.0)
    else:
        scale = 1.6 if mode is Mode.PICKUP_TRUCK else 1.0
        distance = round(float(np.clip(rng.lognormal(math.log(5.5 * scale), 0.9), 0.3, 150.0)), 1)
        duration = _speed_minutes(rng, distance, 10.0, 55.0)

    is_driver = mode in _VEHICLE_MODES and licensed and rng.random() < 0.85
    gas = round(float(rng.uniform(290, 480)))
    drivers = max(int(licensed), min(household, int(rng.integers(0, 3)) + int(licensed)))
    workers = min(household, int(employed) + int(rng.integers(0, 2)))
    density = float(round(rng.lognormal(math.log(4000 if urban else 300), 0.6)))
    hour = int(rng.integers(6, 10)) if purpose in ("school", "work") else int(rng.integers(6, 23))

    return TripRecord(
        trip_id=trip_id,
        age=age,
        gender=gender,
        has_license=licensed,
        employed=employed,
        household_size=household,
        vehicle_count=vehicles,
        income_bracket=income,
        home_ownership=ownership,
        trip_purpose=purpose,
        distance_miles=distance,
        duration_minutes=duration,
        urban_rural=Area.URBAN if urban else Area.RURAL,
        msa_population_bracket=msa,
        rail_available=rail,
        gas_price_cents=float(gas),
        is_driver=is_driver,
        mode_code=codes.MODE_TO_CODE[mode],
        companion_count=int(rng.integers(0, 3)),
        driver_identified=True if mode in _VEHICLE_MODES else None,
        extras={
            "household_drivers": float(drivers),
            "household_workers": float(workers),
            "population_density": density,
            "trip_start_hour": float(hour),
            "weekend": float(rng.random() < 0.25),
        },
    )


def generate_synthetic(n: int, seed: int = 0, mode_shares: Mapping[Mode | str, float] | None = None) -> Dataset:
    """Draw ``n`` internally consistent trips with the requested mode mix.

    Per-mode counts follow largest-remainder rounding of ``share * n``.
    Attributes are correlated with the mode (short walks, school-age
    school-bus riders, licensed adult drivers) and every record passes the
    speed and sociodemographic consistency filters.
    """
    if n < 0:
        raise ConfigError("n must be non-negative")
    shares = normalize_shares(mode_shares)
    counts = mode_counts(n, shares)
    rng = np.random.default_rng(seed)
    modes = [m for m in codes.MODES for _ in range(counts[m])]
    order = rng.permutation(len(modes))
    width = max(6, len(str(n)))
    records = tuple(_draw(rng, modes[j], f"syn{seed}-{i:0{width}d}") for i, j in enumerate(order))
    return Dataset(records=records, source=f"synthetic(n={n}, seed={seed})")


CSV_COLUMNS = (
    "trip_id", "age", "gender", "has_license", "employed", "household_size", "vehicle_count",
    "income_bracket", "home_ownership", "trip_purpose", "distance_miles", "duration_minutes",
    "urban_rural", "msa_population_bracket", "rail_available", "gas_price_cents", "is_driver", "mode",
    "companion_count", "driver_identified",
)
_GENDER_OUT = {Gender.MALE: "1", Gender.FEMALE: "2", Gender.OTHER: "other"}
_OWNERSHIP_OUT = {o: str(c) for c, o in codes.OWNERSHIP_CODES.items()}


def write_csv(ds: Dataset, path) -> None:
    """Write records in the column layout accepted by ``load_records``."""
    extras = sorted(set().union(*(r.extras for r in ds.records))) if ds.records else []

    def b(v):
        return "" if v is None else ("1" if v else "0")

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS + tuple(extras))
        for r in ds.records:
            w.writerow([
                r.trip_id, r.age, _GENDER_OUT[r.gender], b(r.has_license), b(r.employed), r.household_size,
                r.vehicle_count, r.income_bracket, _OWNERSHIP_OUT[r.home_ownership],
                codes.PURPOSE_KEYS[r.trip_purpose], repr(r.distance_miles), repr(r.duration_minutes),
                "1" if r.urban_rural is Area.URBAN else "2", r.msa_population_bracket, b(r.rail_available),
                repr(r.gas_price_cents), b(r.is_driver), r.mode_code,
                "" if r.companion_count is None else r.companion_count, b(r.driver_identified),
            ] + [repr(r.extras.get(e, float("nan"))) for e in extras])
