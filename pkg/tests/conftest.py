import sys
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from transmode.codes import Area, Gender, Ownership  # noqa: E402
from transmode.survey import Dataset, TripRecord  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

_CRITERIA: list[tuple[str, bool, str]] = []


@contextmanager
def criterion(name: str):
    """Record the outcome of an acceptance criterion for the terminal summary."""
    try:
        yield
    except BaseException as exc:
        _CRITERIA.append((name, False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"))
        raise
    _CRITERIA.append((name, True, ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, why in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({why})" if why else ""))


def make_record(trip_id="t", **kw) -> TripRecord:
    base = dict(
        trip_id=trip_id, age=40, gender=Gender.FEMALE, has_license=True, employed=True, household_size=2,
        vehicle_count=1, income_bracket=6, home_ownership=Ownership.OWNED_MORTGAGE, trip_purpose="work",
        distance_miles=5.0, duration_minutes=12.0, urban_rural=Area.URBAN, msa_population_bracket=4,
        rail_available=False, gas_price_cents=350.0, is_driver=True, mode_code=3,
    )
    base.update(kw)
    return TripRecord(**base)


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def synthetic_600():
    from transmode.synthetic import generate_synthetic
    return generate_synthetic(600, seed=0)


def dataset_of(records) -> Dataset:
    return Dataset(records=tuple(records))
