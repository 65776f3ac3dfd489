"""Render trip records as natural-language narratives."""
from __future__ import annotations

import json
import string
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from typing import Iterable, Mapping

from . import codes
from .codes import Area, Gender
from .errors import ConfigError, EncodingError
from .survey import TripRecord

# placeholder -> record field it consumes
SLOT_FEATURES: dict[str, str] = {
    "age": "age",
    "person": "gender",
    "driver": "has_license",
    "employment": "employed",
    "household": "household_size",
    "vehicles": "vehicle_count",
    "income": "income_bracket",
    "ownership": "home_ownership",
    "purpose": "trip_purpose",
    "distance": "distance_miles",
    "duration": "duration_minutes",
    "area": "urban_rural",
    "rail": "rail_available",
    "msa": "msa_population_bracket",
    "gas_price": "gas_price_cents",
}
# derived from age/gender; may repeat
GRAMMAR_SLOTS = frozenset({"article", "Subject", "subject", "be", "live"})

_PRONOUNS = {
    Gender.FEMALE: ("female", "she", "is", "lives"),
    Gender.MALE: ("male", "he", "is", "lives"),
    Gender.OTHER: ("person", "they", "are", "live"),
}


@dataclass(frozen=True)
class NarrativeTemplate:
    text: str

    def __post_init__(self):
        names = [f for _, f, _, _ in string.Formatter().parse(self.text) if f is not None]
        unknown = sorted(set(names) - set(SLOT_FEATURES) - GRAMMAR_SLOTS)
        if unknown:
            raise ConfigError(f"unknown template placeholders: {unknown}")
        for slot in SLOT_FEATURES:
            if names.count(slot) != 1:
                raise ConfigError(f"placeholder {{{slot}}} must appear exactly once, found {names.count(slot)}")

    @property
    def features(self) -> tuple[str, ...]:
        names = [f for _, f, _, _ in string.Formatter().parse(self.text) if f in SLOT_FEATURES]
        return tuple(SLOT_FEATURES[n] for n in names)

    @classmethod
    def from_file(cls, path) -> "NarrativeTemplate":
        with open(path, encoding="utf-8") as fh:
            return cls(fh.read().strip())


def default_template() -> NarrativeTemplate:
    text = resources.files("transmode").joinpath("data/narrative_template.txt").read_text(encoding="utf-8")
    return NarrativeTemplate(text.strip())


@dataclass(frozen=True)
class TripNarrative:
    record_id: str
    text: str
    features_used: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps({"trip_id": self.record_id, "text": self.text})


def format_quantity(value: float, places: int = 1) -> str:
    """Round half-up to ``places`` decimals and drop trailing zeros (10.0 -> '10')."""
    q = Decimal(repr(float(value))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    s = format(q, "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def format_dollars(cents: float) -> str:
    d = (Decimal(repr(float(cents))) / 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return format(d, "f")


def _plural(count_text: str, singular: str, plural: str) -> str:
    return f"{count_text} {singular if count_text == '1' else plural}"


def _article(age_text: str) -> str:
    return "an" if age_text.startswith("8") or age_text in ("11", "18") else "a"


def _require(record: TripRecord, slot: str):
    value = getattr(record, SLOT_FEATURES[slot], None)
    if value is None:
        raise EncodingError(slot)
    return value


def slot_values(record: TripRecord) -> dict[str, str]:
    age = str(int(_require(record, "age")))
    gender = _require(record, "person")
    noun, subj, be, live = _PRONOUNS[Gender(gender)]
    msa_code = _require(record, "msa")
    msa = ("outside any MSA" if msa_code == codes.MSA_NONE
           else f"in an MSA of {codes.format_bracket(msa_code, codes.MSA_BRACKETS)}")
    return {
        "article": _article(age),
        "age": age,
        "person": noun,
        "Subject": subj.capitalize(),
        "subject": subj,
        "be": be,
        "live": live,
        "driver": "a driver" if _require(record, "driver") else "not a driver",
        "employment": "employed" if _require(record, "employment") else "not employed",
        "household": _plural(str(int(_require(record, "household"))), "person", "people"),
        "vehicles": _plural(str(int(_require(record, "vehicles"))), "vehicle", "vehicles"),
        "income": codes.format_bracket(_require(record, "income"), codes.INCOME_BRACKETS),
        "ownership": codes.OWNERSHIP_PHRASES[_require(record, "ownership")],
        "purpose": codes.format_bracket(_require(record, "purpose"), codes.PURPOSE_PHRASES),
        "distance": _plural(format_quantity(_require(record, "distance")), "mile", "miles"),
        "duration": _plural(format_quantity(_require(record, "duration")), "minute", "minutes"),
        "area": "an urban area" if Area(_require(record, "area")) is Area.URBAN else "a rural area",
        "rail": "access to rail transit" if _require(record, "rail") else "no access to rail transit",
        "msa": msa,
        "gas_price": format_dollars(_require(record, "gas_price")),
    }


def encode_trip(record: TripRecord, template: NarrativeTemplate | None = None) -> TripNarrative:
    template = template or default_template()
    text = template.text.format(**slot_values(record))
    return TripNarrative(record_id=record.trip_id, text=text, features_used=template.features)


def encode_all(records: Iterable[TripRecord], template: NarrativeTemplate | None = None) -> list[TripNarrative]:
    template = template or default_template()
    return [encode_trip(r, template) for r in records]


def check_coverage(template: NarrativeTemplate, selected: Iterable[str]) -> list[str]:
    """Selected features the template has no slot for."""
    have = set(template.features)
    return [f for f in selected if f not in have]


def write_narratives(narratives: Iterable[TripNarrative], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for n in narratives:
            fh.write(n.to_json() + "\n")


def load_narratives(path) -> Mapping[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out[d["trip_id"]] = d["text"]
    return out
