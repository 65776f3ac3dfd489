"""Closed code tables for survey categoricals.

Numeric codes are modeled on the public NHTS codebooks (TRPTRANS, HHFAMINC,
MSASIZE, WHYTRP1S, HOMEOWN, R_SEX) so survey exports can be loaded with a
column mapping alone. Loaders also accept the string keys directly.
"""
from __future__ import annotations

import enum
from typing import Mapping

from .errors import UnknownCode


class Mode(str, enum.Enum):
    CAR = "Car"
    VAN = "Van"
    SUV_CROSSOVER = "SUV/Crossover"
    PICKUP_TRUCK = "Pickup truck"
    SCHOOL_BUS = "School bus"
    WALK = "Walk"

    @property
    def label(self) -> str:
        return self.value

    @classmethod
    def from_label(cls, label: str) -> "Mode":
        for m in cls:
            if m.value.lower() == label.strip().lower() or m.name.lower() == label.strip().lower():
                return m
        raise UnknownCode(f"unknown mode label {label!r}")


MODES: tuple[Mode, ...] = tuple(Mode)
MODE_INDEX: dict[Mode, int] = {m: i for i, m in enumerate(MODES)}


class Gender(str, enum.Enum):
    FEMALE = "Female"
    MALE = "Male"
    OTHER = "Other/Unknown"


class Ownership(str, enum.Enum):
    OWNED_MORTGAGE = "OwnedMortgage"
    OWNED_OUTRIGHT = "OwnedOutright"
    RENTED = "Rented"
    OTHER = "Other"


class Area(str, enum.Enum):
    URBAN = "Urban"
    RURAL = "Rural"


# TRPTRANS: code -> survey mode name. Twenty modes plus "something else".
SURVEY_MODES: dict[int, str] = {
    1: "Walk",
    2: "Bicycle",
    3: "Car",
    4: "SUV",
    5: "Van",
    6: "Pickup truck",
    7: "Golf cart / Segway",
    8: "Motorcycle / Moped",
    9: "RV",
    10: "School bus",
    11: "Public or commuter bus",
    12: "Paratransit / Dial-a-ride",
    13: "Private / Charter / Tour / Shuttle bus",
    14: "City-to-city bus",
    15: "Amtrak / Commuter rail",
    16: "Subway / elevated / light rail / street car",
    17: "Taxi / limo",
    18: "Rental car",
    19: "Airplane",
    20: "Boat / ferry / water taxi",
    97: "Something else",
}

STUDY_MODE_CODES: dict[int, Mode] = {
    1: Mode.WALK,
    3: Mode.CAR,
    4: Mode.SUV_CROSSOVER,
    5: Mode.VAN,
    6: Mode.PICKUP_TRUCK,
    10: Mode.SCHOOL_BUS,
}
MODE_TO_CODE: dict[Mode, int] = {m: c for c, m in STUDY_MODE_CODES.items()}

WALK_CODES = frozenset({1})
MOTORIZED_CODES = frozenset({3, 4, 5, 6, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18})
PRIVATE_VEHICLE_CODES = frozenset({3, 4, 5, 6, 8, 9, 18})
PUBLIC_TRANSIT_CODES = frozenset({11, 12, 14, 15, 16})

# HHFAMINC
INCOME_BRACKETS: dict[int, str] = {
    1: "less than $10,000",
    2: "$10,000 to $14,999",
    3: "$15,000 to $24,999",
    4: "$25,000 to $34,999",
    5: "$35,000 to $49,999",
    6: "$50,000 to $74,999",
    7: "$75,000 to $99,999",
    8: "$100,000 to $124,999",
    9: "$125,000 to $149,999",
    10: "$150,000 to $199,999",
    11: "$200,000 or more",
}

# MSASIZE; code 6 is "not in an MSA"
MSA_BRACKETS: dict[int, str] = {
    1: "less than 250,000",
    2: "250,000 to 499,999",
    3: "500,000 to 999,999",
    4: "1,000,000 to 2,999,999",
    5: "3 million or more",
    6: "not in an MSA",
}
MSA_NONE = 6

# WHYTRP1S code -> (key, narrative phrase)
PURPOSES: dict[int, tuple[str, str]] = {
    1: ("home", "going home"),
    10: ("work", "work"),
    20: ("school", "school"),
    30: ("medical", "medical or dental services"),
    40: ("shopping", "shopping"),
    50: ("social", "social or recreational activities"),
    70: ("transport_someone", "transporting someone"),
    80: ("meals", "meals"),
    97: ("other", "other purposes"),
}
PURPOSE_KEYS: dict[str, int] = {key: code for code, (key, _) in PURPOSES.items()}
PURPOSE_PHRASES: dict[str, str] = {key: phrase for key, phrase in PURPOSES.values()}

OWNERSHIP_CODES: dict[int, Ownership] = {
    1: Ownership.OWNED_MORTGAGE,
    2: Ownership.RENTED,
    3: Ownership.OWNED_OUTRIGHT,
    97: Ownership.OTHER,
}
OWNERSHIP_PHRASES: dict[Ownership, str] = {
    Ownership.OWNED_MORTGAGE: "owned with a mortgage",
    Ownership.OWNED_OUTRIGHT: "owned outright",
    Ownership.RENTED: "rented",
    Ownership.OTHER: "held under another arrangement",
}

GENDER_CODES: dict[int, Gender] = {1: Gender.MALE, 2: Gender.FEMALE}


def format_bracket(code, table: Mapping) -> str:
    """Return the human-readable phrase for ``code`` in ``table``.

    >>> format_bracket(9, INCOME_BRACKETS)
    '$125,000 to $149,999'
    """
    try:
        return table[code]
    except (KeyError, TypeError):
        raise UnknownCode(f"code {code!r} not in table") from None
