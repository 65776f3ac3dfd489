"""Prompt construction for zero/few-shot and domain-enhanced strategies."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from . import _toml
from .codes import MODES, Mode
from .errors import ConfigError, ParseError, SizeError
from .features import feature_label
from .narrative import NarrativeTemplate, TripNarrative, encode_trip
from .sampling import largest_remainder
from .survey import Dataset

TURNS = "turns"
INLINE = "inline"


@dataclass(frozen=True)
class Strategy:
    shots: int = 0
    domain_enhanced: bool = False

    def __post_init__(self):
        if self.shots < 0:
            raise ConfigError("shots must be >= 0")

    @property
    def paradigm(self) -> str:
        if self.shots == 0:
            return "zero-shot"
        return "one-shot" if self.shots == 1 else "few-shot"

    @property
    def name(self) -> str:
        base = "zero-shot" if self.shots == 0 else f"few-shot-{self.shots}"
        return base + ("+domain" if self.domain_enhanced else "")

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        domain = name.endswith("+domain")
        base = name[: -len("+domain")] if domain else name
        if base == "zero-shot":
            return cls(0, domain)
        m = re.fullmatch(r"few-shot-(\d+)", base)
        if not m or int(m.group(1)) < 1:
            raise ConfigError(f"unrecognised strategy {name!r}")
        return cls(int(m.group(1)), domain)


@dataclass(frozen=True)
class Demonstration:
    narrative: TripNarrative
    answer: Mode


@dataclass(frozen=True)
class DomainKnowledge:
    mode_definitions: Mapping[Mode, str]
    decision_steps: tuple[tuple[str, str], ...]
    feature_priority: tuple[str, ...]
    role: str = ""

    def __post_init__(self):
        missing = [m.value for m in MODES if m not in self.mode_definitions]
        if missing:
            raise ConfigError(f"mode definitions missing for {missing}")
        if len(self.decision_steps) != 3:
            raise ConfigError("exactly three decision steps are required")

    def with_priority(self, features: Sequence[str]) -> "DomainKnowledge":
        return DomainKnowledge(self.mode_definitions, self.decision_steps, tuple(features), self.role)


def _read_domain_file(path=None) -> dict:
    if path is None:
        text = resources.files("transmode").joinpath("data/domain_knowledge.toml").read_text(encoding="utf-8")
        return _toml.loads(text)
    with open(path, "rb") as fh:
        return _toml.load(fh)


def load_domain_knowledge(feature_priority: Sequence[str], path=None) -> DomainKnowledge:
    raw = _read_domain_file(path)
    defs = {Mode.from_label(k): v.strip() for k, v in raw["mode_definitions"].items()}
    steps = tuple((s["title"].strip(), s["body"].strip()) for s in raw["steps"])
    return DomainKnowledge(defs, steps, tuple(feature_priority), raw.get("role", "").strip())


def default_role() -> str:
    return _read_domain_file()["role"].strip()


@dataclass(frozen=True)
class PromptSpec:
    system_text: str
    demonstrations: tuple[Demonstration, ...]
    query: TripNarrative
    answer_format_instruction: str
    strategy: Strategy = Strategy()
    demo_style: str = TURNS
    followups: tuple[tuple[str, str], ...] = field(default=())

    def to_messages(self) -> list[dict]:
        msgs = [{"role": "system", "content": self.system_text}]
        query_text = f"{self.query.text}\n\n{self.answer_format_instruction}"
        if self.demo_style == INLINE and self.demonstrations:
            blocks = [f"Example {i}:\n{d.narrative.text}\nAnswer: {d.answer.value}"
                      for i, d in enumerate(self.demonstrations, 1)]
            body = "Solved examples:\n\n" + "\n\n".join(blocks) + "\n\nTrip to predict:\n" + query_text
            msgs.append({"role": "user", "content": body})
        else:
            for d in self.demonstrations:
                msgs.append({"role": "user", "content": d.narrative.text})
                msgs.append({"role": "assistant", "content": d.answer.value})
            msgs.append({"role": "user", "content": query_text})
        for role, text in self.followups:
            msgs.append({"role": role, "content": text})
        return msgs

    def to_json(self) -> str:
        return json.dumps({"trip_id": self.query.record_id, "strategy": self.strategy.name,
                           "messages": self.to_messages()}, ensure_ascii=False)

    def with_reminder(self, reply: str) -> "PromptSpec":
        reminder = ("Your previous reply did not end with a single valid mode. Reply with exactly one of: "
                    + ", ".join(m.value for m in MODES) + ".")
        return PromptSpec(self.system_text, self.demonstrations, self.query, self.answer_format_instruction,
                          self.strategy, self.demo_style,
                          self.followups + (("assistant", reply), ("user", reminder)))


# --------------------------------------------------------------------------
# demonstrations


def select_demonstrations(train: Dataset, k: int, seed: int,
                          template: NarrativeTemplate | None = None) -> list[Demonstration]:
    """Mode-stratified demonstration sample from the training split.

    With ``k`` at least the number of present modes, every mode gets one
    example and the rest are allotted by training frequency (largest
    remainder). With fewer slots than modes, the most frequent modes get
    one example each. Within a mode, picks and the final order are seeded.
    """
    if k < 0:
        raise SizeError("k must be non-negative")
    if k > len(train):
        raise SizeError(f"k={k} exceeds training size {len(train)}")
    if k == 0:
        return []
    by_mode: dict[Mode, list] = {m: [] for m in MODES}
    for r in train.records:
        by_mode[r.observed_mode].append(r)
    present = [m for m in MODES if by_mode[m]]
    counts = [len(by_mode[m]) for m in present]
    if k >= len(present):
        extra = largest_remainder(k - len(present), counts, caps=[c - 1 for c in counts])
        take = [1 + e for e in extra]
    else:
        ranked = sorted(range(len(present)), key=lambda i: (-counts[i], i))[:k]
        take = [1 if i in ranked else 0 for i in range(len(present))]
    rng = np.random.default_rng(seed)
    picked = []
    for m, t in zip(present, take):
        pool = by_mode[m]
        for j in rng.permutation(len(pool))[:t]:
            picked.append(pool[j])
    order = rng.permutation(len(picked))
    return [Demonstration(encode_trip(picked[i], template), picked[i].observed_mode) for i in order]


# --------------------------------------------------------------------------
# prompt assembly


def answer_instruction(domain_enhanced: bool) -> str:
    names = ", ".join(m.value for m in MODES)
    if domain_enhanced:
        return ("Work through Step 1, Step 2 and Step 3, then write your final answer on the last line "
                f"as exactly one of: {names}.")
    return f"Answer with exactly one of the following modes on the final line: {names}."


def domain_system_text(dk: DomainKnowledge) -> str:
    lines = [dk.role or default_role(), "", "Mode Definitions:"]
    for m in MODES:
        lines.append(f"- {m.value}: {dk.mode_definitions[m]}")
    lines += ["", "Decision Process:"]
    feature_list = "\n".join(f"  {i}. {feature_label(f)}" for i, f in enumerate(dk.feature_priority, 1))
    for i, (title, body) in enumerate(dk.decision_steps, 1):
        lines.append(f"Step {i}: {title}")
        lines.append(body.replace("{features}", feature_list))
    return "\n".join(lines)


def build_prompt(strategy: Strategy, demos: Sequence[Demonstration], query: TripNarrative,
                 dk: DomainKnowledge | None = None, demo_style: str = TURNS) -> PromptSpec:
    if strategy.domain_enhanced and dk is None:
        raise ConfigError("domain-enhanced strategy requires DomainKnowledge")
    if len(demos) != strategy.shots:
        raise ConfigError(f"{strategy.name} expects {strategy.shots} demonstrations, got {len(demos)}")
    if any(d.narrative.record_id == query.record_id for d in demos):
        raise ConfigError(f"query trip {query.record_id} appears among its demonstrations")
    if demo_style not in (TURNS, INLINE):
        raise ConfigError(f"unknown demo_style {demo_style!r}")
    system = domain_system_text(dk) if strategy.domain_enhanced else default_role()
    return PromptSpec(system, tuple(demos), query, answer_instruction(strategy.domain_enhanced),
                      strategy, demo_style)


# --------------------------------------------------------------------------
# reply parsing

_SYNONYMS: tuple[tuple[str, Mode], ...] = (
    (r"suv\s*/\s*crossover", Mode.SUV_CROSSOVER),
    (r"suvs?", Mode.SUV_CROSSOVER),
    (r"crossovers?", Mode.SUV_CROSSOVER),
    (r"sport utility vehicles?", Mode.SUV_CROSSOVER),
    (r"pick-?up(?: trucks?)?", Mode.PICKUP_TRUCK),
    (r"school\s*bus(?:es)?", Mode.SCHOOL_BUS),
    (r"cars?", Mode.CAR),
    (r"automobiles?", Mode.CAR),
    (r"sedan", Mode.CAR),
    (r"(?:mini)?vans?", Mode.VAN),
    (r"walk(?:s|ed|ing)?", Mode.WALK),
    (r"on foot", Mode.WALK),
)
_PATTERNS = [(re.compile(rf"(?<![a-z]){p}(?![a-z])", re.IGNORECASE), m) for p, m in _SYNONYMS]


def parse_prediction(reply: str) -> Mode:
    """Mode named on the last non-empty line of ``reply``.

    Raises ParseError when that line names no mode or more than one.
    """
    lines = [ln for ln in (reply or "").splitlines() if ln.strip()]
    if not lines:
        raise ParseError(reply or "", "empty reply")
    last = lines[-1]
    found = {m for pat, m in _PATTERNS if pat.search(last)}
    if len(found) == 1:
        return found.pop()
    raise ParseError(reply, "no mode named" if not found else f"ambiguous: {sorted(m.value for m in found)}")
