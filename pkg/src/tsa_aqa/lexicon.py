"""FINA-style dive-number lexicon: code syntax, sub-action sequences, step counts.

The lexicon is an embedded data table of 52 action types rather than a
generative grammar: twist placement differs between code families (52xx/53xx/62xx
put the twist first, 51xx intersperses it inside the somersault), and a table
captures those exceptions exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence


class LexiconError(ValueError):
    """Base class for dive-code errors."""


class MalformedCodeError(LexiconError):
    """Code fails the dive-number syntax rules."""


class UnknownCodeError(LexiconError):
    """Syntactically valid code absent from the lexicon table."""


class TooFewBoundariesError(LexiconError):
    """Annotation does not carry enough step boundaries."""


class Phase(Enum):
    TAKE_OFF = "take_off"
    FLIGHT = "flight"
    ENTRY = "entry"


@dataclass(frozen=True)
class SubActionLabel:
    """One labeled phase of a dive.

    half_turns counts half rotations so arithmetic stays exact:
    "2.5 Soms.Pike" carries 5, "1 Twist" carries 2, take-offs and entries 0.
    """

    phase: Phase
    name: str
    half_turns: int

    def __post_init__(self) -> None:
        if self.half_turns < 0:
            raise ValueError(f"half_turns must be >= 0, got {self.half_turns}")


_CODE_RE = re.compile(r"^[1-6][0-9]{2,3}[ABCD]$")

# code -> (take-off, flight part, ...); the terminal Entry step is implicit.
_TABLE: dict[str, tuple[str, ...]] = {
    # forward group
    "101B": ("Forward", "0.5 Som.Pike"),
    "103B": ("Forward", "1.5 Soms.Pike"),
    "105B": ("Forward", "2.5 Soms.Pike"),
    "107B": ("Forward", "3.5 Soms.Pike"),
    "109B": ("Forward", "4.5 Soms.Pike"),
    "107C": ("Forward", "3.5 Soms.Tuck"),
    "109C": ("Forward", "4.5 Soms.Tuck"),
    # back group
    "201A": ("Back", "0.5 Som.Straight"),
    "201B": ("Back", "0.5 Som.Pike"),
    "201C": ("Back", "0.5 Som.Tuck"),
    "205B": ("Back", "2.5 Soms.Pike"),
    "207B": ("Back", "3.5 Soms.Pike"),
    "205C": ("Back", "2.5 Soms.Tuck"),
    "207C": ("Back", "3.5 Soms.Tuck"),
    # reverse group
    "301B": ("Reverse", "0.5 Som.Pike"),
    "305B": ("Reverse", "2.5 Soms.Pike"),
    "303C": ("Reverse", "1.5 Soms.Tuck"),
    "305C": ("Reverse", "2.5 Soms.Tuck"),
    "307C": ("Reverse", "3.5 Soms.Tuck"),
    # inward group
    "401B": ("Inward", "0.5 Som.Pike"),
    "403B": ("Inward", "1.5 Soms.Pike"),
    "405B": ("Inward", "2.5 Soms.Pike"),
    "407B": ("Inward", "3.5 Soms.Pike"),
    "405C": ("Inward", "2.5 Soms.Tuck"),
    "407C": ("Inward", "3.5 Soms.Tuck"),
    "409C": ("Inward", "4.5 Soms.Tuck"),
    # armstand group, no twist
    "612B": ("Arm.Fwd", "1 Som.Pike"),
    "614B": ("Arm.Fwd", "2 Soms.Pike"),
    "626B": ("Arm.Back", "3 Soms.Pike"),
    "626C": ("Arm.Back", "3 Soms.Tuck"),
    "636C": ("Arm.Reverse", "3 Soms.Tuck"),
    # twist-first families (52xx, 53xx, 61xx, 62xx)
    "5231D": ("Back", "0.5 Twist", "1.5 Soms.Pike"),
    "5233D": ("Back", "1.5 Twists", "1.5 Soms.Pike"),
    "5235D": ("Back", "2.5 Twists", "1.5 Soms.Pike"),
    "5237D": ("Back", "3.5 Twists", "1.5 Soms.Pike"),
    "5251B": ("Back", "0.5 Twist", "2.5 Soms.Pike"),
    "5253B": ("Back", "1.5 Twists", "2.5 Soms.Pike"),
    "5255B": ("Back", "2.5 Twists", "2.5 Soms.Pike"),
    "5331D": ("Reverse", "0.5 Twist", "1.5 Soms.Pike"),
    "5335D": ("Reverse", "2.5 Twists", "1.5 Soms.Pike"),
    "5337D": ("Reverse", "3.5 Twists", "1.5 Soms.Pike"),
    "5353B": ("Reverse", "1.5 Twists", "2.5 Soms.Pike"),
    "5355B": ("Reverse", "2.5 Twists", "2.5 Soms.Pike"),
    "6142D": ("Arm.Fwd", "1 Twist", "2 Soms.Pike"),
    "6241B": ("Arm.Back", "0.5 Twist", "2 Soms.Pike"),
    "6243D": ("Arm.Back", "1.5 Twists", "2 Soms.Pike"),
    "6245D": ("Arm.Back", "2.5 Twists", "2 Soms.Pike"),
    # twist-interspersed family (51xx): the somersault label appears twice
    "5132D": ("Forward", "1.5 Soms.Pike", "1 Twist", "1.5 Soms.Pike"),
    "5152B": ("Forward", "2.5 Soms.Pike", "1 Twist", "2.5 Soms.Pike"),
    "5154B": ("Forward", "2.5 Soms.Pike", "2 Twists", "2.5 Soms.Pike"),
    "5156B": ("Forward", "2.5 Soms.Pike", "3 Twists", "2.5 Soms.Pike"),
    "5172B": ("Forward", "3.5 Soms.Pike", "1 Twist", "3.5 Soms.Pike"),
}

_ENTRY = "Entry"
_TURN_RE = re.compile(r"^(\d+(?:\.5)?) ")


def _half_turns(name: str) -> int:
    m = _TURN_RE.match(name)
    if m is None:
        return 0
    return int(float(m.group(1)) * 2)


def _build_sequence(parts: tuple[str, ...]) -> tuple[SubActionLabel, ...]:
    steps = [SubActionLabel(Phase.TAKE_OFF, parts[0], 0)]
    steps.extend(SubActionLabel(Phase.FLIGHT, p, _half_turns(p)) for p in parts[1:])
    steps.append(SubActionLabel(Phase.ENTRY, _ENTRY, 0))
    return tuple(steps)


_SEQUENCES: dict[str, tuple[SubActionLabel, ...]] = {
    code: _build_sequence(parts) for code, parts in _TABLE.items()
}


def all_codes() -> tuple[str, ...]:
    """All 52 action codes, in a fixed deterministic order."""
    return tuple(sorted(_SEQUENCES))


def validate_code(code: str) -> str:
    """Check dive-number syntax; returns the code unchanged.

    Rules: 3-4 digits plus position letter A-D; first digit 1-6; only the
    twisting (5xxx) and armstand (6xxx) families use four digits.
    """
    if not isinstance(code, str) or not _CODE_RE.match(code):
        raise MalformedCodeError(f"malformed dive code: {code!r}")
    if len(code) == 5 and code[0] not in "56":
        raise MalformedCodeError(
            f"four-digit codes must start with 5 or 6: {code!r}"
        )
    return code


def parse_dive_code(code: str) -> tuple[SubActionLabel, ...]:
    """Resolve a dive number to its ordered sub-action sequence."""
    validate_code(code)
    try:
        return _SEQUENCES[code]
    except KeyError:
        raise UnknownCodeError(f"dive code not in lexicon: {code!r}") from None


def step_count(code: str) -> int:
    """Number of steps in the action procedure (3, 4, or 5)."""
    return len(parse_dive_code(code))


def canonical_transitions(boundaries: Sequence[int]) -> tuple[int, int]:
    """Collapse an annotated boundary list to the two canonical transitions.

    The first boundary is the take-off to flight switch, the last the flight
    to entry switch; interior boundaries subdivide the flight and are dropped
    so every action fits the fixed two-transition model.
    """
    if len(boundaries) < 2:
        raise TooFewBoundariesError(
            f"need at least 2 boundaries, got {len(boundaries)}"
        )
    first, last = int(boundaries[0]), int(boundaries[-1])
    if not first < last:
        raise TooFewBoundariesError(
            f"boundaries must be strictly increasing, got {boundaries!r}"
        )
    return first, last


def export_table(path) -> None:
    """Write the lexicon as a JSON document users can extend."""
    doc = [
        {
            "code": code,
            "steps": [
                {"phase": s.phase.value, "name": s.name, "half_turns": s.half_turns}
                for s in seq
            ],
        }
        for code, seq in sorted(_SEQUENCES.items())
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def import_table(path) -> dict[str, tuple[SubActionLabel, ...]]:
    """Load a lexicon JSON document (same schema as export_table)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    table: dict[str, tuple[SubActionLabel, ...]] = {}
    for row in doc:
        steps = tuple(
            SubActionLabel(Phase(s["phase"]), s["name"], int(s["half_turns"]))
            for s in row["steps"]
        )
        _check_sequence(row["code"], steps)
        table[row["code"]] = steps
    return table


def register(table: dict[str, tuple[SubActionLabel, ...]]) -> None:
    """Extend the active lexicon with externally loaded rows."""
    for code, steps in table.items():
        validate_code(code)
        _check_sequence(code, steps)
        _SEQUENCES[code] = steps


def _check_sequence(code: str, steps: Iterable[SubActionLabel]) -> None:
    steps = tuple(steps)
    if not 3 <= len(steps) <= 5:
        raise LexiconError(f"{code}: sequence length must be 3..5, got {len(steps)}")
    if steps[0].phase is not Phase.TAKE_OFF or steps[-1].phase is not Phase.ENTRY:
        raise LexiconError(f"{code}: sequence must run take-off -> ... -> entry")
    for a, b in zip(steps, steps[1:]):
        if a.name == b.name:
            raise LexiconError(f"{code}: adjacent steps share the name {a.name!r}")
