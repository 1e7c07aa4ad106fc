"""Parse semi-structured discharge notes into admission-time information.

A discharge note is a sequence of sections, each introduced by a heading
line ("Chief Complaint: ...").  This module segments the note on known
heading aliases, pulls out the discharge-medication labels and the
admission medications, and normalizes the remaining admission text into
a token sequence.  All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum, IntEnum
from importlib import resources
from typing import Iterable, Iterator


class SectionType(str, Enum):
    """Canonical section categories recognized in a discharge note."""

    ALLERGY = "allergy"
    CHIEF_COMPLAINT = "chief_complaint"
    HISTORY_PRESENT_ILLNESS = "history_present_illness"
    PAST_MEDICAL_HISTORY = "past_medical_history"
    SOCIAL_HISTORY = "social_history"
    FAMILY_HISTORY = "family_history"
    INITIAL_EXAM = "initial_exam"
    ADMISSION_MEDICATIONS = "admission_medications"
    DISCHARGE_MEDICATIONS = "discharge_medications"
    OTHER = "other"


# Admission-time information, in canonical order. Discharge medications are
# deliberately absent: they are the prediction target, never model input.
ADMISSION_SECTIONS = (
    SectionType.ALLERGY,
    SectionType.CHIEF_COMPLAINT,
    SectionType.HISTORY_PRESENT_ILLNESS,
    SectionType.PAST_MEDICAL_HISTORY,
    SectionType.SOCIAL_HISTORY,
    SectionType.FAMILY_HISTORY,
    SectionType.INITIAL_EXAM,
    SectionType.ADMISSION_MEDICATIONS,
)


class Medication(IntEnum):
    """The eight target antihypertensives, indexed in descending corpus
    frequency order."""

    METOPROLOL = 0
    FUROSEMIDE = 1
    LISINOPRIL = 2
    AMLODIPINE = 3
    ATENOLOL = 4
    HCTZ = 5
    DILTIAZEM = 6
    CARVEDILOL = 7

    @property
    def generic_name(self) -> str:
        return self.name.lower()


NUM_MEDICATIONS = len(Medication)


class MalformedNote(ValueError):
    """Raised when a raw note cannot be parsed at all (e.g. empty text)."""


@dataclass(frozen=True)
class RawNote:
    visit_id: str
    text: str


@dataclass(frozen=True)
class ParsedNote:
    """One patient visit reduced to admission-time inputs and labels.

    ``tokens`` is the normalized admission-note word sequence, ``labels``
    a binary vector over the eight target medications (at least one bit
    set), and ``admission_meds`` the raw medication strings found in the
    admission-medication section.
    """

    visit_id: str
    sections: dict[SectionType, str]
    tokens: tuple[str, ...]
    admission_meds: frozenset[str]
    labels: tuple[int, ...]


def _data_lines(name: str) -> Iterator[str]:
    text = resources.files("dischargerx.data").joinpath(name).read_text("utf-8")
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            yield line


def load_section_aliases() -> dict[str, SectionType]:
    aliases: dict[str, SectionType] = {}
    for line in _data_lines("section_aliases.tsv"):
        alias, _, kind = line.partition("\t")
        aliases[alias.strip()] = SectionType(kind.strip())
    return aliases


def load_med_aliases() -> dict[str, Medication]:
    aliases: dict[str, Medication] = {}
    for line in _data_lines("med_aliases.tsv"):
        alias, _, med = line.partition("\t")
        aliases[alias.strip()] = Medication[med.strip().upper()]
    return aliases


def load_stopwords() -> frozenset[str]:
    return frozenset(_data_lines("stopwords.txt"))


_SECTION_ALIASES = load_section_aliases()
_MED_ALIASES = load_med_aliases()
_STOPWORDS = load_stopwords()
_MED_PATTERNS = [
    (re.compile(r"\b%s\b" % re.escape(alias), re.IGNORECASE), med)
    for alias, med in _MED_ALIASES.items()
]
_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")
_BULLET_PREFIX = re.compile(r"^\s*(?:\d+\s*[.):-]|[-*])?\s*")
_LEADING_WORDS = re.compile(r"^([A-Za-z]+(?:\s+[A-Za-z]+)*)")


def classify_heading(heading: str) -> SectionType | None:
    """Map a lowercased, trimmed heading string to its section type.

    Returns None for headings outside the alias table; the alias table is
    matched exactly, so every alias resolves to a single type.
    """
    return _SECTION_ALIASES.get(heading)


def split_sections(text: str) -> list[tuple[str, str]]:
    """Segment note text into (heading, body) pairs.

    A line opens a new section when its text before the first colon,
    lowercased and trimmed, is a known heading alias.  The body is any
    text after that colon plus all following lines up to the next
    recognized heading.  Text before the first recognized heading is
    returned as a single ("", body) entry.
    """
    if not text:
        return []
    sections: list[tuple[str, list[str]]] = []
    preamble: list[str] = []
    for line in text.splitlines():
        head, colon, rest = line.partition(":")
        if colon and classify_heading(head.strip().lower()) is not None:
            sections.append((head.strip().lower(), [rest]))
        elif sections:
            sections[-1][1].append(line)
        else:
            preamble.append(line)
    out: list[tuple[str, str]] = []
    if any(line.strip() for line in preamble):
        out.append(("", "\n".join(preamble).strip()))
    for heading, body_lines in sections:
        out.append((heading, "\n".join(body_lines).strip()))
    return out


def extract_discharge_meds(body: str) -> tuple[int, ...]:
    """Scan discharge-medication text for the eight target medications.

    Returns the binary label vector; a bit is set when any generic or
    brand alias of that medication appears as a whole word, case
    insensitively.  An all-zero vector means the visit should be
    discarded upstream.
    """
    labels = [0] * NUM_MEDICATIONS
    for pattern, med in _MED_PATTERNS:
        if pattern.search(body):
            labels[med] = 1
    return tuple(labels)


def extract_admission_meds(body: str) -> frozenset[str]:
    """Collect one medication string per bullet line of the admission list.

    Each line is reduced to its leading run of alphabetic words (dosage
    and route are dropped), lowercased.
    """
    meds = set()
    for line in body.splitlines():
        line = _BULLET_PREFIX.sub("", line)
        match = _LEADING_WORDS.match(line)
        if match:
            meds.add(" ".join(match.group(1).lower().split()))
    return frozenset(meds)


def normalize_tokens(text: str) -> tuple[str, ...]:
    """Lowercase, split on non-alphanumeric runs, drop stopwords."""
    return tuple(
        tok
        for tok in _TOKEN_SPLIT.split(text.lower())
        if tok and tok not in _STOPWORDS
    )


def parse_note(raw: RawNote) -> ParsedNote | None:
    """Parse one raw note; returns None for visits with no target label.

    Raises MalformedNote when the note text is empty.  Repeated sections
    of the same type are concatenated.  The token sequence covers the
    admission sections only, in canonical order.
    """
    if not raw.text.strip():
        raise MalformedNote(f"note {raw.visit_id!r} has empty text")
    sections: dict[SectionType, str] = {}
    for heading, body in split_sections(raw.text):
        kind = classify_heading(heading) if heading else SectionType.OTHER
        assert kind is not None  # split_sections only emits known headings
        if kind in sections:
            sections[kind] = sections[kind] + "\n" + body
        else:
            sections[kind] = body
    labels = extract_discharge_meds(sections.get(SectionType.DISCHARGE_MEDICATIONS, ""))
    if not any(labels):
        return None
    admission_text = "\n".join(
        sections[kind] for kind in ADMISSION_SECTIONS if kind in sections
    )
    return ParsedNote(
        visit_id=raw.visit_id,
        sections=sections,
        tokens=normalize_tokens(admission_text),
        admission_meds=extract_admission_meds(
            sections.get(SectionType.ADMISSION_MEDICATIONS, "")
        ),
        labels=labels,
    )


# ---------------------------------------------------------------------------
# Newline-delimited JSON interchange


def read_raw_notes(path) -> Iterator[RawNote]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                yield RawNote(visit_id=str(obj["visit_id"]), text=obj["text"])


def note_to_dict(note: ParsedNote) -> dict:
    return {
        "visit_id": note.visit_id,
        "sections": {kind.value: text for kind, text in note.sections.items()},
        "tokens": list(note.tokens),
        "admission_meds": sorted(note.admission_meds),
        "labels": list(note.labels),
    }


def note_from_dict(obj: dict) -> ParsedNote:
    return ParsedNote(
        visit_id=str(obj["visit_id"]),
        sections={SectionType(k): v for k, v in obj["sections"].items()},
        tokens=tuple(obj["tokens"]),
        admission_meds=frozenset(obj["admission_meds"]),
        labels=tuple(int(b) for b in obj["labels"]),
    )


def write_parsed_notes(notes: Iterable[ParsedNote], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for note in notes:
            fh.write(json.dumps(note_to_dict(note), sort_keys=True) + "\n")


def read_parsed_notes(path) -> list[ParsedNote]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(note_from_dict(json.loads(line)))
    return out
