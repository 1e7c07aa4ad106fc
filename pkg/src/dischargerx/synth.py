"""Synthetic discharge-note corpora for data-free testing.

The real corpus is registration-gated, so tests and demos run on generated
visits: each target medication gets trigger tokens that appear in the
admission text exactly when the medication is prescribed at discharge,
labels are drawn from configurable marginals and pairwise joints, and the
notes can be rendered back to raw heading-structured text that the parser
round-trips.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .notes import (
    ADMISSION_SECTIONS,
    NUM_MEDICATIONS,
    Medication,
    ParsedNote,
    RawNote,
    SectionType,
    load_med_aliases,
    load_section_aliases,
    load_stopwords,
    normalize_tokens,
)


class InvalidSpec(ValueError):
    pass


@dataclass
class MedSpec:
    name: str
    prob: float
    triggers: list[str]


@dataclass
class PairSpec:
    """Joint label distribution for one medication pair.

    p_both / p_first_only / p_second_only are the probabilities of the
    (1,1), (1,0) and (0,1) cells; the remainder is (0,0).
    """

    first: int
    second: int
    p_both: float
    p_first_only: float = 0.0
    p_second_only: float = 0.0


@dataclass
class SyntheticSpec:
    notes: int
    meds: list[MedSpec]
    pairs: list[PairSpec] = field(default_factory=list)
    filler_vocab_size: int = 120
    tokens_per_section: int = 8
    trigger_repeats: int = 2
    admission_mirror_prob: float = 0.0
    admission_extra_meds: list[str] = field(default_factory=list)
    admission_extra_prob: float = 0.0

    def validate(self) -> None:
        if self.notes < 1:
            raise InvalidSpec("notes must be >= 1")
        if len(self.meds) != NUM_MEDICATIONS:
            raise InvalidSpec(f"expected {NUM_MEDICATIONS} medication entries")
        names = [m.name for m in self.meds]
        if len(set(names)) != len(names):
            raise InvalidSpec("medication names must be unique")
        for m in self.meds:
            if not 0.0 <= m.prob <= 1.0:
                raise InvalidSpec(f"marginal probability {m.prob} outside [0, 1]")
        paired: set[int] = set()
        for p in self.pairs:
            cells = (p.p_both, p.p_first_only, p.p_second_only)
            if any(not 0.0 <= c <= 1.0 for c in cells) or sum(cells) > 1.0 + 1e-12:
                raise InvalidSpec("pair cell probabilities must lie in [0, 1] and sum to <= 1")
            if p.first == p.second:
                raise InvalidSpec("pair indices must differ")
            for idx in (p.first, p.second):
                if not 0 <= idx < NUM_MEDICATIONS:
                    raise InvalidSpec(f"pair index {idx} out of range")
                if idx in paired:
                    raise InvalidSpec(f"medication {idx} appears in more than one pair")
                paired.add(idx)
        if not 0.0 <= self.admission_mirror_prob <= 1.0:
            raise InvalidSpec("admission_mirror_prob outside [0, 1]")
        if not 0.0 <= self.admission_extra_prob <= 1.0:
            raise InvalidSpec("admission_extra_prob outside [0, 1]")
        # Every draw all-zero would make generation loop forever.
        p_none = 1.0
        for i, m in enumerate(self.meds):
            if i not in paired:
                p_none *= 1.0 - m.prob
        for p in self.pairs:
            p_none *= max(0.0, 1.0 - p.p_both - p.p_first_only - p.p_second_only)
        if p_none >= 1.0 - 1e-12:
            raise InvalidSpec("label distribution puts all mass on the empty set")

    def to_dict(self) -> dict:
        return {
            "notes": self.notes,
            "meds": [{"name": m.name, "prob": m.prob, "triggers": m.triggers} for m in self.meds],
            "pairs": [
                {
                    "first": p.first,
                    "second": p.second,
                    "p_both": p.p_both,
                    "p_first_only": p.p_first_only,
                    "p_second_only": p.p_second_only,
                }
                for p in self.pairs
            ],
            "filler_vocab_size": self.filler_vocab_size,
            "tokens_per_section": self.tokens_per_section,
            "trigger_repeats": self.trigger_repeats,
            "admission_mirror_prob": self.admission_mirror_prob,
            "admission_extra_meds": self.admission_extra_meds,
            "admission_extra_prob": self.admission_extra_prob,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticSpec":
        spec = cls(
            notes=int(obj["notes"]),
            meds=[
                MedSpec(name=m["name"], prob=float(m["prob"]), triggers=list(m["triggers"]))
                for m in obj["meds"]
            ],
            pairs=[
                PairSpec(
                    first=int(p["first"]),
                    second=int(p["second"]),
                    p_both=float(p["p_both"]),
                    p_first_only=float(p.get("p_first_only", 0.0)),
                    p_second_only=float(p.get("p_second_only", 0.0)),
                )
                for p in obj.get("pairs", [])
            ],
            filler_vocab_size=int(obj.get("filler_vocab_size", 120)),
            tokens_per_section=int(obj.get("tokens_per_section", 8)),
            trigger_repeats=int(obj.get("trigger_repeats", 2)),
            admission_mirror_prob=float(obj.get("admission_mirror_prob", 0.0)),
            admission_extra_meds=list(obj.get("admission_extra_meds", [])),
            admission_extra_prob=float(obj.get("admission_extra_prob", 0.0)),
        )
        spec.validate()
        return spec


def load_spec(path) -> SyntheticSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return SyntheticSpec.from_dict(json.load(fh))


def save_spec(spec: SyntheticSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)


DEFAULT_TRIGGERS = (
    "alphax",
    "betax",
    "gammax",
    "deltax",
    "epsilax",
    "zetax",
    "etax",
    "thetax",
)


def trigger_corpus_spec(notes: int = 2000) -> SyntheticSpec:
    """Independent labels with one deterministic trigger token per medication."""
    marginals = (0.55, 0.5, 0.45, 0.4, 0.35, 0.3, 0.3, 0.25)
    return SyntheticSpec(
        notes=notes,
        meds=[
            MedSpec(name=med.generic_name, prob=marginals[med], triggers=[DEFAULT_TRIGGERS[med]])
            for med in Medication
        ],
        admission_mirror_prob=0.5,
        admission_extra_meds=["aspirin", "atorvastatin", "insulin", "warfarin"],
        admission_extra_prob=0.3,
    )


def correlated_pair_spec(notes: int = 5000, first: int = 2, second: int = 3) -> SyntheticSpec:
    """Two strongly co-prescribed medications amid independent ones.

    The paired cells give a 0.9 co-occurrence rate with 0.92 marginals,
    i.e. a clearly positive correlation; the remaining medications share
    one common marginal so that neither ranking measure systematically
    favors rare partners.
    """
    spec = trigger_corpus_spec(notes)
    for i, med in enumerate(spec.meds):
        if i not in (first, second):
            med.prob = 0.92
    spec.pairs = [
        PairSpec(first=first, second=second, p_both=0.9, p_first_only=0.02, p_second_only=0.02)
    ]
    spec.admission_mirror_prob = 1.0
    spec.admission_extra_meds = []
    spec.admission_extra_prob = 0.0
    return spec


def identity_corpus_spec(notes: int = 2000) -> SyntheticSpec:
    """Discharge medications exactly mirror admission medications."""
    spec = trigger_corpus_spec(notes)
    spec.admission_mirror_prob = 1.0
    spec.admission_extra_meds = []
    spec.admission_extra_prob = 0.0
    return spec


def _filler_vocabulary(spec: SyntheticSpec) -> list[str]:
    reserved = set(load_stopwords())
    for med in spec.meds:
        reserved.update(med.triggers)
        reserved.add(med.name)
    reserved.update(spec.admission_extra_meds)
    consonants = "bcdfglmnprstvz"
    vowels = "aeiou"
    words = []
    for c1 in consonants:
        for v1 in vowels:
            for c2 in consonants:
                for v2 in vowels:
                    word = c1 + v1 + c2 + v2
                    if word not in reserved:
                        words.append(word)
                    if len(words) == spec.filler_vocab_size:
                        return words
    raise InvalidSpec("filler_vocab_size too large")


def _draw_labels(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    paired = {p.first for p in spec.pairs} | {p.second for p in spec.pairs}
    for _ in range(1000):
        labels = np.zeros(NUM_MEDICATIONS, dtype=np.int8)
        for p in spec.pairs:
            u = rng.random()
            if u < p.p_both:
                labels[p.first] = labels[p.second] = 1
            elif u < p.p_both + p.p_first_only:
                labels[p.first] = 1
            elif u < p.p_both + p.p_first_only + p.p_second_only:
                labels[p.second] = 1
        for i, med in enumerate(spec.meds):
            if i not in paired and rng.random() < med.prob:
                labels[i] = 1
        if labels.any():
            return labels
    raise InvalidSpec("could not draw a non-empty label set in 1000 tries")


_DOSES = ("5", "10", "20", "25", "40", "50", "81", "100")
_FREQS = ("daily", "BID", "TID", "qhs")


def _bullet_list(names: list[str]) -> str:
    # dose and schedule are fixed per drug name, so a medication's line is
    # byte-identical across notes and only list membership varies
    lines = []
    for i, name in enumerate(names):
        shown = name.capitalize() if (i + len(name)) % 2 else name
        dose = _DOSES[sum(name.encode()) % len(_DOSES)]
        freq = _FREQS[len(name) % len(_FREQS)]
        lines.append(f"{i + 1}. {shown} {dose}mg PO {freq}")
    return "\n".join(lines)


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int) -> list[ParsedNote]:
    """Generate spec.notes parsed visits, deterministically under seed."""
    spec.validate()
    rng = np.random.default_rng(seed)
    filler = _filler_vocabulary(spec)
    med_alias_map = load_med_aliases()
    aliases_by_med: dict[Medication, list[str]] = {med: [] for med in Medication}
    for alias, med in med_alias_map.items():
        aliases_by_med[med].append(alias)

    def filler_tokens(n: int) -> list[str]:
        return [filler[j] for j in rng.integers(len(filler), size=n)]

    notes = []
    low = max(1, spec.tokens_per_section // 2)
    for visit in range(spec.notes):
        labels = _draw_labels(spec, rng)
        positive = [Medication(i) for i in np.flatnonzero(labels)]

        body_tokens: dict[SectionType, list[str]] = {
            kind: filler_tokens(int(rng.integers(low, spec.tokens_per_section + 1)))
            for kind in ADMISSION_SECTIONS
        }
        # Triggers land in the narrative history sections, shuffled in place
        # so filter windows see them in varied contexts.
        for med in positive:
            for trig in spec.meds[med].triggers:
                for kind in (SectionType.HISTORY_PRESENT_ILLNESS, SectionType.PAST_MEDICAL_HISTORY):
                    for _ in range(spec.trigger_repeats):
                        pos = int(rng.integers(len(body_tokens[kind]) + 1))
                        body_tokens[kind].insert(pos, trig)

        admission_meds = set()
        for med in positive:
            if rng.random() < spec.admission_mirror_prob:
                admission_meds.add(spec.meds[med].name)
        for extra in spec.admission_extra_meds:
            if rng.random() < spec.admission_extra_prob:
                admission_meds.add(extra)

        sections = {kind: " ".join(tokens) for kind, tokens in body_tokens.items()}
        sections[SectionType.ADMISSION_MEDICATIONS] = _bullet_list(sorted(admission_meds))
        discharge_names = [
            aliases_by_med[med][rng.integers(len(aliases_by_med[med]))] for med in positive
        ]
        sections[SectionType.DISCHARGE_MEDICATIONS] = _bullet_list(discharge_names)

        admission_text = "\n".join(sections[kind] for kind in ADMISSION_SECTIONS)
        notes.append(
            ParsedNote(
                visit_id=f"synth-{visit:05d}",
                sections=sections,
                tokens=normalize_tokens(admission_text),
                admission_meds=frozenset(admission_meds),
                labels=tuple(int(b) for b in labels),
            )
        )
    return notes


_COVERAGE_FILLER = (
    "balo", "cedu", "dima", "fopa", "gine", "hota", "kemi", "lupo",
    "masi", "nevo", "pika", "rodu", "sabe", "tilo", "vamu", "zore",
)


def alias_coverage_corpus(count: int = 20) -> list[tuple[RawNote, ParsedNote]]:
    """Deterministic raw notes exercising every heading and medication alias.

    Heading and medication spellings are cycled round robin, so with the
    default count each alias in both tables (including the brand names)
    appears at least once.  Returns (raw, expected-parse) pairs.
    """
    aliases_by_type: dict[SectionType, list[str]] = {}
    for alias, kind in load_section_aliases().items():
        aliases_by_type.setdefault(kind, []).append(alias)
    med_aliases: dict[Medication, list[str]] = {med: [] for med in Medication}
    for alias, med in load_med_aliases().items():
        med_aliases[med].append(alias)
    med_counter = {med: 0 for med in Medication}

    pairs = []
    for k in range(count):
        labels = tuple(1 if (k + j) % 8 < 3 else 0 for j in range(NUM_MEDICATIONS))
        positive = [Medication(j) for j, bit in enumerate(labels) if bit]

        sections: dict[SectionType, str] = {}
        for s, kind in enumerate(ADMISSION_SECTIONS):
            if kind is SectionType.ADMISSION_MEDICATIONS:
                continue
            n = len(_COVERAGE_FILLER)
            sections[kind] = " ".join(_COVERAGE_FILLER[(k + 3 * s + w) % n] for w in range(3))
        admission_names = sorted(med.generic_name for med in positive)
        sections[SectionType.ADMISSION_MEDICATIONS] = "\n".join(
            f"{i + 1}. {name} {_DOSES[i % len(_DOSES)]}mg PO {_FREQS[i % len(_FREQS)]}"
            for i, name in enumerate(admission_names)
        )
        discharge_lines = []
        for i, med in enumerate(positive):
            options = med_aliases[med]
            shown = options[med_counter[med] % len(options)]
            med_counter[med] += 1
            if med_counter[med] % 2 == 0:
                shown = shown.capitalize()
            discharge_lines.append(
                f"{i + 1}. {shown} {_DOSES[i % len(_DOSES)]}mg PO {_FREQS[i % len(_FREQS)]}"
            )
        sections[SectionType.DISCHARGE_MEDICATIONS] = "\n".join(discharge_lines)

        preamble = "Admission Date: 2140-01-01  Discharge Date: 2140-01-09"
        lines = [preamble, ""]
        order = list(ADMISSION_SECTIONS) + [SectionType.DISCHARGE_MEDICATIONS]
        for kind in order:
            options = aliases_by_type[kind]
            heading = options[k % len(options)]
            if k % 3 == 0:
                heading = heading.title()
            elif k % 3 == 1:
                heading = heading.upper()
            lines.append(f"{heading}:")
            lines.append(sections[kind])
            lines.append("")
        raw = RawNote(visit_id=f"cover-{k:03d}", text="\n".join(lines))

        admission_text = "\n".join(sections[kind] for kind in ADMISSION_SECTIONS)
        expected = ParsedNote(
            visit_id=raw.visit_id,
            sections={SectionType.OTHER: preamble, **sections},
            tokens=normalize_tokens(admission_text),
            admission_meds=frozenset(admission_names),
            labels=labels,
        )
        pairs.append((raw, expected))
    return pairs


def render_note_text(note: ParsedNote, rng: np.random.Generator) -> str:
    """Render a parsed note back into raw heading-structured note text.

    Heading aliases are sampled per section so a rendered corpus exercises
    the whole alias table; parsing the result reproduces the note's
    sections, tokens and labels.
    """
    aliases_by_type: dict[SectionType, list[str]] = {}
    for alias, kind in load_section_aliases().items():
        aliases_by_type.setdefault(kind, []).append(alias)
    lines = ["Admission Date: 2140-01-01  Discharge Date: 2140-01-09", ""]
    for kind, body in note.sections.items():
        if kind is SectionType.OTHER:
            continue
        options = aliases_by_type[kind]
        heading = options[rng.integers(len(options))]
        lines.append(f"{heading.title()}:")
        lines.append(body)
        lines.append("")
    return "\n".join(lines)
