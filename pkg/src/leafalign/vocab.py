"""Concept vocabulary, caption templating and a deterministic hashing tokenizer.

A *concept* is one (crop, condition) class, where the condition is either a
disease name or the literal "healthy". Each concept renders to exactly one
caption per context mode:

    long, diseased:  "<prompt> <crop> leaves diseased by <condition>
                      with symptoms of <description>"
    long, healthy:   "<prompt> <crop> healthy leaves with leaves appearing
                      normal and healthy"
    short:           "<prompt> <crop> <condition>"

Captions are tokenized by a fixed FNV-1a word hash so that identical text
always yields identical token ids on every platform. Token id 0 is reserved
for padding.
"""

import re
from dataclasses import dataclass, field

from .errors import (
    DuplicateConcept,
    InvalidConcept,
    MissingDescription,
    ParseError,
)

HEALTHY = "healthy"

#: Context modes accepted by render_caption.
MODES = ("long", "short")

_WORD_RE = re.compile(r"\w+")

# FNV-1a 64-bit constants; chosen because the hash is trivially portable.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _normalize(text):
    """Case-fold and collapse all whitespace runs to single spaces."""
    return " ".join(str(text).lower().split())


@dataclass(frozen=True)
class Concept:
    """One (crop, condition) class with its position in the label space."""

    class_id: int
    crop: str
    condition: str
    description: str = ""

    @property
    def is_healthy(self):
        return self.condition == HEALTHY


@dataclass(frozen=True)
class Caption:
    """Rendered caption text for one concept."""

    text: str
    concept_id: int


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length token ids for one caption; id 0 is padding."""

    ids: tuple
    pad_count: int

    def __len__(self):
        return len(self.ids)


@dataclass
class ConceptVocabulary:
    """Ordered concept list with lookup by class_id and by (crop, condition)."""

    concepts: list = field(default_factory=list)

    def __post_init__(self):
        self._by_name = {(c.crop, c.condition): c for c in self.concepts}

    @property
    def K(self):
        return len(self.concepts)

    def __len__(self):
        return len(self.concepts)

    def __iter__(self):
        return iter(self.concepts)

    def by_id(self, class_id):
        return self.concepts[class_id]

    def by_name(self, crop, condition):
        return self._by_name[(_normalize(crop), _normalize(condition))]

    def crops(self):
        """Distinct crop names in first-seen order."""
        return list(dict.fromkeys(c.crop for c in self.concepts))

    def conditions(self):
        """Distinct condition names in first-seen order."""
        return list(dict.fromkeys(c.condition for c in self.concepts))


def build_vocabulary(records):
    """Build a ConceptVocabulary from (crop, condition, description) records.

    Fields are case-folded and whitespace-normalized before templating, so
    records from different sources compare consistently. class_id follows
    input order starting at 0.

    Raises:
        InvalidConcept: empty crop or condition after normalization.
        DuplicateConcept: repeated (crop, condition) pair.
    """
    if not records:
        raise InvalidConcept("build_vocabulary: records must be non-empty")
    concepts = []
    seen = set()
    for crop, condition, description in records:
        crop = _normalize(crop)
        condition = _normalize(condition)
        description = _normalize(description)
        if not crop or not condition:
            raise InvalidConcept(
                f"build_vocabulary: empty crop or condition in record {len(concepts)}"
            )
        key = (crop, condition)
        if key in seen:
            raise DuplicateConcept(f"build_vocabulary: duplicate concept {key}")
        seen.add(key)
        concepts.append(Concept(len(concepts), crop, condition, description))
    return ConceptVocabulary(concepts)


def render_caption(concept, mode="long", prompt="a photo of"):
    """Render the caption for one concept.

    Long mode uses the symptom-description template (healthy concepts get the
    fixed healthy-leaf phrasing); short mode is the class-name-only ablation.

    Raises:
        MissingDescription: long mode for a diseased concept whose
            description is empty.
    """
    if mode not in MODES:
        raise ValueError(f"render_caption: unknown mode {mode!r}")
    if mode == "short":
        text = f"{prompt} {concept.crop} {concept.condition}"
    elif concept.is_healthy:
        text = (
            f"{prompt} {concept.crop} healthy leaves with leaves "
            f"appearing normal and healthy"
        )
    else:
        if not concept.description.strip():
            raise MissingDescription(
                f"render_caption: concept ({concept.crop}, {concept.condition}) "
                f"has no description for long mode"
            )
        text = (
            f"{prompt} {concept.crop} leaves diseased by {concept.condition} "
            f"with symptoms of {concept.description}"
        )
    return Caption(text=_normalize(text), concept_id=concept.class_id)


def _fnv1a(word):
    h = _FNV_OFFSET
    for byte in word.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def tokenize(caption, max_length=77, vocab_size=4096):
    """Map a caption to a fixed-length id sequence via FNV-1a word hashing.

    Words are the lowercase ``\\w+`` runs of the text. Each word hashes to
    ``1 + fnv1a(word) % (vocab_size - 1)``; id 0 is reserved for padding.
    Sequences longer than max_length are truncated.
    """
    if max_length < 1:
        raise ValueError("tokenize: max_length must be >= 1")
    if vocab_size < 2:
        raise ValueError("tokenize: vocab_size must be >= 2")
    text = caption.text if isinstance(caption, Caption) else str(caption)
    words = _WORD_RE.findall(text.lower())[:max_length]
    ids = [1 + _fnv1a(w) % (vocab_size - 1) for w in words]
    pad_count = max_length - len(ids)
    ids.extend([0] * pad_count)
    return TokenSequence(ids=tuple(ids), pad_count=pad_count)


# --- vocabulary file I/O ----------------------------------------------------

def parse_vocab_lines(lines, start_line=1):
    """Parse tab-separated crop/condition/description lines into records.

    Raises ParseError with the 1-based line number on malformed lines.
    """
    records = []
    for offset, line in enumerate(lines):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) == 2:
            parts.append("")
        if len(parts) != 3:
            raise ParseError(
                f"vocabulary line {start_line + offset}: expected 3 tab-separated "
                f"fields, got {len(parts)}"
            )
        records.append(tuple(parts))
    return records


def load_vocabulary(path):
    """Read a tab-separated vocabulary file (crop, condition, description)."""
    with open(path, encoding="utf-8") as fh:
        records = parse_vocab_lines(fh)
    return build_vocabulary(records)


def save_vocabulary(vocabulary, path):
    with open(path, "w", encoding="utf-8") as fh:
        for c in vocabulary:
            fh.write(f"{c.crop}\t{c.condition}\t{c.description}\n")
