"""Synthetic crop/disease datasets and manifest files.

Feature geometry mirrors the structure the soft-target loss exploits: every
class mean is a weighted sum of a per-crop direction, a per-condition
direction and a per-class direction, so classes sharing a crop (or a
condition) are closer to each other than unrelated classes. Samples are the
class mean plus isotropic Gaussian noise.

The manifest format is line-oriented UTF-8 text::

    leafalign-manifest\t1
    feature_dim\t<f>
    num_concepts\t<K>
    num_samples\t<n>
    [concepts]
    <crop>\t<condition>\t<description>          (K lines)
    [samples]
    <sample_id>\t<split>\t<concept_id>\t<f0> <f1> ...   (n lines)

Feature values are written with repr(), which round-trips float64 exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DanglingReference,
    EmptySpec,
    InsufficientSamples,
    IoError,
    ParseError,
)
from .vocab import HEALTHY, ConceptVocabulary, build_vocabulary, parse_vocab_lines

SPLITS = ("train", "val", "test")

MANIFEST_MAGIC = "leafalign-manifest"
MANIFEST_VERSION = 1

# Word pools for synthetic symptom descriptions; combinations are drawn
# deterministically per class so long-context captions stay distinctive.
_TEXTURES = ("speckled", "powdery", "sunken", "ringed", "mottled", "angular",
             "raised", "blistered")
_TINTS = ("olive", "rust", "amber", "gray", "violet", "ochre", "sooty", "pale")
_PARTS = ("leaf margins", "veins", "upper surface", "lower surface",
          "petioles", "young shoots")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic dataset."""

    n_crops: int
    n_conditions: int
    classes: tuple  # populated (crop_index, condition_index) pairs
    samples_per_class: int
    feature_dim: int
    crop_signal: float = 1.0
    disease_signal: float = 1.0
    class_signal: float = 1.0
    noise_sigma: float = 0.1
    seed: int = 0

    def validate(self):
        if not self.classes:
            raise EmptySpec("generate_dataset: spec has no populated classes")
        if len(set(self.classes)) != len(self.classes):
            raise EmptySpec("generate_dataset: populated classes must be unique")
        if self.feature_dim < 2:
            raise EmptySpec("generate_dataset: feature_dim must be >= 2")
        for crop_i, cond_i in self.classes:
            if not (0 <= crop_i < self.n_crops and 0 <= cond_i < self.n_conditions):
                raise EmptySpec(
                    f"generate_dataset: class ({crop_i}, {cond_i}) outside the "
                    f"{self.n_crops}x{self.n_conditions} grid"
                )
        for name in ("crop_signal", "disease_signal", "class_signal"):
            if not np.isfinite(getattr(self, name)) or getattr(self, name) < 0:
                raise EmptySpec(f"generate_dataset: {name} must be finite and >= 0")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise EmptySpec("generate_dataset: noise_sigma must be finite and >= 0")


@dataclass
class Sample:
    """One (feature vector, concept, split) triple."""

    sample_id: int
    features: np.ndarray
    concept_id: int
    split: str = "train"


@dataclass
class Dataset:
    """A vocabulary plus its samples."""

    vocabulary: ConceptVocabulary
    samples: list = field(default_factory=list)

    def subset(self, split):
        return [s for s in self.samples if s.split == split]

    def features(self, split=None):
        rows = self.samples if split is None else self.subset(split)
        if not rows:
            dim = self.samples[0].features.shape[0] if self.samples else 0
            return np.zeros((0, dim))
        return np.stack([s.features for s in rows])

    def labels(self, split=None):
        rows = self.samples if split is None else self.subset(split)
        return np.array([s.concept_id for s in rows], dtype=np.int64)


def dataset_equal(a, b):
    """Exact equality of vocabulary and samples (features compared bitwise)."""
    if a.vocabulary.concepts != b.vocabulary.concepts:
        return False
    if len(a.samples) != len(b.samples):
        return False
    for sa, sb in zip(a.samples, b.samples):
        if (sa.sample_id, sa.concept_id, sa.split) != (sb.sample_id, sb.concept_id, sb.split):
            return False
        if not np.array_equal(sa.features, sb.features):
            return False
    return True


def _unit_rows(rng, n, dim):
    vecs = rng.standard_normal((n, dim))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def class_means(spec):
    """Deterministic class means and their generating unit directions.

    Directions are drawn from one seeded generator in a fixed order (crops,
    then conditions, then classes), so the geometry is a pure function of
    the spec.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    crop_dirs = _unit_rows(rng, spec.n_crops, spec.feature_dim)
    cond_dirs = _unit_rows(rng, spec.n_conditions, spec.feature_dim)
    class_dirs = _unit_rows(rng, len(spec.classes), spec.feature_dim)
    means = np.stack([
        spec.crop_signal * crop_dirs[ci]
        + spec.disease_signal * cond_dirs[di]
        + spec.class_signal * class_dirs[k]
        for k, (ci, di) in enumerate(spec.classes)
    ])
    return means, (crop_dirs, cond_dirs, class_dirs)


def _synth_description(rng, crop_name, condition_name):
    texture = _TEXTURES[rng.integers(len(_TEXTURES))]
    tint = _TINTS[rng.integers(len(_TINTS))]
    part = _PARTS[rng.integers(len(_PARTS))]
    marker = rng.integers(100)
    return (f"{texture} {tint} lesions spreading across the {part} "
            f"of {crop_name} marker{marker:02d}")


def generate_dataset(spec):
    """Generate a synthetic Dataset from a SynthSpec.

    All samples start in the train split; use split_dataset for ratios.
    Generation is a deterministic function of the spec.
    """
    means, _ = class_means(spec)
    rng = np.random.default_rng(spec.seed)
    # Advance past the direction draws in the same documented order.
    _unit_rows(rng, spec.n_crops, spec.feature_dim)
    _unit_rows(rng, spec.n_conditions, spec.feature_dim)
    _unit_rows(rng, len(spec.classes), spec.feature_dim)

    records = []
    for crop_i, cond_i in spec.classes:
        crop_name = f"crop{crop_i:02d}"
        condition_name = HEALTHY if cond_i == 0 else f"blight{cond_i:02d}"
        description = "" if cond_i == 0 else _synth_description(rng, crop_name, cond_i)
        records.append((crop_name, condition_name, description))
    vocabulary = build_vocabulary(records)

    samples = []
    for k in range(len(spec.classes)):
        noise = rng.standard_normal((spec.samples_per_class, spec.feature_dim))
        rows = means[k] + spec.noise_sigma * noise
        for row in rows:
            samples.append(Sample(len(samples), row, k))
    return Dataset(vocabulary, samples)


def _split_counts(n, ratios):
    """Largest-remainder apportionment of n samples across the ratios."""
    exact = [n * r for r in ratios]
    counts = [int(np.floor(e)) for e in exact]
    leftover = n - sum(counts)
    remainders = sorted(
        range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i)
    )
    for i in remainders[:leftover]:
        counts[i] += 1
    return counts


def split_dataset(dataset, ratios, seed=0):
    """Assign per-class stratified train/val/test splits.

    Ratios must be non-negative and sum to 1; each class is shuffled with the
    seed and apportioned so every split count is within one sample of the
    exact ratio.
    """
    if len(ratios) != 3:
        raise InsufficientSamples("split_dataset: ratios must have 3 entries")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InsufficientSamples(
            "split_dataset: ratios must be non-negative and sum to 1"
        )
    all_requested = all(r > 0 for r in ratios)
    rng = np.random.default_rng(seed)

    by_class = {}
    for idx, sample in enumerate(dataset.samples):
        by_class.setdefault(sample.concept_id, []).append(idx)

    assignment = {}
    for concept_id in sorted(by_class):
        indices = by_class[concept_id]
        if all_requested and len(indices) < 3:
            raise InsufficientSamples(
                f"split_dataset: class {concept_id} has {len(indices)} samples; "
                f"3 splits need at least 3"
            )
        order = rng.permutation(len(indices))
        counts = _split_counts(len(indices), ratios)
        cursor = 0
        for split_name, count in zip(SPLITS, counts):
            for pos in order[cursor:cursor + count]:
                assignment[indices[pos]] = split_name
            cursor += count

    samples = [
        Sample(s.sample_id, s.features.copy(), s.concept_id, assignment[i])
        for i, s in enumerate(dataset.samples)
    ]
    return Dataset(dataset.vocabulary, samples)


def save_manifest(dataset, path):
    """Write a dataset to a manifest file (lossless float round trip)."""
    dim = dataset.samples[0].features.shape[0] if dataset.samples else 0
    lines = [
        f"{MANIFEST_MAGIC}\t{MANIFEST_VERSION}",
        f"feature_dim\t{dim}",
        f"num_concepts\t{dataset.vocabulary.K}",
        f"num_samples\t{len(dataset.samples)}",
        "[concepts]",
    ]
    for c in dataset.vocabulary:
        lines.append(f"{c.crop}\t{c.condition}\t{c.description}")
    lines.append("[samples]")
    for s in dataset.samples:
        values = " ".join(repr(float(v)) for v in s.features)
        lines.append(f"{s.sample_id}\t{s.split}\t{s.concept_id}\t{values}")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"save_manifest: cannot write {path}: {exc}") from exc


def load_manifest(path):
    """Read a manifest back into a Dataset.

    An empty file loads as an empty dataset; training on it fails with
    EmptySpec. Malformed lines raise ParseError with their line number.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"load_manifest: cannot read {path}: {exc}") from exc
    if not any(line.strip() for line in lines):
        return Dataset(ConceptVocabulary([]), [])

    def fail(lineno, reason):
        raise ParseError(f"manifest line {lineno}: {reason}")

    header = lines[0].split("\t")
    if len(header) != 2 or header[0] != MANIFEST_MAGIC:
        fail(1, "missing manifest header")
    if header[1] != str(MANIFEST_VERSION):
        fail(1, f"unsupported manifest version {header[1]}")

    meta = {}
    cursor = 1
    for key in ("feature_dim", "num_concepts", "num_samples"):
        parts = lines[cursor].split("\t")
        if len(parts) != 2 or parts[0] != key:
            fail(cursor + 1, f"expected '{key}'")
        try:
            meta[key] = int(parts[1])
        except ValueError:
            fail(cursor + 1, f"{key} must be an integer")
        cursor += 1

    if lines[cursor] != "[concepts]":
        fail(cursor + 1, "expected '[concepts]'")
    cursor += 1
    vocab_lines = lines[cursor:cursor + meta["num_concepts"]]
    if len(vocab_lines) != meta["num_concepts"]:
        fail(len(lines), "truncated concept block")
    records = parse_vocab_lines(vocab_lines, start_line=cursor + 1)
    vocabulary = build_vocabulary(records) if records else ConceptVocabulary([])
    cursor += meta["num_concepts"]

    if cursor >= len(lines) or lines[cursor] != "[samples]":
        fail(cursor + 1, "expected '[samples]'")
    cursor += 1

    samples = []
    for lineno in range(cursor, len(lines)):
        line = lines[lineno]
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            fail(lineno + 1, f"expected 4 tab-separated fields, got {len(parts)}")
        sid_text, split, concept_text, value_text = parts
        try:
            sample_id = int(sid_text)
            concept_id = int(concept_text)
            features = np.array([float(v) for v in value_text.split()])
        except ValueError:
            fail(lineno + 1, "malformed sample fields")
        if split not in SPLITS:
            fail(lineno + 1, f"unknown split {split!r}")
        if features.shape[0] != meta["feature_dim"]:
            fail(lineno + 1,
                 f"expected {meta['feature_dim']} features, got {features.shape[0]}")
        if not 0 <= concept_id < vocabulary.K:
            raise DanglingReference(
                f"manifest line {lineno + 1}: concept_id {concept_id} outside "
                f"vocabulary of size {vocabulary.K}"
            )
        samples.append(Sample(sample_id, features, concept_id, split))

    if len(samples) != meta["num_samples"]:
        fail(len(lines), f"expected {meta['num_samples']} samples, got {len(samples)}")
    return Dataset(vocabulary, samples)
