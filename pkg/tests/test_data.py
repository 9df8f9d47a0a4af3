"""Synthetic generation geometry, stratified splits and manifest round trips."""

import numpy as np
import pytest

from leafalign.data import (
    Dataset,
    Sample,
    SynthSpec,
    class_means,
    dataset_equal,
    generate_dataset,
    load_manifest,
    save_manifest,
    split_dataset,
)
from leafalign.errors import (
    DanglingReference,
    EmptySpec,
    InsufficientSamples,
    IoError,
    ParseError,
)
from leafalign.vocab import build_vocabulary


def spec_with(**kwargs):
    base = dict(
        n_crops=3, n_conditions=3,
        classes=((0, 0), (0, 1), (1, 1), (2, 2)),
        samples_per_class=6, feature_dim=16,
        crop_signal=2.0, disease_signal=1.0, class_signal=1.0,
        noise_sigma=0.2, seed=7,
    )
    base.update(kwargs)
    return SynthSpec(**base)


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestGeneration:
    def test_deterministic(self):
        """The same spec yields bitwise-identical datasets."""
        assert dataset_equal(generate_dataset(spec_with()),
                             generate_dataset(spec_with()))

    def test_zero_noise_collapses_to_class_mean(self):
        spec = spec_with(classes=((1, 2),), noise_sigma=0.0)
        means, _ = class_means(spec)
        dataset = generate_dataset(spec)
        for sample in dataset.samples:
            np.testing.assert_allclose(sample.features, means[0], atol=0)

    def test_crop_sharing_classes_are_more_similar(self):
        """Expected value computed directly from the constructed means:
        classes sharing a crop direction have higher cosine similarity than
        classes sharing nothing."""
        spec = spec_with(
            classes=((0, 0), (0, 1), (1, 2), (2, 0)), noise_sigma=0.0,
            feature_dim=64,
        )
        means, _ = class_means(spec)
        shared_crop = cosine(means[0], means[1])        # both crop 0
        unrelated = cosine(means[2], means[3])          # nothing shared
        assert shared_crop > unrelated

    def test_similarity_ordering_of_constructed_means(self):
        """Share-both > share-one > share-none, averaged over seeds, built
        from the generating directions themselves."""
        for seed in range(5):
            spec = spec_with(seed=seed, feature_dim=64, noise_sigma=0.0)
            _, (crop_dirs, cond_dirs, class_dirs) = class_means(spec)

            def mean_of(ci, di, k):
                return (spec.crop_signal * crop_dirs[ci]
                        + spec.disease_signal * cond_dirs[di]
                        + spec.class_signal * class_dirs[k])

            share_both = cosine(mean_of(0, 0, 0), mean_of(0, 0, 1))
            share_crop = cosine(mean_of(0, 0, 0), mean_of(0, 1, 1))
            share_cond = cosine(mean_of(0, 0, 0), mean_of(1, 0, 1))
            share_none = cosine(mean_of(0, 0, 0), mean_of(1, 1, 1))
            assert share_both > share_crop > share_none
            assert share_both > share_cond > share_none

    def test_vocabulary_matches_classes(self):
        dataset = generate_dataset(spec_with())
        assert dataset.vocabulary.K == 4
        # condition index 0 is the healthy class, with no description
        healthy = dataset.vocabulary.by_id(0)
        assert healthy.condition == "healthy"
        assert healthy.description == ""
        diseased = dataset.vocabulary.by_id(1)
        assert diseased.description != ""

    def test_empty_spec_rejected(self):
        with pytest.raises(EmptySpec):
            generate_dataset(spec_with(classes=()))
        with pytest.raises(EmptySpec):
            generate_dataset(spec_with(classes=((0, 0), (0, 0))))
        with pytest.raises(EmptySpec):
            generate_dataset(spec_with(feature_dim=1))


class TestSplit:
    def test_seven_two_one(self):
        spec = spec_with(samples_per_class=10)
        dataset = split_dataset(generate_dataset(spec), (0.7, 0.2, 0.1), seed=3)
        for concept in dataset.vocabulary:
            rows = [s for s in dataset.samples if s.concept_id == concept.class_id]
            counts = {split: sum(1 for s in rows if s.split == split)
                      for split in ("train", "val", "test")}
            assert counts == {"train": 7, "val": 2, "test": 1}

    def test_degenerate_all_train(self):
        dataset = split_dataset(generate_dataset(spec_with()), (1.0, 0.0, 0.0))
        assert all(s.split == "train" for s in dataset.samples)

    def test_deterministic(self):
        base = generate_dataset(spec_with())
        a = split_dataset(base, (0.7, 0.2, 0.1), seed=11)
        b = split_dataset(base, (0.7, 0.2, 0.1), seed=11)
        assert dataset_equal(a, b)

    def test_insufficient_samples(self):
        spec = spec_with(samples_per_class=2)
        with pytest.raises(InsufficientSamples):
            split_dataset(generate_dataset(spec), (0.7, 0.2, 0.1))

    def test_class_presence_in_every_nonempty_split(self):
        dataset = split_dataset(generate_dataset(spec_with(samples_per_class=9)),
                                (0.7, 0.2, 0.1), seed=5)
        for split in ("train", "val", "test"):
            present = {s.concept_id for s in dataset.subset(split)}
            assert present == set(range(dataset.vocabulary.K))

    def test_bad_ratios_rejected(self):
        dataset = generate_dataset(spec_with())
        with pytest.raises(InsufficientSamples):
            split_dataset(dataset, (0.5, 0.2, 0.1))
        with pytest.raises(InsufficientSamples):
            split_dataset(dataset, (1.2, -0.1, -0.1))


class TestManifest:
    def test_round_trip_identity(self, tmp_path):
        dataset = split_dataset(generate_dataset(spec_with()), (0.7, 0.2, 0.1))
        path = tmp_path / "data.tsv"
        save_manifest(dataset, path)
        assert dataset_equal(load_manifest(path), dataset)

    def test_round_trip_extreme_floats(self, tmp_path):
        vocab = build_vocabulary([("apple", "scab", "spots")])
        values = np.array([1e-300, -1.5, np.pi, 3.0000000000000004])
        dataset = Dataset(vocab, [Sample(0, values, 0, "train")])
        path = tmp_path / "data.tsv"
        save_manifest(dataset, path)
        loaded = load_manifest(path)
        assert np.array_equal(loaded.samples[0].features, values)

    def test_dangling_reference(self, tmp_path):
        dataset = generate_dataset(spec_with(classes=((0, 0),)))
        path = tmp_path / "data.tsv"
        save_manifest(dataset, path)
        text = path.read_text(encoding="utf-8").replace("\ttrain\t0\t",
                                                        "\ttrain\t99\t", 1)
        path.write_text(text, encoding="utf-8")
        with pytest.raises(DanglingReference, match="99"):
            load_manifest(path)

    def test_malformed_line_reports_number(self, tmp_path):
        dataset = generate_dataset(spec_with(classes=((0, 0),),
                                             samples_per_class=2))
        path = tmp_path / "data.tsv"
        save_manifest(dataset, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        lines[7] = "not a sample line"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 8"):
            load_manifest(path)

    def test_empty_file_loads_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("", encoding="utf-8")
        dataset = load_manifest(path)
        assert dataset.vocabulary.K == 0
        assert dataset.samples == []

    def test_missing_file_raises_io_error(self, tmp_path):
        with pytest.raises(IoError):
            load_manifest(tmp_path / "nope.tsv")
