"""Shared fixtures: small vocabularies and datasets for fast tests."""

import numpy as np
import pytest

from leafalign.config import TrainConfig
from leafalign.data import SynthSpec, generate_dataset, split_dataset
from leafalign.vocab import build_vocabulary


@pytest.fixture
def mixed_vocab():
    """Four concepts spanning shared crops and shared conditions."""
    return build_vocabulary([
        ("apple", "scab", "olive-green velvety spots on the upper surface"),
        ("apple", "rust", "bright orange pustules along the veins"),
        ("tomato", "scab", "raised corky lesions with dark margins"),
        ("potato", "blight", "water-soaked patches turning brown"),
    ])


@pytest.fixture
def tiny_config():
    """A configuration small enough for sub-second training runs."""
    return TrainConfig(
        epochs=3, batch_size=4, peak_lr=2e-3, seed=0, d=16,
        image_hidden=(24,), text_hidden=(24,), embed_dim=12,
        vocab_size=257, context_length=24,
    )


def small_dataset(seed=0, samples_per_class=12, noise_sigma=0.3):
    """2 crops x 2 conditions, all four classes populated, pre-split."""
    spec = SynthSpec(
        n_crops=2, n_conditions=2,
        classes=((0, 0), (0, 1), (1, 0), (1, 1)),
        samples_per_class=samples_per_class, feature_dim=8,
        crop_signal=1.5, disease_signal=1.0, class_signal=1.5,
        noise_sigma=noise_sigma, seed=seed,
    )
    return split_dataset(generate_dataset(spec), (0.7, 0.2, 0.1), seed=seed)


@pytest.fixture
def tiny_dataset():
    return small_dataset()


def unit_rows(rng, n, d):
    rows = rng.standard_normal((n, d))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)
