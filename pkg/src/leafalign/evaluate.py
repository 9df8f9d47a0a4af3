"""Evaluation protocols: zero-shot, retrieval, linear probes, clustering.

Retrieval convention: captions are class-level, so several images share one
caption text. A text-to-image hit therefore means retrieving any image of
the query's class, and an image-to-text hit means retrieving the query's
class caption. recall_at_k takes per-row labels to express this; with the
default labels (all rows distinct) it degrades to strict instance pairing.
This convention is recorded in every metrics file header.
"""

import json
from dataclasses import dataclass

import numpy as np

from ._validate import as_float_matrix, as_int_vector, check_same_rows
from .errors import (
    EmptyClassSet,
    EmptySet,
    InsufficientSamples,
    MissingClass,
    UndefinedSilhouette,
)
from .optim import adamw_step, init_optimizer_state

METRICS_VERSION = 1
RETRIEVAL_CONVENTION = "class-level: a hit is any candidate sharing the query's class"

#: Probe classifier budget: full-batch steps and learning rate.
PROBE_STEPS = 500
PROBE_LR = 0.1


@dataclass
class RetrievalResult:
    """recall@K per direction, keyed r_at[direction][K]."""

    r_at: dict

    def __getitem__(self, direction):
        return self.r_at[direction]


@dataclass
class ProbeResult:
    shots: int
    accuracies: list
    mean: float
    sd: float


@dataclass
class ClusterScore:
    silhouette: float
    grouping: str


def zero_shot_classify(image_embeddings, class_prompt_embeddings, true_labels):
    """Accuracy of nearest-class-prompt prediction.

    Ties break toward the lowest class id via argmax's first-wins rule.
    """
    images = as_float_matrix(image_embeddings, "image_embeddings")
    prompts = as_float_matrix(class_prompt_embeddings, "class_prompt_embeddings")
    labels = as_int_vector(true_labels, "true_labels")
    if prompts.shape[0] == 0:
        raise EmptyClassSet("zero_shot_classify: no class prompts")
    check_same_rows(images, labels[:, None], "image_embeddings", "true_labels")
    predictions = np.argmax(images @ prompts.T, axis=1)
    return float(np.mean(predictions == labels))


def _hit_ranks(similarities, query_labels, candidate_labels):
    """Rank (0-based) of the best same-label candidate for each query row."""
    order = np.argsort(-similarities, axis=1, kind="stable")
    hits = candidate_labels[order] == query_labels[:, None]
    return np.argmax(hits, axis=1), hits.any(axis=1)


def recall_at_k(V, T, ks=(1, 5, 10), labels=None):
    """Bidirectional recall@K between paired embedding matrices.

    Args:
        V: image embeddings, row i paired with text row i.
        T: text embeddings.
        ks: ranks to report.
        labels: class id per row; rows with equal labels are interchangeable
            ground truth. None means every row is its own class.
    """
    V = as_float_matrix(V, "V")
    T = as_float_matrix(T, "T")
    check_same_rows(V, T)
    if V.shape[0] == 0:
        raise EmptySet("recall_at_k: empty embedding set")
    labels = (np.arange(V.shape[0]) if labels is None
              else as_int_vector(labels, "labels"))

    sims = V @ T.T
    result = {}
    for direction, matrix in (("i2t", sims), ("t2i", sims.T)):
        ranks, found = _hit_ranks(matrix, labels, labels)
        result[direction] = {
            int(k): float(np.mean(found & (ranks < k))) for k in ks
        }
    return RetrievalResult(r_at=result)


def per_class_indices(labels):
    classes = np.unique(labels)
    return classes, {c: np.flatnonzero(labels == c) for c in classes}


class _ProbeConfig:
    """Adam hyperparameters for the probe; decay-free plain classifier fit."""

    adam_beta1 = 0.9
    adam_beta2 = 0.999
    adam_epsilon = 1e-8
    weight_decay = 0.0


def _as_classifier_struct(weight, bias):
    """Wrap (W, b) in the tensor layout the shared optimizer expects."""
    from .encoder import EncoderParams

    dummy = np.zeros((1, 1))
    return EncoderParams(image_layers=[(weight, bias)], text_embedding=dummy,
                         text_layers=[], image_projection=dummy,
                         text_projection=dummy, d=0)


def _fit_linear_classifier(X, y, n_classes):
    """Multinomial logistic fit with the engine's own optimizer."""
    params = _as_classifier_struct(np.zeros((X.shape[1], n_classes)),
                                   np.zeros(n_classes))
    state = init_optimizer_state(params)
    onehot = np.eye(n_classes)[y]
    for _ in range(PROBE_STEPS):
        W, b = params.image_layers[0]
        logits = X @ W + b
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs = shifted / shifted.sum(axis=1, keepdims=True)
        d_logits = (probs - onehot) / X.shape[0]
        grads = _as_classifier_struct(X.T @ d_logits, d_logits.sum(axis=0))
        params, state = adamw_step(params, grads, state, PROBE_LR, _ProbeConfig())
    return params.image_layers[0]


def linear_probe(train_embeddings, train_labels, test_embeddings, test_labels,
                 shots, runs=10, seed=0):
    """Few-shot linear probing of frozen embeddings.

    Each run samples `shots` examples per class with its own seeded stream,
    fits a multinomial-logistic classifier (full batch, fixed budget), and
    scores test accuracy; results aggregate to mean and sd.

    Raises:
        MissingClass: a test class has no training examples.
        InsufficientSamples: fewer than `shots` examples for some class.
    """
    X_train = as_float_matrix(train_embeddings, "train_embeddings")
    y_train = as_int_vector(train_labels, "train_labels")
    X_test = as_float_matrix(test_embeddings, "test_embeddings")
    y_test = as_int_vector(test_labels, "test_labels")

    classes = np.unique(np.concatenate([y_train, y_test]))
    _, pools = per_class_indices(y_train)
    for c in classes:
        if c not in pools:
            raise MissingClass(f"linear_probe: class {c} absent from train pool")
        if len(pools[c]) < shots:
            raise InsufficientSamples(
                f"linear_probe: class {c} has {len(pools[c])} samples, "
                f"need {shots}"
            )

    remap = {c: i for i, c in enumerate(classes)}
    y_train_ids = np.array([remap[c] for c in y_train])
    y_test_ids = np.array([remap[c] for c in y_test])

    accuracies = []
    for run in range(runs):
        rng = np.random.default_rng([seed, run])
        chosen = np.concatenate([
            rng.choice(pools[c], size=shots, replace=False) for c in classes
        ])
        W, b = _fit_linear_classifier(X_train[chosen], y_train_ids[chosen],
                                      len(classes))
        predictions = np.argmax(X_test @ W + b, axis=1)
        accuracies.append(float(np.mean(predictions == y_test_ids)))
    return ProbeResult(shots=shots, accuracies=accuracies,
                       mean=float(np.mean(accuracies)),
                       sd=float(np.std(accuracies)))


def silhouette(embeddings, labels, grouping="class"):
    """Mean silhouette over Euclidean distances; singletons score 0.

    s(i) = (b(i) - a(i)) / max(a(i), b(i)) with a(i) the mean distance to
    i's own group and b(i) the smallest mean distance to another group.
    """
    X = as_float_matrix(embeddings, "embeddings")
    y = as_int_vector(labels, "labels")
    check_same_rows(X, y[:, None], "embeddings", "labels")
    classes, pools = per_class_indices(y)
    if len(classes) < 2:
        raise UndefinedSilhouette(
            "silhouette: need at least two groups to compare"
        )

    sq = np.sum(X * X, axis=1)
    distances = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * (X @ X.T), 0.0))

    scores = np.zeros(X.shape[0])
    # Mean distance from every point to every group, via group sums.
    group_sums = np.stack([distances[:, pools[c]].sum(axis=1) for c in classes],
                          axis=1)
    group_sizes = np.array([len(pools[c]) for c in classes])
    for row, label in enumerate(y):
        own = np.flatnonzero(classes == label)[0]
        if group_sizes[own] == 1:
            scores[row] = 0.0
            continue
        a = group_sums[row, own] / (group_sizes[own] - 1)
        other_means = np.delete(group_sums[row] / group_sizes, own)
        b = other_means.min()
        scores[row] = 0.0 if a == b == 0 else (b - a) / max(a, b)
    return ClusterScore(silhouette=float(scores.mean()), grouping=grouping)


def ranking_report(query_embedding, candidate_embeddings, candidate_concepts,
                   top_k=5):
    """Top-k candidates for one query, annotated with their concepts.

    Ties order by candidate index; top_k larger than the candidate set is
    truncated to what is available.
    """
    query = np.asarray(query_embedding, dtype=np.float64).reshape(-1)
    candidates = as_float_matrix(candidate_embeddings, "candidate_embeddings")
    scores = candidates @ query
    order = np.argsort(-scores, kind="stable")[:min(top_k, len(scores))]
    return [(candidate_concepts[i], float(scores[i])) for i in order]


def same_crop_in_top_k(query_crops, score_matrix, candidate_concepts, top_k=5):
    """Count of same-crop concepts in each query's top-k candidate ranking."""
    counts = []
    crops = np.array([c.crop for c in candidate_concepts])
    order = np.argsort(-score_matrix, axis=1, kind="stable")[:, :top_k]
    for row, crop in enumerate(query_crops):
        counts.append(int(np.sum(crops[order[row]] == crop)))
    return np.array(counts)


# --- metrics files -----------------------------------------------------------

def write_metrics(path, records, config_hash="", notes=None):
    """Write versioned line-delimited metric records."""
    header = {
        "record": "header",
        "version": METRICS_VERSION,
        "config_hash": config_hash,
        "retrieval_convention": RETRIEVAL_CONVENTION,
    }
    if notes:
        header.update(notes)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for name, grouping, value in records:
            fh.write(json.dumps(
                {"record": "metric", "name": name, "grouping": grouping,
                 "value": value, "config_hash": config_hash},
                sort_keys=True) + "\n")


def read_metrics(path):
    """Read a metrics file back as (header, records)."""
    header = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            data = json.loads(line)
            if data.get("record") == "header":
                header = data
            else:
                records.append((data["name"], data["grouping"], data["value"]))
    return header, records
