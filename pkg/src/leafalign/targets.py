"""Crop/condition-aware soft-label matrices and the class-distinct sampler.

For a batch of N pairwise-distinct concepts, row i of the target matrix P
distributes probability mass by relatedness:

    itself                          1 - alpha' - beta'
    same crop, other condition      alpha' / (number of such batch members)
    same condition, other crop      beta'  / (number of such batch members)
    unrelated                       0

where alpha' is alpha if row i has at least one same-crop partner in the
batch and 0 otherwise (likewise beta'): mass that has no partner to go to
folds back into the diagonal, so every row is a probability distribution
and alpha = beta = 0 reduces P to the identity.

"healthy" is an ordinary condition value, so two healthy classes of
different crops are same-condition partners.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BatchTooLarge, DuplicateClassInBatch, InvalidTargets


@dataclass
class SoftLabelMatrix:
    """Row-stochastic, symmetric batch target matrix."""

    P: np.ndarray
    alpha: float
    beta: float


@dataclass
class BatchPlan:
    """Ordered batches of sample indices, each batch class-distinct."""

    batches: list

    def __len__(self):
        return len(self.batches)

    def __iter__(self):
        return iter(self.batches)


def build_soft_label_matrix(concepts, alpha, beta):
    """Build the soft-label matrix for one class-distinct batch.

    Args:
        concepts: batch concepts, pairwise distinct (crop, condition).
        alpha: total mass shared across same-crop partners.
        beta: total mass shared across same-condition partners.

    Raises:
        InvalidTargets: alpha/beta negative or alpha + beta >= 1.
        DuplicateClassInBatch: two concepts share (crop, condition).
    """
    if alpha < 0 or beta < 0 or alpha + beta >= 1:
        raise InvalidTargets(
            f"build_soft_label_matrix: need alpha, beta >= 0 and "
            f"alpha + beta < 1, got alpha={alpha}, beta={beta}"
        )
    n = len(concepts)
    if n < 1:
        raise InvalidTargets("build_soft_label_matrix: batch must be non-empty")
    keys = [(c.crop, c.condition) for c in concepts]
    if len(set(keys)) != n:
        raise DuplicateClassInBatch(
            "build_soft_label_matrix: batch repeats a (crop, condition) class"
        )

    _, crops = np.unique([c.crop for c in concepts], return_inverse=True)
    _, conditions = np.unique([c.condition for c in concepts], return_inverse=True)
    same_crop = crops[:, None] == crops[None, :]
    same_condition = conditions[:, None] == conditions[None, :]
    off_diagonal = ~np.eye(n, dtype=bool)
    crop_partner = same_crop & ~same_condition & off_diagonal
    condition_partner = same_condition & ~same_crop & off_diagonal

    n_crop = crop_partner.sum(axis=1)
    n_condition = condition_partner.sum(axis=1)

    P = np.zeros((n, n))
    with np.errstate(divide="ignore", invalid="ignore"):
        P += np.where(crop_partner, alpha / np.maximum(n_crop, 1)[:, None], 0.0)
        P += np.where(condition_partner,
                      beta / np.maximum(n_condition, 1)[:, None], 0.0)
    diagonal = (1.0
                - np.where(n_crop > 0, alpha, 0.0)
                - np.where(n_condition > 0, beta, 0.0))
    P[np.arange(n), np.arange(n)] = diagonal
    return SoftLabelMatrix(P=P, alpha=alpha, beta=beta)


def identity_targets(n):
    """The hard-label (one-to-one) target matrix."""
    return SoftLabelMatrix(P=np.eye(n), alpha=0.0, beta=0.0)


def sample_batches(dataset, batch_size, seed=0):
    """Plan one epoch of class-distinct batches over the train split.

    A seeded permutation is scanned greedily: each pass collects the first
    batch_size samples whose classes are not yet in the batch. When the pool
    can no longer fill a whole batch, the remainder becomes a final ragged
    batch only if it is itself class-distinct; otherwise it is left for the
    next epoch's permutation.

    Raises:
        BatchTooLarge: batch_size exceeds the number of distinct classes
            in the train split.
    """
    indices = [i for i, s in enumerate(dataset.samples) if s.split == "train"]
    class_of = {i: dataset.samples[i].concept_id for i in indices}
    n_classes = len(set(class_of.values()))
    if batch_size > n_classes:
        raise BatchTooLarge(
            f"sample_batches: batch_size {batch_size} exceeds the "
            f"{n_classes} distinct train classes"
        )

    rng = np.random.default_rng(seed)
    pool = [indices[j] for j in rng.permutation(len(indices))]
    batches = []
    while pool:
        batch, rest, seen = [], [], set()
        for idx in pool:
            concept = class_of[idx]
            if len(batch) < batch_size and concept not in seen:
                batch.append(idx)
                seen.add(concept)
            else:
                rest.append(idx)
        if len(batch) == batch_size:
            batches.append(batch)
            pool = rest
        else:
            # Partial scan: `rest` holds only class duplicates of `batch`,
            # so the leftovers are class-distinct exactly when rest is empty.
            if not rest and batch:
                batches.append(batch)
            break
    return BatchPlan(batches=batches)
