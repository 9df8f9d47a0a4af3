"""Temperature-scaled similarity logits and the soft-target contrastive loss.

Both retrieval directions share one logit matrix Z = V T^t / tau. The
image-to-text loss is the soft cross-entropy of the rows of Z against the
target matrix P; text-to-image uses the rows of Z^t with the same P (P is
symmetric by construction). With one-hot P the loss reduces exactly to the
standard InfoNCE objective.

Per direction the gradient with respect to the logits is
(row_softmax(Z') - P) / N, which chains to

    dL/dV = dL/dZ . T / tau        dL/dT = (dL/dZ)^t . V / tau
"""

from dataclasses import dataclass

import numpy as np

from ._validate import check_same_shape
from .errors import InvalidTargets, InvalidTemperature, ShapeError

DIRECTIONS = ("i2t", "t2i")

_ROW_SUM_TOL = 1e-6


@dataclass
class SimilarityLogits:
    """Pairwise cosine similarities over temperature."""

    Z: np.ndarray
    tau: float


@dataclass
class LossReport:
    """Both directional losses and their mean."""

    loss_i2t: float
    loss_t2i: float
    loss_total: float


def similarity_matrix(V, T, tau):
    """Z[i, j] = (v_i . t_j) / tau for row-normalized V and T."""
    if tau <= 0:
        raise InvalidTemperature(f"similarity_matrix: tau must be > 0, got {tau}")
    if V.shape != T.shape:
        raise ShapeError(
            f"similarity_matrix: V shape {V.shape} != T shape {T.shape}"
        )
    return SimilarityLogits(Z=(V @ T.T) / tau, tau=tau)


def _row_log_softmax(Z):
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_targets(P, n):
    if P.shape != (n, n):
        raise ShapeError(f"targets shape {P.shape} does not match logits ({n}, {n})")
    row_sums = P.sum(axis=1)
    if np.any(P < 0) or np.any(np.abs(row_sums - 1.0) > _ROW_SUM_TOL):
        raise InvalidTargets("soft_infonce: target rows must be non-negative "
                             "and sum to 1")


def soft_infonce(logits, P, direction="i2t"):
    """Soft cross-entropy of one retrieval direction.

    Args:
        logits: SimilarityLogits for the batch.
        P: row-stochastic target matrix (SoftLabelMatrix or array).
        direction: "i2t" scores each image against all texts; "t2i"
            transposes the logits.

    Returns:
        Non-negative scalar; equals mean one-hot InfoNCE when P is the
        identity.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"soft_infonce: unknown direction {direction!r}")
    Z = logits.Z if direction == "i2t" else logits.Z.T
    P = getattr(P, "P", P)
    _check_targets(P, Z.shape[0])
    log_probs = _row_log_softmax(Z)
    return float(-(P * log_probs).sum() / Z.shape[0])


def symmetric_loss(V, T, P, tau):
    """Both directional losses from embeddings; loss_total is their mean."""
    logits = similarity_matrix(V, T, tau)
    loss_i2t = soft_infonce(logits, P, "i2t")
    loss_t2i = soft_infonce(logits, P, "t2i")
    return LossReport(loss_i2t, loss_t2i, (loss_i2t + loss_t2i) / 2.0)


def _row_softmax(Z):
    shifted = np.exp(Z - Z.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def logit_gradient(Z, P, direction="i2t"):
    """d(soft_infonce)/dZ' for one direction; rows sum to zero."""
    Zp = Z if direction == "i2t" else Z.T
    return (_row_softmax(Zp) - P) / Zp.shape[0]


def loss_gradients(V, T, P, tau):
    """Analytic gradients of the mean directional loss w.r.t. V and T."""
    check_same_shape(V, T, "V", "T")
    P = getattr(P, "P", P)
    _check_targets(P, V.shape[0])
    Z = (V @ T.T) / tau
    dZ = 0.5 * (logit_gradient(Z, P, "i2t") + logit_gradient(Z, P, "t2i").T)
    return (dZ @ T) / tau, (dZ.T @ V) / tau
