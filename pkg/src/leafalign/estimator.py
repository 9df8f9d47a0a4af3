"""scikit-learn style estimator wrapping the training engine.

The aligner fits the dual encoders on (features, class ids) given a concept
vocabulary, then exposes the embedding space through the standard estimator
verbs: transform() returns image embeddings, predict() does zero-shot
classification against the class caption embeddings, score() is zero-shot
accuracy. The functional modules stay usable on their own; this class only
composes them behind get_params/set_params so the model drops into
scikit-learn pipelines and model-selection tooling.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validate import as_float_matrix, as_int_vector
from .config import TrainConfig
from .data import Dataset, Sample, split_dataset
from .encoder import forward_image, forward_text
from .errors import DanglingReference
from .evaluate import zero_shot_classify
from .train import class_token_matrix, train
from .vocab import ConceptVocabulary, build_vocabulary


class DualEncoderAligner(BaseEstimator, TransformerMixin):
    """Contrastive image-text aligner with crop/condition-aware soft targets.

    Parameters
    ----------
    concepts : ConceptVocabulary or list of (crop, condition, description)
        The class label space; captions derive from it.
    d : int, output embedding dimension.
    image_hidden, text_hidden : tuple of int, tanh hidden widths per tower.
    embed_dim : int, token embedding width.
    vocab_size : int, hashed token id space (id 0 is padding).
    context_mode : {"long", "short"}, caption template family.
    prompt : str, caption prefix.
    soft_targets : bool, train with related-class label smoothing.
    alpha, beta : float, same-crop / same-condition target mass.
    tau : float, similarity temperature.
    epochs, batch_size, peak_lr, weight_decay, warmup_fraction : training
        schedule; see TrainConfig for defaults.
    val_fraction : float, share of fit data held out for per-epoch logging.
    seed : int, drives every random draw.

    Attributes
    ----------
    params_ : EncoderParams, trained weights.
    vocabulary_ : ConceptVocabulary resolved from `concepts`.
    classes_ : ndarray of class ids.
    class_text_embeddings_ : ndarray (K, d), caption embedding per class.
    train_log_ : TrainLog from the fit.
    """

    def __init__(self, concepts=None, d=64, image_hidden=(128,),
                 text_hidden=(128,), embed_dim=48, vocab_size=4096,
                 context_length=77, context_mode="long", prompt="a photo of",
                 soft_targets=True, alpha=0.1, beta=0.05, tau=0.07,
                 epochs=20, batch_size=16, peak_lr=3e-4, weight_decay=0.2,
                 warmup_fraction=0.1, val_fraction=0.1, seed=0):
        self.concepts = concepts
        self.d = d
        self.image_hidden = image_hidden
        self.text_hidden = text_hidden
        self.embed_dim = embed_dim
        self.vocab_size = vocab_size
        self.context_length = context_length
        self.context_mode = context_mode
        self.prompt = prompt
        self.soft_targets = soft_targets
        self.alpha = alpha
        self.beta = beta
        self.tau = tau
        self.epochs = epochs
        self.batch_size = batch_size
        self.peak_lr = peak_lr
        self.weight_decay = weight_decay
        self.warmup_fraction = warmup_fraction
        self.val_fraction = val_fraction
        self.seed = seed

    # ------------------------------------------------------------------
    # estimator surface
    # ------------------------------------------------------------------

    def _resolve_vocabulary(self):
        if isinstance(self.concepts, ConceptVocabulary):
            return self.concepts
        if self.concepts is None:
            raise ValueError("DualEncoderAligner requires `concepts`")
        return build_vocabulary(self.concepts)

    def _config(self):
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            peak_lr=self.peak_lr, weight_decay=self.weight_decay,
            warmup_fraction=self.warmup_fraction, tau=self.tau,
            alpha=self.alpha, beta=self.beta, soft_targets=self.soft_targets,
            context_mode=self.context_mode, prompt=self.prompt,
            context_length=self.context_length, vocab_size=self.vocab_size,
            d=self.d, image_hidden=tuple(self.image_hidden),
            text_hidden=tuple(self.text_hidden), embed_dim=self.embed_dim,
            seed=self.seed,
        ).validate()

    def fit(self, X, y):
        """Train the encoders on feature rows X with class ids y."""
        X = as_float_matrix(X, "X")
        y = as_int_vector(y, "y")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        vocabulary = self._resolve_vocabulary()
        if y.min(initial=0) < 0 or y.max(initial=0) >= vocabulary.K:
            raise DanglingReference(
                f"fit: class ids must lie in [0, {vocabulary.K})"
            )

        samples = [Sample(i, X[i], int(y[i])) for i in range(X.shape[0])]
        dataset = split_dataset(
            Dataset(vocabulary, samples),
            (1.0 - self.val_fraction, self.val_fraction, 0.0),
            seed=self.seed,
        )
        config = self._config()
        self.params_, self.train_log_ = train(config, dataset)
        self.vocabulary_ = vocabulary
        self.classes_ = np.arange(vocabulary.K)
        tokens = class_token_matrix(vocabulary, config)
        self.class_text_embeddings_, _ = forward_text(self.params_, tokens)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "This DualEncoderAligner instance is not fitted yet."
            )

    def transform(self, X):
        """Embed feature rows into the shared d-dimensional space."""
        self._check_fitted()
        embeddings, _ = forward_image(self.params_, as_float_matrix(X, "X"))
        return embeddings

    def predict(self, X):
        """Zero-shot class ids: nearest class caption embedding."""
        self._check_fitted()
        sims = self.transform(X) @ self.class_text_embeddings_.T
        return np.argmax(sims, axis=1)

    def score(self, X, y):
        """Zero-shot classification accuracy."""
        self._check_fitted()
        return zero_shot_classify(self.transform(X),
                                  self.class_text_embeddings_,
                                  as_int_vector(y, "y"))
