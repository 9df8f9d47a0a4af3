"""Dual-stream feedforward encoders with analytic backward passes.

The image tower maps feature vectors through tanh hidden layers and a linear
projection to d dimensions; the text tower mean-pools an embedding table over
non-padding tokens and applies its own tanh stack and projection. Both towers
l2-normalize rows, so downstream dot products are cosine similarities.

tanh is used for the hidden nonlinearity because its derivative is smooth
everywhere, which keeps finite-difference gradient checks tight.

Gradients are hand-derived. The one non-obvious piece is the normalization
Jacobian: for e = u/||u||,  dL/du = (dL/de - (e . dL/de) e) / ||u||.

Checkpoint format (little-endian):
    magic "LEAFENC1" | u32 version | u32 tensor count
    per tensor: u32 name length | name utf-8 | u32 rank | u32 dims... |
                float32 row-major data
"""

from dataclasses import dataclass

import numpy as np

from ._validate import as_float_matrix, check_same_shape
from .errors import (
    InvalidConfig,
    IoError,
    MeanOfEmptySet,
    NormalizationDegenerate,
    ShapeError,
)

CHECKPOINT_MAGIC = b"LEAFENC1"
CHECKPOINT_VERSION = 1

_NORM_FLOOR = 1e-12


@dataclass
class EncoderParams:
    """Weights of both towers; layer tuples are (weight, bias)."""

    image_layers: list
    text_embedding: np.ndarray
    text_layers: list
    image_projection: np.ndarray
    text_projection: np.ndarray
    d: int


@dataclass
class ParameterGradients:
    """Gradient arrays mirroring EncoderParams tensor for tensor."""

    image_layers: list
    text_embedding: np.ndarray
    text_layers: list
    image_projection: np.ndarray
    text_projection: np.ndarray


@dataclass
class ActivationCache:
    """Per-layer activations of one forward pass, consumed by backward()."""

    inputs: list          # tower input plus each post-activation, length n_layers+1
    unnormalized: np.ndarray
    norms: np.ndarray     # column vector of row norms of `unnormalized`
    embeddings: np.ndarray
    tokens: np.ndarray = None
    mask: np.ndarray = None
    counts: np.ndarray = None


@dataclass
class EmbeddingBatch:
    """Paired image/text embeddings; every row is a unit vector."""

    V: np.ndarray
    T: np.ndarray

    def validate(self, tol=1e-6):
        check_same_shape(self.V, self.T, "V", "T")
        for name, matrix in (("V", self.V), ("T", self.T)):
            norms = np.linalg.norm(matrix, axis=1)
            if np.any(np.abs(norms - 1.0) > tol):
                raise NormalizationDegenerate(
                    f"EmbeddingBatch: {name} rows are not unit-norm within {tol}"
                )
        return self


def embed_pairs(params, features, tokens):
    """Run both towers and bundle the results (caches discarded)."""
    V, _ = forward_image(params, features)
    T, _ = forward_text(params, tokens)
    return EmbeddingBatch(V=V, T=T)


def named_tensors(struct):
    """Stable (name, array) iteration over a params or gradients struct."""
    for i, (w, b) in enumerate(struct.image_layers):
        yield f"image_layers.{i}.w", w
        yield f"image_layers.{i}.b", b
    yield "text_embedding", struct.text_embedding
    for i, (w, b) in enumerate(struct.text_layers):
        yield f"text_layers.{i}.w", w
        yield f"text_layers.{i}.b", b
    yield "image_projection", struct.image_projection
    yield "text_projection", struct.text_projection


def init_params(config, feature_dim, seed=None):
    """Seeded scaled-Gaussian initialization; biases start at zero.

    Weight entries are N(0, 1/fan_in); embedding-table rows use the token
    embedding width as fan-in so each row has roughly unit norm.
    """
    widths = [feature_dim, *config.image_hidden, config.d,
              config.embed_dim, *config.text_hidden]
    if any(w < 1 for w in widths):
        raise InvalidConfig("init_params: all layer widths must be >= 1")
    if config.vocab_size < 2:
        raise InvalidConfig("init_params: vocab_size must be >= 2")
    rng = np.random.default_rng(config.seed if seed is None else seed)

    def layer(fan_in, fan_out):
        w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
        return w, np.zeros(fan_out)

    image_layers = []
    prev = feature_dim
    for width in config.image_hidden:
        image_layers.append(layer(prev, width))
        prev = width
    image_projection = rng.standard_normal((prev, config.d)) / np.sqrt(prev)

    text_embedding = (rng.standard_normal((config.vocab_size, config.embed_dim))
                      / np.sqrt(config.embed_dim))
    text_layers = []
    prev = config.embed_dim
    for width in config.text_hidden:
        text_layers.append(layer(prev, width))
        prev = width
    text_projection = rng.standard_normal((prev, config.d)) / np.sqrt(prev)

    return EncoderParams(image_layers, text_embedding, text_layers,
                         image_projection, text_projection, config.d)


def normalize_rows(matrix):
    """l2-normalize rows; returns (normalized, norms as a column vector)."""
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms < _NORM_FLOOR):
        raise NormalizationDegenerate(
            "normalize_rows: zero-norm embedding cannot be normalized"
        )
    return matrix / norms, norms


def normalize_rows_backward(d_normalized, normalized, norms):
    """Chain an upstream gradient through row-wise l2 normalization."""
    inner = np.sum(d_normalized * normalized, axis=1, keepdims=True)
    return (d_normalized - inner * normalized) / norms


def _tower_forward(layers, projection, tower_input):
    inputs = [tower_input]
    activation = tower_input
    for w, b in layers:
        activation = np.tanh(activation @ w + b)
        inputs.append(activation)
    unnormalized = activation @ projection
    embeddings, norms = normalize_rows(unnormalized)
    return embeddings, inputs, unnormalized, norms


def forward_image(params, features):
    """Embed a feature matrix; returns (embeddings, cache)."""
    features = as_float_matrix(features, "features")
    expected = (params.image_layers[0][0].shape[0] if params.image_layers
                else params.image_projection.shape[0])
    if features.shape[1] != expected:
        raise ShapeError(
            f"forward_image: expected {expected} features, got {features.shape[1]}"
        )
    embeddings, inputs, unnormalized, norms = _tower_forward(
        params.image_layers, params.image_projection, features
    )
    return embeddings, ActivationCache(inputs, unnormalized, norms, embeddings)


def tokens_matrix(sequences):
    """Stack TokenSequence objects (or id lists) into an int array."""
    return np.array([tuple(getattr(s, "ids", s)) for s in sequences], dtype=np.int64)


def forward_text(params, tokens):
    """Embed a batch of token sequences; returns (embeddings, cache).

    Token embedding is the mean of non-padding table rows (bag of words),
    so word order inside a caption does not change the embedding.
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        tokens = tokens_matrix(tokens)
    vocab_size = params.text_embedding.shape[0]
    if tokens.min(initial=0) < 0 or tokens.max(initial=0) >= vocab_size:
        raise ShapeError(
            f"forward_text: token ids must lie in [0, {vocab_size})"
        )
    mask = tokens > 0
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise MeanOfEmptySet(
            "forward_text: sequence with no non-padding tokens cannot be pooled"
        )
    gathered = params.text_embedding[tokens] * mask[:, :, None]
    pooled = gathered.sum(axis=1) / counts[:, None]

    embeddings, inputs, unnormalized, norms = _tower_forward(
        params.text_layers, params.text_projection, pooled
    )
    cache = ActivationCache(inputs, unnormalized, norms, embeddings,
                            tokens=tokens, mask=mask, counts=counts)
    return embeddings, cache


def _tower_backward(layers, projection, cache, d_embeddings):
    check_same_shape(d_embeddings, cache.embeddings, "d_embeddings", "embeddings")
    d_unnorm = normalize_rows_backward(d_embeddings, cache.embeddings, cache.norms)
    g_projection = cache.inputs[-1].T @ d_unnorm
    d_act = d_unnorm @ projection.T
    layer_grads = [None] * len(layers)
    for i in reversed(range(len(layers))):
        post = cache.inputs[i + 1]
        d_pre = d_act * (1.0 - post * post)  # tanh' = 1 - tanh^2
        layer_grads[i] = (cache.inputs[i].T @ d_pre, d_pre.sum(axis=0))
        d_act = d_pre @ layers[i][0].T
    return layer_grads, g_projection, d_act


def backward(params, image_cache, text_cache, d_image, d_text):
    """Exact parameter gradients from upstream embedding gradients.

    Pure function: params and caches are never mutated. The caches must come
    from the forward passes that produced the embeddings whose gradients are
    given.
    """
    image_grads, g_image_proj, _ = _tower_backward(
        params.image_layers, params.image_projection, image_cache, d_image
    )
    text_grads, g_text_proj, d_pooled = _tower_backward(
        params.text_layers, params.text_projection, text_cache, d_text
    )

    # Scatter the pooled gradient back onto the contributing table rows.
    g_embedding = np.zeros_like(params.text_embedding)
    scaled = d_pooled / text_cache.counts[:, None]
    rows, cols = np.nonzero(text_cache.mask)
    np.add.at(g_embedding, text_cache.tokens[rows, cols], scaled[rows])

    return ParameterGradients(image_grads, g_embedding, text_grads,
                              g_image_proj, g_text_proj)


# --- checkpoint I/O ---------------------------------------------------------

def save_checkpoint(params, path):
    """Write params as the documented flat binary tensor file."""
    import struct

    tensors = list(named_tensors(params))
    try:
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", CHECKPOINT_VERSION))
            fh.write(struct.pack("<I", len(tensors)))
            for name, arr in tensors:
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"save_checkpoint: cannot write {path}: {exc}") from exc


def load_checkpoint(path):
    """Read a checkpoint back into EncoderParams (float64 arrays)."""
    import struct

    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"load_checkpoint: cannot read {path}: {exc}") from exc

    if blob[:8] != CHECKPOINT_MAGIC:
        raise IoError(f"load_checkpoint: {path} is not an encoder checkpoint")
    offset = 8
    version, count = struct.unpack_from("<II", blob, offset)
    offset += 8
    if version != CHECKPOINT_VERSION:
        raise IoError(f"load_checkpoint: unsupported version {version}")

    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
        offset += 4 * size
        tensors[name] = data.reshape(dims).astype(np.float64)

    def collect(prefix):
        layers = []
        i = 0
        while f"{prefix}.{i}.w" in tensors:
            layers.append((tensors[f"{prefix}.{i}.w"], tensors[f"{prefix}.{i}.b"]))
            i += 1
        return layers

    try:
        image_projection = tensors["image_projection"]
        return EncoderParams(
            image_layers=collect("image_layers"),
            text_embedding=tensors["text_embedding"],
            text_layers=collect("text_layers"),
            image_projection=image_projection,
            text_projection=tensors["text_projection"],
            d=image_projection.shape[1],
        )
    except KeyError as exc:
        raise IoError(f"load_checkpoint: missing tensor {exc}") from exc
