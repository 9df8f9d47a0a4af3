"""End-to-end training loop for the dual encoders.

Each step draws a class-distinct batch, renders and tokenizes the class
captions for the configured context mode, runs both towers, builds the
soft-label matrix (the identity when soft targets are disabled), and applies
one scheduled AdamW update from the analytic gradients. Everything is a
deterministic function of (config, dataset): rerunning a config on the same
data reproduces the log and the final weights bit for bit.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .encoder import forward_image, forward_text, backward, init_params
from .errors import EmptySpec, NonFiniteGradient
from .loss import loss_gradients, symmetric_loss
from .optim import adamw_step, init_optimizer_state, lr_at
from .targets import build_soft_label_matrix, identity_targets, sample_batches
from .vocab import render_caption, tokenize

# re-exported for callers that treat this module as the engine surface
__all__ = [
    "StepRecord", "EpochRecord", "TrainLog", "train",
    "class_token_matrix", "lr_at", "adamw_step",
]


@dataclass
class StepRecord:
    step: int
    lr: float
    loss_i2t: float
    loss_t2i: float
    loss_total: float
    update_skipped: bool = False


@dataclass
class EpochRecord:
    epoch: int
    val_r1_i2t: float
    val_r1_t2i: float


@dataclass
class TrainLog:
    """Per-step losses and per-epoch validation recall@1."""

    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.steps:
                fh.write(json.dumps({"record": "step", **asdict(record)},
                                    sort_keys=True) + "\n")
            for record in self.epochs:
                fh.write(json.dumps({"record": "epoch", **asdict(record)},
                                    sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path):
        log = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                data = json.loads(line)
                kind = data.pop("record")
                if kind == "step":
                    log.steps.append(StepRecord(**data))
                else:
                    log.epochs.append(EpochRecord(**data))
        return log


def class_token_matrix(vocabulary, config):
    """Tokenized caption per concept, stacked into a (K, L) id matrix."""
    rows = []
    for concept in vocabulary:
        caption = render_caption(concept, config.context_mode, config.prompt)
        rows.append(tokenize(caption, config.context_length, config.vocab_size).ids)
    return np.array(rows, dtype=np.int64)


def _validation_recall1(params, features, labels, class_tokens):
    image_emb, _ = forward_image(params, features)
    text_emb, _ = forward_text(params, class_tokens)
    sims = image_emb @ text_emb.T
    r1_i2t = float(np.mean(np.argmax(sims, axis=1) == labels))
    present = np.unique(labels)
    best_image = np.argmax(sims.T[present], axis=1)
    r1_t2i = float(np.mean(labels[best_image] == present))
    return r1_i2t, r1_t2i


def train(config, dataset):
    """Train both encoders on the dataset's train split.

    Returns:
        (EncoderParams, TrainLog): final weights and the full log.

    Raises:
        EmptySpec: no train or no val samples.
        BatchTooLarge: batch_size exceeds the train split's class count.
    """
    config.validate()
    train_rows = dataset.subset("train")
    val_rows = dataset.subset("val")
    if not train_rows:
        raise EmptySpec("train: dataset has no train split samples")
    if not val_rows:
        raise EmptySpec("train: dataset has no val split samples")

    class_tokens = class_token_matrix(dataset.vocabulary, config)
    concepts = dataset.vocabulary.concepts
    feature_dim = train_rows[0].features.shape[0]

    # Plans for every epoch are fixed up front so the schedule length is
    # known before the first update.
    plans = [
        sample_batches(dataset, config.batch_size, seed=(config.seed, epoch))
        for epoch in range(config.epochs)
    ]
    total_steps = sum(len(plan) for plan in plans)
    if total_steps == 0:
        raise EmptySpec("train: batch plan is empty")

    params = init_params(config, feature_dim, seed=config.seed)
    state = init_optimizer_state(params)
    val_features = dataset.features("val")
    val_labels = dataset.labels("val")

    log = TrainLog()
    step = 0
    for epoch, plan in enumerate(plans):
        for batch in plan:
            rows = [dataset.samples[i] for i in batch]
            features = np.stack([s.features for s in rows])
            batch_concepts = [concepts[s.concept_id] for s in rows]
            tokens = class_tokens[[s.concept_id for s in rows]]

            image_emb, image_cache = forward_image(params, features)
            text_emb, text_cache = forward_text(params, tokens)
            if config.soft_targets:
                targets = build_soft_label_matrix(batch_concepts,
                                                  config.alpha, config.beta)
            else:
                targets = identity_targets(len(rows))

            report = symmetric_loss(image_emb, text_emb, targets, config.tau)
            d_image, d_text = loss_gradients(image_emb, text_emb, targets,
                                             config.tau)
            grads = backward(params, image_cache, text_cache, d_image, d_text)

            lr = lr_at(step + 1, total_steps, config.peak_lr,
                       config.warmup_fraction)
            skipped = False
            try:
                params, state = adamw_step(params, grads, state, lr, config)
            except NonFiniteGradient:
                skipped = True
            log.steps.append(StepRecord(step, lr, report.loss_i2t,
                                        report.loss_t2i, report.loss_total,
                                        update_skipped=skipped))
            step += 1

        r1_i2t, r1_t2i = _validation_recall1(params, val_features, val_labels,
                                             class_tokens)
        log.epochs.append(EpochRecord(epoch, r1_i2t, r1_t2i))

    return params, log
