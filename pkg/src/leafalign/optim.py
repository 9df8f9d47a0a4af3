"""Learning-rate schedule and decoupled-weight-decay Adam.

The schedule ramps linearly from 0 to the peak over the first
warmup_fraction of all steps, then follows a half-cosine back to 0:

    lr(s) = peak * s / w                          s <= w
    lr(s) = peak * 0.5 * (1 + cos(pi * p))        p = (s - w) / (steps - w)

The update is the standard bias-corrected Adam step with weight decay
applied directly to the parameters (not through the gradient):

    p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .encoder import ParameterGradients, named_tensors
from .errors import InvalidConfig, NonFiniteGradient


def lr_at(step, total_steps, peak_lr, warmup_fraction=0.1):
    """Scheduled learning rate at a step in [0, total_steps]."""
    if total_steps <= 0:
        raise InvalidConfig("lr_at: total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise InvalidConfig(f"lr_at: step {step} outside [0, {total_steps}]")
    warmup_steps = max(1, int(round(warmup_fraction * total_steps)))
    if warmup_steps >= total_steps:
        warmup_steps = max(1, total_steps - 1)
    if step <= warmup_steps:
        return peak_lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimizerState:
    """First/second moment accumulators per named tensor, plus step count."""

    moments: dict = field(default_factory=dict)
    step: int = 0


def init_optimizer_state(params):
    moments = {
        name: (np.zeros_like(arr), np.zeros_like(arr))
        for name, arr in named_tensors(params)
    }
    return OptimizerState(moments=moments, step=0)


def adamw_step(params, grads, state, lr, config):
    """One optimizer step; returns (new params, new state), inputs untouched.

    Raises:
        NonFiniteGradient: any gradient entry is NaN or infinite; the caller
            is expected to skip the step.
    """
    named_grads = dict(named_tensors(grads))
    for name, grad in named_grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(f"adamw_step: non-finite gradient in {name}")

    t = state.step + 1
    beta1, beta2 = config.adam_beta1, config.adam_beta2
    eps, decay = config.adam_epsilon, config.weight_decay
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t

    new_tensors = {}
    new_moments = {}
    for name, param in named_tensors(params):
        grad = named_grads[name]
        m_old, v_old = state.moments[name]
        m = beta1 * m_old + (1.0 - beta1) * grad
        v = beta2 * v_old + (1.0 - beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        new_tensors[name] = param - lr * (m_hat / (np.sqrt(v_hat) + eps)
                                          + decay * param)
        new_moments[name] = (m, v)

    new_params = _rebuild(params, new_tensors)
    return new_params, OptimizerState(moments=new_moments, step=t)


def _rebuild(params, tensors):
    from .encoder import EncoderParams

    def collect(prefix, n):
        return [(tensors[f"{prefix}.{i}.w"], tensors[f"{prefix}.{i}.b"])
                for i in range(n)]

    return EncoderParams(
        image_layers=collect("image_layers", len(params.image_layers)),
        text_embedding=tensors["text_embedding"],
        text_layers=collect("text_layers", len(params.text_layers)),
        image_projection=tensors["image_projection"],
        text_projection=tensors["text_projection"],
        d=params.d,
    )


def zero_gradients(params):
    """A ParameterGradients of zeros shaped like params."""
    return ParameterGradients(
        image_layers=[(np.zeros_like(w), np.zeros_like(b))
                      for w, b in params.image_layers],
        text_embedding=np.zeros_like(params.text_embedding),
        text_layers=[(np.zeros_like(w), np.zeros_like(b))
                     for w, b in params.text_layers],
        image_projection=np.zeros_like(params.image_projection),
        text_projection=np.zeros_like(params.text_projection),
    )
