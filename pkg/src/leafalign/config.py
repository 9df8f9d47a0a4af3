"""Training configuration: defaults, key=value files and stable hashing.

Config files are flat ``key = value`` text; '#' starts a comment. Flags on
the CLI override file values, and the fully-resolved config is echoed into
the run manifest together with its hash.
"""

import hashlib
from dataclasses import dataclass, fields, replace

from .errors import ConfigError, ParseError
from .vocab import MODES


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the dataset itself."""

    # optimization
    epochs: int = 20
    batch_size: int = 16
    peak_lr: float = 3e-4
    weight_decay: float = 0.2
    warmup_fraction: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    # loss
    tau: float = 0.07
    alpha: float = 0.1
    beta: float = 0.05
    soft_targets: bool = True
    # captions
    context_mode: str = "long"
    prompt: str = "a photo of"
    context_length: int = 77
    vocab_size: int = 4096
    # model
    d: int = 64
    image_hidden: tuple = (128,)
    text_hidden: tuple = (128,)
    embed_dim: int = 48
    # reproducibility
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.warmup_fraction < 1:
            raise ConfigError("warmup_fraction must lie strictly between 0 and 1")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr must be > 0")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta >= 1:
            raise ConfigError("alpha and beta must be >= 0 with alpha + beta < 1")
        if self.context_mode not in MODES:
            raise ConfigError(f"context_mode must be one of {MODES}")
        if self.context_length < 1:
            raise ConfigError("context_length must be >= 1")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2")
        if self.d < 1 or self.embed_dim < 1:
            raise ConfigError("d and embed_dim must be >= 1")
        if any(h < 1 for h in (*self.image_hidden, *self.text_hidden)):
            raise ConfigError("hidden layer widths must be >= 1")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ConfigError("adam betas must lie in [0, 1)")
        return self


_FIELD_TYPES = {
    f.name: f.type if isinstance(f.type, str) else f.type.__name__
    for f in fields(TrainConfig)
}


def _parse_value(key, text):
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind == "bool":
            if text.lower() in ("true", "on", "yes", "1"):
                return True
            if text.lower() in ("false", "off", "no", "0"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "tuple":
            if not text:
                return ()
            return tuple(int(v) for v in text.split(","))
        return text
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse value {text!r}") from exc


def parse_config(path=None, overrides=None):
    """Resolve a TrainConfig from an optional file plus override mapping.

    An empty or missing file yields all defaults. Unknown keys and
    out-of-range values raise ConfigError naming the key.
    """
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"parse_config: cannot read {path}: {exc}") from exc
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"config line {lineno}: expected 'key = value'")
            key, text = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key: {key!r} (line {lineno})")
            values[key] = _parse_value(key, text)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key: {key!r}")
        values[key] = value if not isinstance(value, str) else _parse_value(key, value)
    return TrainConfig(**values).validate()


def config_lines(config):
    """Canonical key=value rendering, one sorted key per line."""
    rendered = []
    for name in sorted(_FIELD_TYPES):
        value = getattr(config, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        rendered.append(f"{name} = {value}")
    return rendered


def config_hash(config):
    """Stable 12-hex digest of the fully-resolved config."""
    blob = "\n".join(config_lines(config)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def with_overrides(config, **kwargs):
    return replace(config, **kwargs).validate()
