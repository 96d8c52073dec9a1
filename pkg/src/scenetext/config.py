"""Experiment configuration: one serializable tree per run.

The JSON layout mirrors the attribute layout, so the key paths referenced
throughout the docs (``fusion.placement``, ``backbone.feature_dim``, ...)
are literal paths into the config file.
"""

import hashlib
import json
from dataclasses import dataclass, field, fields, is_dataclass, asdict

from .errors import ConfigError

PLACEMENTS = ("none", "pre_encoder", "pre_decoder", "post_decoder", "cls_token", "pre_memory")
SEMANTICS_MODES = ("none", "overlap", "scene")
NORMALIZATION_MODES = ("identity", "affine", "tps")

# 64-tag detector vocabulary for the synthetic generator: tags that co-occur
# with digit strings, tags that co-occur with letter words, and neutral
# distractors that carry no class information.
DIGIT_TAGS = [
    "clock", "number", "meter", "phone", "calculator", "scoreboard",
    "thermometer", "speedometer", "keypad", "odometer", "dial", "timer",
]
LETTER_TAGS = [
    "sign", "poster", "banner", "book", "label", "billboard",
    "menu", "newspaper", "magazine", "letterbox", "placard", "flyer",
]
NEUTRAL_TAGS = [
    "person", "tree", "car", "building", "sky", "road", "cloud", "grass",
    "window", "door", "table", "chair", "light", "wall", "fence", "bird",
    "bus", "bicycle", "flower", "hat", "shoe", "bottle", "cup", "plate",
    "box", "bag", "ball", "star", "moon", "sun", "hill", "river",
    "rock", "leaf", "dog", "cat", "train", "boat", "bridge", "bench",
]

# Confusable twins: each letter renders near-identically to its digit twin
# (the glyphs differ in one interior pixel region), so when an occluder hides
# that region only class context can resolve the word. They are single-char
# words on purpose: longer twins would leak class through the other chars.
PAIR_WORDS = ["l", "1", "o", "0", "s", "5"]
FILLER_WORDS = [
    "stop", "exit", "cafe", "park", "taxi", "menu", "gate", "open",
    "hotel", "beach", "42", "137", "2048", "777", "360", "88", "1999", "63",
]
# pair words repeated to weight sampling toward the ambiguous cases
DEFAULT_VOCABULARY = PAIR_WORDS * 3 + FILLER_WORDS


@dataclass
class GeneratorConfig:
    """Synthetic scene generator knobs."""

    occlusion_rate: float = 0.3
    n_objects: tuple = (1, 4)           # distractor objects per scene
    words_per_scene: tuple = (1, 3)
    vocabulary: list = field(default_factory=lambda: list(DEFAULT_VOCABULARY))
    scene_size: int = 128
    glyph_scales: tuple = (2, 3)
    informative_rate: float = 0.9       # P(word gets a class-correlated object)
    extra_informative_rate: float = 0.3
    tag_noise: float = 0.1              # P(informative slot emits a neutral tag)
    background_object_rate: float = 0.5
    rotation_max_deg: float = 4.0
    shear_max: float = 0.15
    curve_amplitude: float = 0.0        # rows of sine baseline offset, 0 = straight
    digit_tags: list = field(default_factory=lambda: list(DIGIT_TAGS))
    letter_tags: list = field(default_factory=lambda: list(LETTER_TAGS))
    neutral_tags: list = field(default_factory=lambda: list(NEUTRAL_TAGS))

    def validate(self):
        if not 0.0 <= self.occlusion_rate <= 1.0:
            raise ConfigError(f"occlusion_rate must be in [0,1], got {self.occlusion_rate}")
        for name in ("n_objects", "words_per_scene", "glyph_scales"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ConfigError(f"{name} must be a (lo, hi) range, got {(lo, hi)}")
        if self.words_per_scene[0] < 1:
            raise ConfigError("words_per_scene minimum must be >= 1")
        if not self.vocabulary:
            raise ConfigError("generator vocabulary is empty")
        for rate in ("informative_rate", "tag_noise", "background_object_rate",
                     "extra_informative_rate"):
            v = getattr(self, rate)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{rate} must be in [0,1], got {v}")
        if self.scene_size < 48:
            raise ConfigError(f"scene_size too small: {self.scene_size}")


@dataclass
class DataConfig:
    train_path: str = ""
    val_path: str = ""
    test_path: str = ""
    warm_start: str = ""                # checkpoint path to fine-tune from


@dataclass
class TrainingConfig:
    batch_size: int = 32
    eval_every: int = 200
    lr: float = 1e-4
    plateau_patience: int = 3
    plateau_factor: float = 0.5
    lr_floor: float = 1e-6
    max_iters: int = 3000
    early_stop_patience: int = 8
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self):
        if self.batch_size < 1 or self.eval_every < 1:
            raise ConfigError("batch_size and eval_every must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")


@dataclass
class ModelConfig:
    n_enc: int = 2
    n_dec: int = 2
    dim: int = 64
    heads: int = 4
    dropout: float = 0.1

    def validate(self):
        if self.dim % self.heads:
            raise ConfigError(f"model.dim {self.dim} not divisible by heads {self.heads}")
        if self.n_enc < 1 or self.n_dec < 1:
            raise ConfigError("need at least one encoder and one decoder layer")


@dataclass
class BackboneConfig:
    depth_plan: list = field(default_factory=lambda: [16, 32, 64, 64])
    feature_dim: int = 64
    seq_len: int = 26


@dataclass
class NormalizationConfig:
    mode: str = "identity"
    fiducials: int = 20

    def validate(self):
        if self.mode not in NORMALIZATION_MODES:
            raise ConfigError(f"normalization.mode must be one of {NORMALIZATION_MODES}, "
                              f"got {self.mode!r}")
        if self.fiducials < 6 or self.fiducials % 2:
            raise ConfigError(f"fiducials must be an even count >= 6, got {self.fiducials}")


@dataclass
class SemanticsConfig:
    mode: str = "none"
    embed_dim: int = 32
    frozen_path: str = ""
    max_objects: int = 15
    table_width: int = 768

    def validate(self):
        if self.mode not in SEMANTICS_MODES:
            raise ConfigError(f"semantics.mode must be one of {SEMANTICS_MODES}, got {self.mode!r}")
        if self.embed_dim < 1 or self.max_objects < 1:
            raise ConfigError("semantics dims must be positive")


@dataclass
class FusionConfig:
    placement: str = "none"
    hidden: int = 64

    def validate(self):
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"fusion.placement must be one of {PLACEMENTS}, "
                              f"got {self.placement!r}")


@dataclass
class ExperimentConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    normalization: NormalizationConfig = field(default_factory=NormalizationConfig)
    semantics: SemanticsConfig = field(default_factory=SemanticsConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def validate(self):
        self.training.validate()
        self.model.validate()
        self.normalization.validate()
        self.semantics.validate()
        self.fusion.validate()
        self.generator.validate()
        if self.backbone.feature_dim != self.model.dim:
            raise ConfigError(
                f"backbone.feature_dim ({self.backbone.feature_dim}) must equal "
                f"model.dim ({self.model.dim}); the column features feed the encoder directly"
            )
        if self.fusion.placement != "none" and self.semantics.mode == "none":
            raise ConfigError(
                f"fusion.placement {self.fusion.placement!r} needs semantics.mode "
                "'overlap' or 'scene'"
            )
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _build(cls, d, path="")

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(raw)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build(cls, d, path):
    """Construct a (possibly nested) dataclass from a plain dict, strictly."""
    if not isinstance(d, dict):
        raise ConfigError(
            f"config section {path or '<root>'} must be an object, got {type(d).__name__}"
        )
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, val in d.items():
        if key not in known:
            raise ConfigError(f"unknown config key {path + key!r}")
        ftype = known[key].type
        if is_dataclass(ftype):
            kwargs[key] = _build(ftype, val, f"{path}{key}.")
        elif ftype is tuple and isinstance(val, list):
            kwargs[key] = tuple(val)
        else:
            kwargs[key] = val
    return cls(**kwargs)
