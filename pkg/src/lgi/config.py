"""Training/model configuration.

Desk-scale defaults (d=64, T=32, batch 16) replace the full-scale settings
(d=512, T=128, batch 100) so every experiment runs on one CPU core; the
learning rate 0.0004 and the Adam optimizer are kept as-is.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import ConfigInvalid

VARIANTS = ("lgi", "lgi_sqan")
FUSION_KINDS = ("hadamard", "addition", "concat")
ORDERINGS = ("fusion_local_global", "local_fusion_global", "local_global_fusion")
LOCAL_VARIANTS = ("resblock", "masked_nl", "none")


@dataclass
class TrainConfig:
    d: int = 64                 # feature width (full scale: 512)
    t: int = 32                 # sampled segments per video (full scale: 128)
    n_phrases: int = 3
    lam: float = 0.3            # distinctness target in the query-attention loss
    learning_rate: float = 0.0004
    batch_size: int = 16        # full scale: 100
    epochs: int = 15
    seed: int = 7
    variant: str = "lgi"
    fusion_kind: str = "hadamard"
    ordering: str = "fusion_local_global"
    local_variant: str = "resblock"
    local_kernel: int = 15
    local_window: int = 31      # masked non-local attention span
    local_blocks: int = 1
    global_blocks: int = 1
    position_embedding: bool = True
    use_tag_loss: bool = True
    use_dqa_loss: bool = True
    mask_padded_attention: bool = False
    grad_clip: float = 0.0      # global-norm clip; 0 disables

    def validate(self) -> "TrainConfig":
        if self.d <= 0 or self.d % 2 != 0:
            raise ConfigInvalid(f"d must be positive and even, got {self.d}")
        for field in ("t", "n_phrases", "learning_rate", "batch_size", "epochs"):
            if getattr(self, field) <= 0:
                raise ConfigInvalid(f"{field} must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigInvalid(f"lam must be in [0, 1], got {self.lam}")
        if self.variant not in VARIANTS:
            raise ConfigInvalid(f"variant must be one of {VARIANTS}")
        if self.fusion_kind not in FUSION_KINDS:
            raise ConfigInvalid(f"fusion_kind must be one of {FUSION_KINDS}")
        if self.ordering not in ORDERINGS:
            raise ConfigInvalid(f"ordering must be one of {ORDERINGS}")
        if self.local_variant not in LOCAL_VARIANTS:
            raise ConfigInvalid(f"local_variant must be one of {LOCAL_VARIANTS}")
        if self.local_variant == "resblock" and self.local_kernel % 2 == 0:
            raise ConfigInvalid("local_kernel must be odd")
        if self.local_variant == "masked_nl":
            if self.local_window % 2 == 0:
                raise ConfigInvalid("local_window must be odd")
            if self.local_blocks < 1:
                raise ConfigInvalid("local_blocks must be >= 1")
        if self.global_blocks < 0:
            raise ConfigInvalid("global_blocks must be >= 0")
        if self.grad_clip < 0:
            raise ConfigInvalid("grad_clip must be >= 0")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **overrides) -> "TrainConfig":
        return dataclasses.replace(self, **overrides).validate()
