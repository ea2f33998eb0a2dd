"""Synthetic grounding corpora with ground truth known by construction.

Each sample is a fake video laid out as a timeline of prototype activities.
One to three target prototypes occupy adjacent runs of segments; the query
names them in temporal order, joined by connective words, and the ground
truth is the normalized span covered by the targets. Distractor prototypes
fill the rest of the timeline so attending uniformly is never enough.

On-disk layout of a corpus directory:

    manifest.json        config, seed, split sizes, baseline oracle numbers
    vocab.json           token -> index (see encoders.Vocabulary)
    train.jsonl          one annotation object per line
    val.jsonl
    features/<id>.feat   binary per-video features

Annotation objects are ``{"video_id", "tokens": [...], "start", "end"}``
with a normalized 0 <= start < end <= 1 interval. A feature file is the
8-byte magic ``LGIFEAT1``, little-endian u32 T_raw and u32 d_v, then
T_raw * d_v little-endian float32 values, time-major (one row of d_v values
per segment).
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .encoders import Vocabulary
from .errors import ConfigInvalid, FormatError, InvariantViolation

MAGIC = b"LGIFEAT1"

PROTOTYPE_NAMES = (
    "run", "jump", "cook", "read", "swim", "dance", "climb", "paint",
    "sleep", "drive", "write", "laugh", "stretch", "pour", "fold", "sweep",
    "dig", "throw", "catch", "kneel", "wave", "chop", "stir", "carry",
    "open", "close", "lift", "drop", "push", "pull", "spin", "clap",
    "march", "crawl", "slide", "point",
)

CONNECTIVES = ("then", "and")


@dataclass
class GroundingSample:
    video_id: str
    features: np.ndarray        # (d_v, T_raw) float32
    tokens: list[str]
    gt: tuple[float, float]     # normalized, 0 <= start < end <= 1


@dataclass
class SynthConfig:
    n_prototypes: int = 12
    d_v: int = 20
    t_raw_range: tuple[int, int] = (32, 64)
    phrases_per_query: tuple[int, int] = (1, 3)
    noise_std: float = 0.1
    seed: int = 7

    def validate(self) -> "SynthConfig":
        if self.n_prototypes < 2:
            raise ConfigInvalid("need at least two prototypes")
        if self.n_prototypes > len(PROTOTYPE_NAMES):
            raise ConfigInvalid(f"at most {len(PROTOTYPE_NAMES)} prototypes supported")
        if self.d_v < 1:
            raise ConfigInvalid("d_v must be positive")
        lo, hi = self.t_raw_range
        if not (1 <= lo <= hi):
            raise ConfigInvalid(f"bad t_raw_range {self.t_raw_range}")
        plo, phi = self.phrases_per_query
        if not (1 <= plo <= phi <= 3):
            raise ConfigInvalid(f"phrases_per_query must lie in 1..3, got {self.phrases_per_query}")
        if lo < 2 * phi + 2:
            raise ConfigInvalid(
                f"t_raw_range minimum {lo} too small for {phi}-phrase queries")
        if self.noise_std < 0:
            raise ConfigInvalid("noise_std must be >= 0")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["t_raw_range"] = list(self.t_raw_range)
        d["phrases_per_query"] = list(self.phrases_per_query)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        if "t_raw_range" in data:
            data["t_raw_range"] = tuple(data["t_raw_range"])
        if "phrases_per_query" in data:
            data["phrases_per_query"] = tuple(data["phrases_per_query"])
        return cls(**data).validate()


def prototype_anchors(config: SynthConfig) -> np.ndarray:
    """Fixed characteristic feature vector per prototype, seeded."""
    rng = np.random.default_rng(config.seed)
    return rng.normal(size=(config.n_prototypes, config.d_v))


def _run_length(rng: np.random.Generator, t_raw: int) -> int:
    lo = max(2, t_raw // 16)
    hi = max(lo + 1, t_raw // 6)
    return int(rng.integers(lo, hi + 1))


def _build_sample(rng: np.random.Generator, config: SynthConfig,
                  anchors: np.ndarray, video_id: str) -> GroundingSample:
    t_lo, t_hi = config.t_raw_range
    t_raw = int(rng.integers(t_lo, t_hi + 1))
    plo, phi = config.phrases_per_query
    k = int(rng.integers(plo, phi + 1))
    targets = rng.choice(config.n_prototypes, size=k, replace=False)

    lengths = [_run_length(rng, t_raw) for _ in range(k)]
    while sum(lengths) > max(1, int(0.8 * t_raw)):
        widest = int(np.argmax(lengths))
        if lengths[widest] <= 1:
            break
        lengths[widest] -= 1
    span = sum(lengths)
    start = int(rng.integers(0, t_raw - span + 1))

    labels = np.empty(t_raw, dtype=np.int64)
    pos = start
    for proto, length in zip(targets, lengths):
        labels[pos:pos + length] = proto
        pos += length

    # distractors fill the outside; never a prototype named in the query
    others = [p for p in range(config.n_prototypes) if p not in set(int(x) for x in targets)]
    for lo, hi in ((0, start), (start + span, t_raw)):
        pos = lo
        while pos < hi:
            length = min(_run_length(rng, t_raw), hi - pos)
            labels[pos:pos + length] = int(rng.choice(others))
            pos += length

    features = anchors[labels].T + config.noise_std * rng.normal(size=(config.d_v, t_raw))
    features = features.astype(np.float32)

    tokens: list[str] = []
    for i, proto in enumerate(targets):
        if i > 0:
            tokens.append(str(rng.choice(CONNECTIVES)))
        tokens.append(PROTOTYPE_NAMES[int(proto)])

    gt = (start / t_raw, (start + span) / t_raw)
    return GroundingSample(video_id=video_id, features=features, tokens=tokens, gt=gt)


def generate(config: SynthConfig, n_train: int, n_val: int
             ) -> tuple[list[GroundingSample], list[GroundingSample]]:
    """Deterministically generate train and validation sample lists."""
    config.validate()
    if n_train <= 0 or n_val <= 0:
        raise ConfigInvalid("split sizes must be positive")
    anchors = prototype_anchors(config)
    rng = np.random.default_rng(config.seed + 1)
    train = [_build_sample(rng, config, anchors, f"train{i:05d}") for i in range(n_train)]
    val = [_build_sample(rng, config, anchors, f"val{i:05d}") for i in range(n_val)]
    return train, val


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_feature_file(path: Path, features: np.ndarray) -> None:
    d_v, t_raw = features.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", t_raw, d_v))
        fh.write(np.ascontiguousarray(features.T, dtype="<f4").tobytes())


def read_feature_file(path: Path) -> np.ndarray:
    """Read a feature blob back to its (d_v, T_raw) float32 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise FormatError(f"{path.name}: bad magic at byte 0")
    if len(blob) < 16:
        raise FormatError(f"{path.name}: truncated header at byte {len(blob)}")
    t_raw, d_v = struct.unpack("<II", blob[8:16])
    expected = 16 + 4 * t_raw * d_v
    if len(blob) != expected:
        raise FormatError(
            f"{path.name}: expected {expected} bytes for {t_raw}x{d_v} features, "
            f"got {len(blob)} (payload ends at byte {len(blob)})")
    flat = np.frombuffer(blob, dtype="<f4", offset=16)
    return flat.reshape(t_raw, d_v).T.copy()


def _write_split(directory: Path, split: str, samples: list[GroundingSample]) -> None:
    feature_dir = directory / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)
    with open(directory / f"{split}.jsonl", "w", encoding="utf-8") as fh:
        for sample in samples:
            write_feature_file(feature_dir / f"{sample.video_id}.feat", sample.features)
            fh.write(json.dumps({
                "video_id": sample.video_id,
                "tokens": sample.tokens,
                "start": sample.gt[0],
                "end": sample.gt[1],
            }) + "\n")


def write_corpus(directory, config: SynthConfig,
                 train: list[GroundingSample], val: list[GroundingSample],
                 baseline_seed: int = 1) -> dict:
    """Write both splits, the vocabulary, and a manifest with baseline scores.

    The manifest records the center-prior interval found by the grid-search
    oracle on the training ground truth, its expected tIoU there, and both
    baselines evaluated on each split.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_split(directory, "train", train)
    _write_split(directory, "val", val)

    vocab = Vocabulary.from_token_lists([s.tokens for s in train + val])
    vocab.save(directory / "vocab.json")

    train_gts = [s.gt for s in train]
    val_gts = [s.gt for s in val]
    prior, expected = metrics.center_prior_interval(train_gts)
    baselines = {
        "center_prior": {
            "interval": list(prior),
            "expected_tiou_train": expected,
            "train": metrics.evaluate([prior] * len(train_gts), train_gts).to_dict(),
            "val": metrics.evaluate([prior] * len(val_gts), val_gts).to_dict(),
        },
        "random": {
            "seed": baseline_seed,
            "val": metrics.evaluate(
                metrics.random_intervals(len(val_gts), baseline_seed), val_gts).to_dict(),
        },
    }
    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "splits": {"train": len(train), "val": len(val)},
        "baselines": baselines,
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise FormatError(f"missing manifest: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_split(directory, split: str) -> list[GroundingSample]:
    """Stream one split, validating every sample invariant."""
    directory = Path(directory)
    ann_path = directory / f"{split}.jsonl"
    if not ann_path.exists():
        raise FormatError(f"missing annotation file: {ann_path}")
    samples: list[GroundingSample] = []
    with open(ann_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{ann_path.name}:{line_no}: bad JSON: {exc}") from None
            try:
                video_id = obj["video_id"]
                tokens = list(obj["tokens"])
                start, end = float(obj["start"]), float(obj["end"])
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{ann_path.name}:{line_no}: {exc}") from None
            if not tokens:
                raise InvariantViolation(f"{video_id}: empty token list")
            if not (0.0 <= start < end <= 1.0):
                raise InvariantViolation(
                    f"{video_id}: interval ({start}, {end}) violates 0 <= start < end <= 1")
            features = read_feature_file(directory / "features" / f"{video_id}.feat")
            if not np.all(np.isfinite(features)):
                raise InvariantViolation(f"{video_id}: non-finite feature values")
            samples.append(GroundingSample(
                video_id=video_id, features=features, tokens=tokens, gt=(start, end)))
    return samples
