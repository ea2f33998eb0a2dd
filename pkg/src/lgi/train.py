"""Adam training loop, checkpointing, and evaluation over a corpus.

Training is deterministic for a fixed seed: parameter init, epoch shuffles,
and reduction order are all fixed. The best checkpoint by validation
R@0.5 and the last checkpoint are both kept. A NaN loss aborts the run,
retaining the last finished epoch's checkpoint.

Checkpoint file layout: 4-byte little-endian header length, a UTF-8 JSON
header (format tag, config, vocab/feature sizes, step count, parameter
names + shapes, SHA-256 digest of the payload), then the payload: all
parameters followed by both Adam moment sets, as little-endian float64 in
header order.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import GroundingSample, load_split, read_manifest
from .encoders import Vocabulary
from .errors import FormatError, NonFiniteGradient
from .head import canonicalize
from .losses import LossBreakdown, total_loss
from .metrics import EvalReport, evaluate
from .model import ForwardOutput, ModelParams, array_maker, build_model, forward
from .tensor import Tape, add, scalar_mul

CHECKPOINT_FORMAT = "lgi-checkpoint-v1"


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params: ModelParams):
        self.m = {name: np.zeros_like(t.data) for name, t in params.named_parameters().items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.named_parameters().items()}
        self.step = 0


def adam_step(params: ModelParams, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              grad_clip: float = 0.0) -> None:
    """One bias-corrected Adam update over all named parameters.

    Missing gradients count as zero. A non-finite gradient aborts the step
    before any parameter is touched.
    """
    named = params.named_parameters()
    grads: dict[str, np.ndarray] = {}
    for name, tensor in named.items():
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in parameter {name!r}")
        grads[name] = g
    if grad_clip > 0.0:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if norm > grad_clip:
            scale = grad_clip / norm
            grads = {name: g * scale for name, g in grads.items()}
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for name, tensor in named.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        tensor.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, state: AdamState,
                    vocab_size: int, d_v: int, meta: dict | None = None) -> None:
    named = params.named_parameters()
    names = list(named)
    payload = bytearray()
    for name in names:
        payload += np.ascontiguousarray(named[name].data, dtype="<f8").tobytes()
    for name in names:
        payload += np.ascontiguousarray(state.m[name], dtype="<f8").tobytes()
    for name in names:
        payload += np.ascontiguousarray(state.v[name], dtype="<f8").tobytes()
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": params.cfg.to_dict(),
        "vocab_size": vocab_size,
        "d_v": d_v,
        "step": state.step,
        "names": names,
        "shapes": {name: list(named[name].shape) for name in names},
        "digest": hashlib.sha256(bytes(payload)).hexdigest(),
        "meta": meta or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path) -> tuple[ModelParams, AdamState, int, int, dict]:
    """Rebuild (params, adam state, vocab_size, d_v, meta) from a checkpoint."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated checkpoint header")
    (hlen,) = struct.unpack("<I", raw[:4])
    if len(raw) < 4 + hlen:
        raise FormatError(f"{path}: header runs past end of file")
    header = json.loads(raw[4:4 + hlen].decode("utf-8"))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    payload = raw[4 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["digest"]:
        raise FormatError(f"{path}: payload digest mismatch")

    names = header["names"]
    shapes = {name: tuple(header["shapes"][name]) for name in names}
    sizes = {name: int(np.prod(shapes[name], dtype=np.int64)) for name in names}
    total = sum(sizes.values())
    if len(payload) != 3 * total * 8:
        raise FormatError(f"{path}: payload holds {len(payload)} bytes, expected {3 * total * 8}")
    flat = np.frombuffer(payload, dtype="<f8")

    def block(offset: int) -> dict[str, np.ndarray]:
        out = {}
        pos = offset
        for name in names:
            out[name] = flat[pos:pos + sizes[name]].reshape(shapes[name]).copy()
            pos += sizes[name]
        return out

    cfg = TrainConfig.from_dict(header["config"])
    params = build_model(cfg, header["vocab_size"], header["d_v"],
                         make=array_maker(block(0)))
    state = AdamState(params)
    state.m = block(total)
    state.v = block(2 * total)
    state.step = int(header["step"])
    return params, state, int(header["vocab_size"]), int(header["d_v"]), header.get("meta", {})


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    l_reg: float
    l_tag: float
    l_dqa: float
    total: float
    val_recall_05: float
    val_miou: float
    seconds: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "l_reg": self.l_reg,
            "l_tag": self.l_tag,
            "l_dqa": self.l_dqa,
            "total": self.total,
            "val_recall_0.5": self.val_recall_05,
            "val_miou": self.val_miou,
            "seconds": self.seconds,
        }


@dataclass
class TrainResult:
    history: list[EpochLog]
    best_val: EvalReport | None
    best_epoch: int
    best_path: Path | None
    last_path: Path | None
    aborted: str | None = None
    final_val: EvalReport | None = field(default=None)


def sample_loss(params: ModelParams, sample: GroundingSample,
                token_ids: list[int]) -> tuple[ForwardOutput, LossBreakdown]:
    cfg = params.cfg
    out = forward(params, token_ids, sample.features)
    breakdown = total_loss(out.prediction, out.phrases, sample.gt, cfg.lam,
                           use_tag=cfg.use_tag_loss, use_dqa=cfg.use_dqa_loss)
    return out, breakdown


def evaluate_model(params: ModelParams, samples: list[GroundingSample],
                   vocab: Vocabulary) -> tuple[EvalReport, list[tuple[float, float]]]:
    """Forward every sample (no tape) and score canonical predictions."""
    preds = []
    for sample in samples:
        out = forward(params, vocab.encode(sample.tokens), sample.features)
        preds.append(canonicalize(out.prediction.t_start, out.prediction.t_end))
    report = evaluate(preds, [s.gt for s in samples])
    return report, preds


def resolve_seed(cfg: TrainConfig) -> int:
    """LGI_SEED in the environment overrides the configured seed."""
    env = os.environ.get("LGI_SEED")
    if env is not None:
        return int(env)
    return cfg.seed


def train(cfg: TrainConfig, data_dir, out_dir=None,
          log_fn=None) -> TrainResult:
    """Train on a corpus directory; returns the epoch history and checkpoints.

    When out_dir is given, writes metrics.jsonl / metrics.csv there plus
    checkpoint_best.ckpt and checkpoint_last.ckpt.
    """
    cfg.validate()
    seed = resolve_seed(cfg)
    data_dir = Path(data_dir)
    train_samples = load_split(data_dir, "train")
    val_samples = load_split(data_dir, "val")
    vocab = Vocabulary.load(data_dir / "vocab.json")
    d_v = train_samples[0].features.shape[0]

    rng = np.random.default_rng(seed)
    params = build_model(cfg, len(vocab), d_v, rng=rng)
    state = AdamState(params)
    token_ids = [vocab.encode(s.tokens) for s in train_samples]

    out_path = Path(out_dir) if out_dir is not None else None
    best_path = last_path = None
    metrics_file = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        best_path = out_path / "checkpoint_best.ckpt"
        last_path = out_path / "checkpoint_last.ckpt"
        metrics_file = open(out_path / "metrics.jsonl", "w", encoding="utf-8")
        with open(out_path / "config.json", "w", encoding="utf-8") as fh:
            json.dump(cfg.to_dict(), fh, indent=2)

    history: list[EpochLog] = []
    best_recall = -1.0
    best_epoch = -1
    best_report: EvalReport | None = None
    aborted = None
    report: EvalReport | None = None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.time()
            order = np.random.default_rng([seed, epoch]).permutation(len(train_samples))
            sums = {"l_reg": 0.0, "l_tag": 0.0, "l_dqa": 0.0, "total": 0.0}
            for lo in range(0, len(order), cfg.batch_size):
                batch = order[lo:lo + cfg.batch_size]
                with Tape() as tape:
                    node = None
                    for i in batch:
                        _, breakdown = sample_loss(params, train_samples[i], token_ids[i])
                        for key in sums:
                            sums[key] += getattr(breakdown, key)
                        node = breakdown.node if node is None else add(node, breakdown.node)
                    batch_loss = scalar_mul(node, 1.0 / len(batch))
                    if not math.isfinite(batch_loss.item()):
                        raise NonFiniteGradient("training loss diverged to NaN/Inf")
                    tape.backward(batch_loss)
                adam_step(params, state, cfg.learning_rate, grad_clip=cfg.grad_clip)
                params.zero_grad()

            n = len(train_samples)
            report, _ = evaluate_model(params, val_samples, vocab)
            log = EpochLog(
                epoch=epoch,
                l_reg=sums["l_reg"] / n,
                l_tag=sums["l_tag"] / n,
                l_dqa=sums["l_dqa"] / n,
                total=sums["total"] / n,
                val_recall_05=report.recall_at[0.5],
                val_miou=report.miou,
                seconds=time.time() - t0,
            )
            history.append(log)
            if metrics_file is not None:
                metrics_file.write(json.dumps(log.to_dict()) + "\n")
                metrics_file.flush()
            if log_fn is not None:
                log_fn(log)
            if report.recall_at[0.5] > best_recall:
                best_recall = report.recall_at[0.5]
                best_epoch = epoch
                best_report = report
                if best_path is not None:
                    save_checkpoint(best_path, params, state, len(vocab), d_v,
                                    meta={"epoch": epoch, "val": report.to_dict()})
            if last_path is not None:
                save_checkpoint(last_path, params, state, len(vocab), d_v,
                                meta={"epoch": epoch, "val": report.to_dict()})
    except NonFiniteGradient as exc:
        # keep whatever checkpoints the finished epochs produced
        aborted = str(exc)
    finally:
        if metrics_file is not None:
            metrics_file.close()

    if out_path is not None and history:
        with open(out_path / "metrics.csv", "w", encoding="utf-8") as fh:
            fh.write("epoch,l_reg,l_tag,l_dqa,total,val_recall_0.5,val_miou\n")
            for log in history:
                fh.write(f"{log.epoch},{log.l_reg:.6f},{log.l_tag:.6f},"
                         f"{log.l_dqa:.6f},{log.total:.6f},"
                         f"{log.val_recall_05:.4f},{log.val_miou:.4f}\n")

    return TrainResult(
        history=history,
        best_val=best_report,
        best_epoch=best_epoch,
        best_path=best_path if (best_path is not None and best_path.exists()) else None,
        last_path=last_path if (last_path is not None and last_path.exists()) else None,
        aborted=aborted,
        final_val=report,
    )


def corpus_baseline_numbers(data_dir) -> dict:
    """Baseline scores recorded in the corpus manifest."""
    manifest = read_manifest(data_dir)
    return manifest["baselines"]
