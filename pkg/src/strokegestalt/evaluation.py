"""Character-level evaluator recognizer and the evaluation harness.

The evaluator is a separate small sequence recognizer over a character
vocabulary. It is used only to score images (standing in for external
pre-trained recognizers) and never participates in SR training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

from . import metrics
from .checkpoint import save_checkpoint, load_checkpoint
from .recognizer import (
    RecognizerConfig,
    TransformerRecognizer,
    pretrain_recognizer,
    recognize_greedy,
)
from .sr_models import SRGenerator, upsample
from .stroke_codec import EOS_ID
from .synth_data import TextSample, bicubic_resize

CHAR_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"
CHAR_VOCAB_SIZE = len(CHAR_ALPHABET) + 2  # + eos + start

_CHAR_TO_ID = {c: i + 1 for i, c in enumerate(CHAR_ALPHABET)}


def encode_chars(text: str) -> tuple[int, ...]:
    """Character-id label with trailing eos; unknown characters are rejected."""
    norm = metrics.normalize_text(text)
    if not norm:
        raise ValueError(f"text {text!r} has no encodable characters")
    try:
        ids = tuple(_CHAR_TO_ID[c] for c in norm)
    except KeyError as exc:
        raise ValueError(f"character {exc.args[0]!r} not in evaluator alphabet") from None
    return ids + (EOS_ID,)


def decode_chars(ids: list[int] | tuple[int, ...]) -> str:
    out = []
    for i in ids:
        if i == EOS_ID:
            break
        if 1 <= i <= len(CHAR_ALPHABET):
            out.append(CHAR_ALPHABET[i - 1])
    return "".join(out)


def evaluator_config(max_len: int = 10, **overrides) -> RecognizerConfig:
    return RecognizerConfig(vocab_size=CHAR_VOCAB_SIZE, max_len=max_len, **overrides)


def _batch_blur_augment(x, rng):
    """Randomly soften half of each batch so the evaluator tolerates SR outputs."""
    import torch
    from torchvision.transforms.functional import gaussian_blur

    out = x.clone()
    for i in range(x.shape[0]):
        if rng.random() < 0.5:
            sigma = float(rng.uniform(0.4, 1.3))
            out[i] = gaussian_blur(x[i], kernel_size=5, sigma=sigma)
    return out


def train_evaluator(
    samples: list[TextSample],
    cfg: RecognizerConfig,
    *,
    epochs: int = 20,
    batch_size: int = 16,
    optimizer: str = "adam",
    lr: float | None = None,
    seed: int = 0,
    blur_augment: bool = True,
    holdout: list[TextSample] | None = None,
    log_fn=None,
) -> tuple[TransformerRecognizer, dict]:
    """Train the character-level evaluator on HR images.

    Light per-batch blur augmentation (on by default) keeps the evaluator
    usable on softer SR/bicubic outputs instead of only pixel-sharp renders.
    """
    images = [s.hr_image for s in samples]
    labels = [encode_chars(s.text) for s in samples]
    hold = None
    if holdout is not None:
        hold = ([s.hr_image for s in holdout], [encode_chars(s.text) for s in holdout])
    model, meta = pretrain_recognizer(
        images, labels, cfg,
        epochs=epochs, batch_size=batch_size, optimizer=optimizer, lr=lr,
        lr_milestones=(int(epochs * 0.6), int(epochs * 0.85)), seed=seed,
        holdout=hold, log_fn=log_fn,
        augment_fn=_batch_blur_augment if blur_augment else None,
    )
    meta["blur_augment"] = blur_augment
    return model, meta


def save_evaluator(path, model: TransformerRecognizer, meta: dict):
    return save_checkpoint(
        path, kind="evaluator", config=asdict(model.cfg),
        state_dict=model.state_dict(), meta=meta,
    )


def load_evaluator(path) -> tuple[TransformerRecognizer, dict]:
    blob = load_checkpoint(path, expect_kind="evaluator")
    model = TransformerRecognizer(RecognizerConfig(**blob["config"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob["meta"]


def read_text(evaluator: TransformerRecognizer, image: np.ndarray) -> str:
    ids, _ = recognize_greedy(evaluator, image)
    return decode_chars(ids)


@dataclass
class EvalReport:
    split: str
    n_samples: int
    psnr_mean: float
    ssim_mean: float
    accuracy: float
    images: str  # which images were scored: sr | bicubic | hr
    config_fingerprint: str = ""
    per_sample: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("report needs at least one sample")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy out of range: {self.accuracy}")

    def to_json(self) -> str:
        d = asdict(self)
        if math.isinf(d["psnr_mean"]):
            d["psnr_mean"] = "inf"
        return json.dumps(d, indent=2)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path


def evaluate(
    sr_model: SRGenerator | None,
    samples: list[TextSample],
    evaluator: TransformerRecognizer,
    *,
    images: str | None = None,
    keep_per_sample: bool = False,
    config_fingerprint: str = "",
) -> EvalReport:
    """Score SR outputs (or a bicubic baseline, or HR itself) on one split.

    images: "sr" (requires sr_model), "bicubic", or "hr"; defaults to "sr"
    when a model is given and "bicubic" otherwise.
    """
    if images is None:
        images = "sr" if sr_model is not None else "bicubic"
    if images == "sr" and sr_model is None:
        raise ValueError("images='sr' requires an SR model")
    if not samples:
        raise ValueError("no samples to evaluate")

    psnrs, ssims, preds, gts, rows = [], [], [], [], []
    for s in sorted(samples, key=lambda x: x.sample_id):
        hr = s.hr_image
        if images == "sr":
            img = upsample(sr_model, s.lr_image)
        elif images == "bicubic":
            img = bicubic_resize(s.lr_image, hr.shape[:2])
        elif images == "hr":
            img = hr
        else:
            raise ValueError(f"unknown image source {images!r}")
        p = metrics.psnr(img, hr)
        m = metrics.ssim(img, hr)
        pred = read_text(evaluator, img)
        psnrs.append(p)
        ssims.append(m)
        preds.append(pred)
        gts.append(s.text)
        if keep_per_sample:
            rows.append({"id": s.sample_id, "psnr": p, "ssim": m, "pred": pred, "text": s.text})

    return EvalReport(
        split=samples[0].split,
        n_samples=len(samples),
        psnr_mean=float(np.mean(psnrs)),
        ssim_mean=float(np.mean(ssims)),
        accuracy=metrics.recognition_accuracy(preds, gts),
        images=images,
        config_fingerprint=config_fingerprint,
        per_sample=rows,
    )
