"""Losses and the SR training loop with attention distillation.

The total loss is pixel_loss + lambda_sfm * attention_loss. Both terms are
means over elements so lambda_sfm keeps a consistent meaning across image
and map sizes. The stroke recognizer is frozen: its attention maps on the
SR output are pulled toward its maps on the HR target, with gradients
flowing through the SR image only.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from .checkpoint import state_dict_hash
from .recognizer import (
    TransformerRecognizer,
    attention_for_batch,
    freeze,
    recognize_greedy,
)
from .runtime import configure_torch, seed_everything
from .sr_models import SRConfig, SRGenerator, save_sr
from .stroke_codec import EOS_ID
from .synth_data import TextSample

NORMS = ("l1", "l2")
FILTER_MODES = ("all", "correct", "wrong")

# mean SFM loss above this suggests SR/HR attention misalignment
SFM_DRIFT_THRESHOLD = 1e-1


@dataclass(frozen=True)
class TrainConfig:
    lambda_sfm: float = 50.0
    psm_norm: str = "l2"
    sfm_norm: str = "l1"
    batch_size: int = 16
    lr: float = 1e-4
    steps: int = 400
    seed: int = 0
    attention_filter: str = "all"
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if self.lambda_sfm < 0:
            raise ValueError("lambda_sfm must be non-negative")
        if self.psm_norm not in NORMS or self.sfm_norm not in NORMS:
            raise ValueError(f"norms must be one of {NORMS}")
        if self.attention_filter not in FILTER_MODES:
            raise ValueError(f"attention_filter must be one of {FILTER_MODES}")


def _elementwise(diff: torch.Tensor, norm: str) -> torch.Tensor:
    if norm == "l1":
        return diff.abs().mean()
    return (diff**2).mean()


def psm_loss(sr: torch.Tensor, hr: torch.Tensor, norm: str = "l2") -> torch.Tensor:
    """Mean pixel difference between SR output and HR target."""
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: {tuple(sr.shape)} vs {tuple(hr.shape)}")
    return _elementwise(sr - hr, norm)


def sfm_loss(attn_sr: torch.Tensor, attn_hr: torch.Tensor, norm: str = "l1") -> torch.Tensor:
    """Mean difference between SR-side and HR-side attention map sequences."""
    if attn_sr.shape != attn_hr.shape:
        raise ValueError(
            "attention shape mismatch (label misalignment?): "
            f"{tuple(attn_sr.shape)} vs {tuple(attn_hr.shape)}"
        )
    return _elementwise(attn_sr - attn_hr, norm)


def total_loss(
    sr: torch.Tensor,
    hr: torch.Tensor,
    attn_sr: torch.Tensor,
    attn_hr: torch.Tensor,
    cfg: TrainConfig,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Returns (total, psm, sfm)."""
    p = psm_loss(sr, hr, cfg.psm_norm)
    s = sfm_loss(attn_sr, attn_hr, cfg.sfm_norm)
    return p + cfg.lambda_sfm * s, p, s


def filter_attention_samples(
    samples: list[TextSample], frozen: TransformerRecognizer, mode: str
) -> list[TextSample]:
    """Samples whose HR attention maps the SFM loss may use.

    `correct` keeps samples the frozen recognizer reads correctly from HR,
    `wrong` keeps the complement, `all` keeps everything. The pixel loss
    always trains on every sample regardless of this filter.
    """
    if mode not in FILTER_MODES:
        raise ValueError(f"mode must be one of {FILTER_MODES}")
    if mode == "all":
        return list(samples)
    kept = []
    for s in samples:
        pred, _ = recognize_greedy(frozen, s.hr_image)
        is_correct = tuple(pred) == tuple(s.stroke_label.ids)
        if (mode == "correct") == is_correct:
            kept.append(s)
    return kept


def _stack_images(images: list[np.ndarray]) -> torch.Tensor:
    return torch.stack(
        [torch.as_tensor(im, dtype=torch.float32).permute(2, 0, 1) for im in images]
    )


def _pad_shifted(labels: list[tuple[int, ...]], start_id: int) -> torch.Tensor:
    t = max(len(l) for l in labels)
    out = torch.full((len(labels), t), EOS_ID, dtype=torch.long)
    for i, l in enumerate(labels):
        shifted = (start_id,) + tuple(l[:-1])
        out[i, : len(l)] = torch.as_tensor(shifted)
    return out


def train_sr(
    train_samples: list[TextSample],
    frozen_recognizer: TransformerRecognizer,
    sr_config: SRConfig,
    cfg: TrainConfig,
    out_dir: str | Path,
    *,
    recognizer_meta: dict | None = None,
) -> Path:
    """Train an SR generator against HR targets plus frozen-recognizer attention.

    Writes `log.jsonl` (one row per step), `config.json`, and `sr.ckpt` under
    out_dir; returns the checkpoint path.
    """
    configure_torch()
    seed_everything(cfg.seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    frozen = freeze(frozen_recognizer)
    frozen_hash_before = state_dict_hash(frozen.state_dict())

    model = SRGenerator(sr_config)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    sfm_ids = {s.sample_id for s in filter_attention_samples(train_samples, frozen, cfg.attention_filter)}

    # HR images and labels never change, so HR-side attention is computed once
    hr_imgs = _stack_images([s.hr_image for s in train_samples])
    lr_imgs = _stack_images([s.lr_image for s in train_samples])
    labels = [s.stroke_label.ids for s in train_samples]
    sfm_mask_all = torch.tensor([s.sample_id in sfm_ids for s in train_samples])

    (out_dir / "config.json").write_text(
        json.dumps({"sr": asdict(sr_config), "train": asdict(cfg)}, indent=2)
    )

    rng = np.random.default_rng(cfg.seed)
    n = len(train_samples)
    log_path = out_dir / "log.jsonl"
    sfm_history: list[float] = []
    with log_path.open("w") as log:
        for step in range(cfg.steps):
            idx = rng.choice(n, size=min(cfg.batch_size, n), replace=False)
            idx_t = torch.as_tensor(idx)
            lr_b = lr_imgs[idx_t]
            hr_b = hr_imgs[idx_t]
            batch_labels = [labels[i] for i in idx]
            shifted = _pad_shifted(batch_labels, frozen.cfg.start_id)
            step_mask = torch.zeros(len(idx), shifted.shape[1], dtype=torch.bool)
            for i, l in enumerate(batch_labels):
                step_mask[i, : len(l)] = True
            sfm_mask = sfm_mask_all[idx_t]

            model.train()
            sr_b = model(lr_b)
            with torch.no_grad():
                attn_hr = attention_for_batch(frozen, hr_b, shifted)
            attn_sr = attention_for_batch(frozen, sr_b, shifted)

            p = psm_loss(sr_b, hr_b, cfg.psm_norm)
            # padded decoder steps and filtered-out samples never contribute
            valid = step_mask & sfm_mask.unsqueeze(1)
            if valid.any():
                s = _elementwise((attn_sr - attn_hr)[valid], cfg.sfm_norm)
            else:
                s = torch.zeros((), dtype=p.dtype)
            loss = p + cfg.lambda_sfm * s

            if not torch.isfinite(loss):
                raise RuntimeError(f"SR training diverged (loss={loss.item()}) at step {step}")

            opt.zero_grad()
            loss.backward()
            opt.step()

            sfm_history.append(float(s.detach()))
            log.write(
                json.dumps(
                    {
                        "step": step,
                        "psm": float(p.detach()),
                        "sfm": float(s.detach()),
                        "total": float(loss.detach()),
                        "lr": cfg.lr,
                    }
                )
                + "\n"
            )
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                save_sr(out_dir / f"sr_step{step + 1}.ckpt", model, {"step": step + 1})

    if sfm_history and float(np.mean(sfm_history[-50:])) > SFM_DRIFT_THRESHOLD:
        warnings.warn(
            f"mean attention loss {np.mean(sfm_history[-50:]):.3g} exceeds "
            f"{SFM_DRIFT_THRESHOLD}; SR/HR attention maps look misaligned",
            stacklevel=2,
        )

    frozen_hash_after = state_dict_hash(frozen.state_dict())
    if frozen_hash_before != frozen_hash_after:
        raise RuntimeError("frozen recognizer parameters changed during SR training")

    meta = {
        "train_config": asdict(cfg),
        "steps": cfg.steps,
        "recognizer_hash": frozen_hash_after,
        "stroke_table_hash": (recognizer_meta or {}).get("stroke_table_hash"),
    }
    return save_sr(out_dir / "sr.ckpt", model, meta)
