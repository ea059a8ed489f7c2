"""Transformer sequence recognizer with per-step spatial attention maps.

The same architecture serves two roles: the stroke-level recognizer that is
pre-trained, frozen, and then supervises SR training through its
cross-attention maps; and the character-level evaluator used only for
scoring. The decoder attends to the encoder's H/4 x W/4 feature grid, so
each decoding step yields one spatial attention map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint, verify_table_hash
from .runtime import configure_torch, seed_everything
from .stroke_codec import EOS_ID

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class RecognizerConfig:
    vocab_size: int  # stroke or char classes + eos + start
    max_len: int = 24
    d_feat: int = 128
    model_dim: int = 128
    heads: int = 4
    decoder_blocks: int = 1
    input_channels: int = 1
    encoder: str = "toy"  # "toy" (3 convs) or "full" (ResNet-style blocks)

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ValueError("model_dim must be divisible by heads")

    @property
    def start_id(self) -> int:
        return self.vocab_size - 1


def full_config(vocab_size: int, max_len: int = 32) -> RecognizerConfig:
    return RecognizerConfig(
        vocab_size=vocab_size,
        max_len=max_len,
        d_feat=1024,
        model_dim=512,
        heads=4,
        decoder_blocks=1,
        encoder="full",
    )


@dataclass
class AttentionMapSequence:
    """Per-step spatial attention maps aligned with the teacher-forcing targets."""

    maps: np.ndarray  # (steps, H/4, W/4), each map sums to 1
    step_targets: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.step_targets)


def to_gray_torch(images: torch.Tensor) -> torch.Tensor:
    """(B,C,H,W) -> (B,1,H,W) luma; identity for single-channel input."""
    if images.shape[1] == 1:
        return images
    w = torch.tensor(LUMA_WEIGHTS, dtype=images.dtype, device=images.device)
    return (images * w.view(1, 3, 1, 1)).sum(dim=1, keepdim=True)


def sinusoid_encoding(length: int, dim: int, device=None, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, device=device, dtype=dtype).unsqueeze(1)
    idx = torch.arange(0, dim, 2, device=device, dtype=dtype)
    div = torch.exp(-math.log(10000.0) * idx / dim)
    pe = torch.zeros(length, dim, device=device, dtype=dtype)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe


class _BasicBlock(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.skip = (
            nn.Sequential(nn.Conv2d(cin, cout, 1, bias=False), nn.BatchNorm2d(cout))
            if cin != cout
            else nn.Identity()
        )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.skip(x))


def _make_encoder(cfg: RecognizerConfig) -> nn.Module:
    cin = cfg.input_channels
    if cfg.encoder == "toy":
        return nn.Sequential(
            nn.Conv2d(cin, 32, 3, padding=1),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(64, cfg.d_feat, 3, padding=1),
            nn.BatchNorm2d(cfg.d_feat),
            nn.ReLU(inplace=True),
        )
    if cfg.encoder == "full":
        # conv stems with two 2x max-pools, then residual block stacks 3/4/6/3
        layers: list[nn.Module] = [
            nn.Conv2d(cin, 64, 3, padding=1),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(64, 128, 3, padding=1),
            nn.BatchNorm2d(128),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
        ]
        chans = 128
        for count, cout in ((3, 256), (4, 256), (6, 512), (3, cfg.d_feat)):
            for _ in range(count):
                layers.append(_BasicBlock(chans, cout))
                chans = cout
        return nn.Sequential(*layers)
    raise ValueError(f"unknown encoder kind {cfg.encoder!r}")


class _DecoderBlock(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm1 = nn.LayerNorm(dim)
        self.cross_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, 4 * dim), nn.ReLU(inplace=True), nn.Linear(4 * dim, dim))
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, x, memory, causal_mask):
        h, _ = self.self_attn(x, x, x, attn_mask=causal_mask, need_weights=False)
        x = self.norm1(x + h)
        h, cross_w = self.cross_attn(
            x, memory, memory, need_weights=True, average_attn_weights=True
        )
        x = self.norm2(x + h)
        x = self.norm3(x + self.ffn(x))
        return x, cross_w  # cross_w: (B, T, S), head-averaged


class TransformerRecognizer(nn.Module):
    def __init__(self, cfg: RecognizerConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = _make_encoder(cfg)
        self.mem_proj = nn.Linear(cfg.d_feat, cfg.model_dim)
        self.embed = nn.Embedding(cfg.vocab_size, cfg.model_dim)
        self.blocks = nn.ModuleList(
            _DecoderBlock(cfg.model_dim, cfg.heads) for _ in range(cfg.decoder_blocks)
        )
        self.out_proj = nn.Linear(cfg.model_dim, cfg.vocab_size)

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        """(B,C,H,W) with H,W divisible by 4 -> (B, d_feat, H/4, W/4)."""
        _, _, h, w = images.shape
        if h % 4 or w % 4:
            raise ValueError(f"image dims must be divisible by 4, got {h}x{w}")
        if images.shape[1] == 3 and self.cfg.input_channels == 1:
            images = to_gray_torch(images)
        return self.encoder(images)

    def decode(self, feat: torch.Tensor, tokens: torch.Tensor):
        """Teacher-forced decode.

        feat: (B, d_feat, h, w); tokens: (B, T) right-shifted ids.
        Returns logits (B, T, vocab) and cross-attention maps (B, T, h, w)
        from the final decoder block, head-averaged and renormalized.
        """
        b, _, h, w = feat.shape
        t = tokens.shape[1]
        if int(tokens.max()) >= self.cfg.vocab_size or int(tokens.min()) < 0:
            raise ValueError("token id out of vocab range")
        memory = feat.flatten(2).transpose(1, 2)  # (B, S, d_feat)
        memory = self.mem_proj(memory)
        memory = memory + sinusoid_encoding(
            memory.shape[1], self.cfg.model_dim, feat.device, memory.dtype
        )
        x = self.embed(tokens) + sinusoid_encoding(t, self.cfg.model_dim, feat.device, memory.dtype)
        causal = torch.triu(
            torch.ones(t, t, dtype=torch.bool, device=feat.device), diagonal=1
        )
        cross_w = None
        for block in self.blocks:
            x, cross_w = block(x, memory, causal)
        logits = self.out_proj(x)
        attn = cross_w / cross_w.sum(dim=-1, keepdim=True).clamp_min(1e-12)
        return logits, attn.view(b, t, h, w)

    def forward(self, images: torch.Tensor, tokens: torch.Tensor):
        return self.decode(self.encode(images), tokens)


# ---------------------------------------------------------------------------
# numpy-facing wrappers


def _image_to_tensor(image: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    return torch.as_tensor(image, dtype=dtype).permute(2, 0, 1).unsqueeze(0)


def encode_image(model: TransformerRecognizer, image: np.ndarray) -> np.ndarray:
    """Grayscale HxW(x1) image -> (H/4, W/4, d_feat) feature map."""
    model.eval()
    with torch.no_grad():
        feat = model.encode(_image_to_tensor(image))
    return feat[0].permute(1, 2, 0).numpy()


def decode_teacher_forced(
    model: TransformerRecognizer, feat: np.ndarray, shifted: list[int] | tuple[int, ...]
):
    """Feature map (h,w,d) + right-shifted ids -> (logits TxV, AttentionMapSequence)."""
    model.eval()
    feat_t = torch.as_tensor(np.asarray(feat), dtype=torch.float32).permute(2, 0, 1).unsqueeze(0)
    tokens = torch.as_tensor(list(shifted), dtype=torch.long).unsqueeze(0)
    with torch.no_grad():
        logits, attn = model.decode(feat_t, tokens)
    return logits[0].numpy(), AttentionMapSequence(
        maps=attn[0].numpy(), step_targets=tuple(shifted)
    )


def extract_attention(
    model: TransformerRecognizer, image: np.ndarray, label_ids: tuple[int, ...]
) -> AttentionMapSequence:
    """Teacher-forced attention maps for a ground-truth label on one image."""
    if len(label_ids) > model.cfg.max_len:
        raise ValueError(f"label length {len(label_ids)} exceeds max_len {model.cfg.max_len}")
    model.eval()
    shifted = (model.cfg.start_id,) + tuple(label_ids[:-1])
    with torch.no_grad():
        _, attn = model(_image_to_tensor(image), torch.as_tensor([shifted]))
    return AttentionMapSequence(maps=attn[0].numpy(), step_targets=tuple(label_ids))


def attention_for_batch(
    model: TransformerRecognizer, images: torch.Tensor, shifted: torch.Tensor
) -> torch.Tensor:
    """Differentiable batch path used by SR training: (B,C,H,W),(B,T) -> (B,T,h,w).

    Gradients flow into the images; call with model parameters frozen.
    """
    _, attn = model(images, shifted)
    return attn


def recognize_greedy(model: TransformerRecognizer, image: np.ndarray):
    """Autoregressive argmax decode until eos or max_len; ties -> lowest id."""
    model.eval()
    img_t = _image_to_tensor(image)
    with torch.no_grad():
        feat = model.encode(img_t)
        ids: list[int] = []
        attn_rows = []
        for _ in range(model.cfg.max_len):
            tokens = torch.as_tensor([[model.cfg.start_id] + ids], dtype=torch.long)
            logits, attn = model.decode(feat, tokens)
            step_logits = logits[0, -1].numpy()
            nxt = int(np.argmax(step_logits))  # first max -> lowest id on ties
            ids.append(nxt)
            attn_rows.append(attn[0, -1].numpy())
            if nxt == EOS_ID:
                break
    return ids, AttentionMapSequence(maps=np.stack(attn_rows), step_targets=tuple(ids))


# ---------------------------------------------------------------------------
# pre-training


def _pad_batch(seqs: list[tuple[int, ...]], start_id: int):
    """Right-shifted inputs padded with eos, targets padded with ignore_index."""
    t = max(len(s) for s in seqs)
    inp = torch.full((len(seqs), t), EOS_ID, dtype=torch.long)
    tgt = torch.full((len(seqs), t), -100, dtype=torch.long)
    for i, s in enumerate(seqs):
        shifted = (start_id,) + tuple(s[:-1])
        inp[i, : len(s)] = torch.as_tensor(shifted)
        tgt[i, : len(s)] = torch.as_tensor(s)
    return inp, tgt


def teacher_forced_token_accuracy(
    model: TransformerRecognizer, images: list[np.ndarray], labels: list[tuple[int, ...]],
    batch_size: int = 32,
) -> float:
    model.eval()
    hits = total = 0
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            chunk_imgs = images[i : i + batch_size]
            chunk_labels = labels[i : i + batch_size]
            inp, tgt = _pad_batch(chunk_labels, model.cfg.start_id)
            x = torch.cat([_image_to_tensor(im) for im in chunk_imgs])
            logits, _ = model(x, inp)
            pred = logits.argmax(-1)
            mask = tgt != -100
            hits += int((pred[mask] == tgt[mask]).sum())
            total += int(mask.sum())
    return hits / max(total, 1)


def pretrain_recognizer(
    images: list[np.ndarray],
    labels: list[tuple[int, ...]],
    cfg: RecognizerConfig,
    *,
    epochs: int = 30,
    batch_size: int = 16,
    optimizer: str = "adam",
    lr: float | None = None,
    lr_milestones: tuple[int, ...] = (18, 26),
    lr_gamma: float = 0.3,
    seed: int = 0,
    holdout: tuple[list[np.ndarray], list[tuple[int, ...]]] | None = None,
    augment_fn=None,  # (batch tensor (B,C,H,W), rng) -> tensor, applied per batch
    log_fn=None,
) -> tuple[TransformerRecognizer, dict]:
    """Cross-entropy training with teacher forcing.

    Adam (lr 1e-3, stepped decay) is the desk-scale default; pass
    optimizer="adadelta", lr=1.0 for the original training recipe.
    """
    configure_torch()
    seed_everything(seed)
    model = TransformerRecognizer(cfg)
    if optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=1e-3 if lr is None else lr)
    elif optimizer == "adadelta":
        opt = torch.optim.Adadelta(model.parameters(), lr=1.0 if lr is None else lr)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    sched = torch.optim.lr_scheduler.MultiStepLR(opt, milestones=list(lr_milestones), gamma=lr_gamma)
    rng = np.random.default_rng(seed)
    n = len(images)
    history = []
    tensors = [_image_to_tensor(im) for im in images]

    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        model.train()
        epoch_loss = 0.0
        nb = 0
        for i in range(0, n, batch_size):
            idx = order[i : i + batch_size]
            x = torch.cat([tensors[j] for j in idx])
            if augment_fn is not None:
                x = augment_fn(x, rng)
            inp, tgt = _pad_batch([labels[j] for j in idx], cfg.start_id)
            logits, _ = model(x, inp)
            loss = F.cross_entropy(logits.reshape(-1, cfg.vocab_size), tgt.reshape(-1))
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"recognizer training diverged (loss={loss.item()}) at step {step}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
            nb += 1
            step += 1
        sched.step()
        history.append({"epoch": epoch, "loss": epoch_loss / max(nb, 1)})
        if log_fn:
            log_fn(history[-1])

    meta = {"epochs": epochs, "steps": step, "optimizer": optimizer, "history": history}
    if holdout is not None:
        meta["holdout_token_accuracy"] = teacher_forced_token_accuracy(model, *holdout)
    else:
        meta["holdout_token_accuracy"] = None
    return model, meta


def save_recognizer(path, model: TransformerRecognizer, meta: dict):
    return save_checkpoint(
        path,
        kind="recognizer",
        config=asdict(model.cfg),
        state_dict=model.state_dict(),
        meta=meta,
    )


def load_recognizer(path, *, expect_table_hash: str | None = None) -> tuple[TransformerRecognizer, dict]:
    blob = load_checkpoint(path, expect_kind="recognizer")
    if expect_table_hash is not None:
        verify_table_hash(blob, expect_table_hash, str(path))
    cfg = RecognizerConfig(**blob["config"])
    model = TransformerRecognizer(cfg)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob["meta"]


def freeze(model: TransformerRecognizer) -> TransformerRecognizer:
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model
