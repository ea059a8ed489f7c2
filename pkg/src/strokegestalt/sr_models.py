"""Super-resolution generators: STN rectifier, SRCNN/TSRN mini backbones,
and x2 pixel-shuffle upsampling.

Backbones run at LR resolution and finish with a pixel shuffle, so the
output is exactly twice the input size. Outputs are clamped to [0,1].
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint

BACKBONES = ("srcnn", "tsrn")


@dataclass(frozen=True)
class SRConfig:
    backbone: str = "srcnn"
    channels: int = 32
    num_blocks: int = 3  # tsrn only
    use_stn: bool = True
    scale: int = 2

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}")
        if self.scale != 2:
            raise ValueError("only x2 super-resolution is supported")


def pixel_shuffle(feat: np.ndarray, r: int) -> np.ndarray:
    """Rearrange (H, W, C*r^2) -> (H*r, W*r, C); pure permutation of values.

    Index law: out[y, x, c] = feat[y//r, x//r, c*r^2 + (y%r)*r + (x%r)].
    """
    feat = np.asarray(feat)
    h, w, cr2 = feat.shape
    if cr2 % (r * r):
        raise ValueError(f"channel count {cr2} not divisible by r^2={r * r}")
    c = cr2 // (r * r)
    # (H, W, C, r_y, r_x) -> (H, r_y, W, r_x, C)
    x = feat.reshape(h, w, c, r, r)
    x = x.transpose(0, 3, 1, 4, 2)
    return x.reshape(h * r, w * r, c)


class STN(nn.Module):
    """Predicts a 6-parameter affine warp; exact identity at initialization."""

    def __init__(self, in_channels: int = 3):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(in_channels, 16, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(16, 16, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d((4, 8)),
        )
        self.head = nn.Linear(16 * 4 * 8, 6)
        nn.init.zeros_(self.head.weight)
        self.head.bias.data = torch.tensor([1, 0, 0, 0, 1, 0], dtype=torch.float32)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        theta = self.head(self.features(x).flatten(1)).view(-1, 2, 3)
        grid = F.affine_grid(theta, list(x.shape), align_corners=False)
        return F.grid_sample(x, grid, align_corners=False, padding_mode="border")


class SRCNNMini(nn.Module):
    """3 conv layers (9-1-5 kernels) at LR resolution, then pixel shuffle."""

    def __init__(self, channels: int = 32, scale: int = 2):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(3, channels, 9, padding=4),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels // 2, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels // 2, 3 * scale * scale, 5, padding=2),
        )
        self.shuffle = nn.PixelShuffle(scale)

    def forward(self, x):
        return self.shuffle(self.body(x))


class _SequentialResidualBlock(nn.Module):
    """Conv + row-wise then column-wise recurrent passes, with a residual skip."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn = nn.BatchNorm2d(channels)
        self.row_rnn = nn.GRU(channels, channels // 2, batch_first=True, bidirectional=True)
        self.col_rnn = nn.GRU(channels, channels // 2, batch_first=True, bidirectional=True)

    @staticmethod
    def _sweep(x: torch.Tensor, rnn: nn.GRU) -> torch.Tensor:
        # treat each row as a sequence over width: (B,C,H,W) -> (B*H, W, C)
        b, c, h, w = x.shape
        seq = x.permute(0, 2, 3, 1).reshape(b * h, w, c)
        out, _ = rnn(seq)
        return out.reshape(b, h, w, c).permute(0, 3, 1, 2)

    def forward(self, x):
        h = F.relu(self.bn(self.conv(x)))
        h = self._sweep(h, self.row_rnn)
        h = self._sweep(h.transpose(2, 3), self.col_rnn).transpose(2, 3)
        return x + h


class TSRNMini(nn.Module):
    def __init__(self, channels: int = 32, num_blocks: int = 3, scale: int = 2):
        super().__init__()
        self.head = nn.Conv2d(3, channels, 3, padding=1)
        self.blocks = nn.Sequential(*(_SequentialResidualBlock(channels) for _ in range(num_blocks)))
        self.tail = nn.Conv2d(channels, 3 * scale * scale, 3, padding=1)
        self.shuffle = nn.PixelShuffle(scale)

    def forward(self, x):
        h = F.relu(self.head(x))
        h = self.blocks(h)
        return self.shuffle(self.tail(h))


class SRGenerator(nn.Module):
    """Optional STN rectifier followed by the selected backbone."""

    def __init__(self, cfg: SRConfig):
        super().__init__()
        self.cfg = cfg
        self.stn = STN() if cfg.use_stn else None
        if cfg.backbone == "srcnn":
            self.backbone = SRCNNMini(cfg.channels, cfg.scale)
        else:
            self.backbone = TSRNMini(cfg.channels, cfg.num_blocks, cfg.scale)

    def rectify(self, x: torch.Tensor) -> torch.Tensor:
        return self.stn(x) if self.stn is not None else x

    def forward(self, lr: torch.Tensor) -> torch.Tensor:
        # backbone predicts a residual over the bicubic upsample
        x = self.rectify(lr)
        base = F.interpolate(x, scale_factor=self.cfg.scale, mode="bicubic", align_corners=False)
        return (self.backbone(x) + base).clamp(0.0, 1.0)


def upsample(model: SRGenerator, lr: np.ndarray) -> np.ndarray:
    """HxWx3 LR image in [0,1] -> 2Hx2Wx3 SR image in [0,1]."""
    lr = np.asarray(lr, dtype=np.float64)
    h, w = lr.shape[:2]
    if h % 4 or w % 4:
        raise ValueError(f"LR dims must be divisible by 4, got {h}x{w}")
    model.eval()
    with torch.no_grad():
        x = torch.as_tensor(lr, dtype=torch.float32).permute(2, 0, 1).unsqueeze(0)
        sr = model(x)
    return sr[0].permute(1, 2, 0).double().numpy()


def save_sr(path, model: SRGenerator, meta: dict):
    return save_checkpoint(
        path, kind="sr", config=asdict(model.cfg), state_dict=model.state_dict(), meta=meta
    )


def load_sr(path) -> tuple[SRGenerator, dict]:
    blob = load_checkpoint(path, expect_kind="sr")
    model = SRGenerator(SRConfig(**blob["config"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob["meta"]
