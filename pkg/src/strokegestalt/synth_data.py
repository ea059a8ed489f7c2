"""Synthetic text rendering, degradation, and the LR/HR dataset on disk.

HR images are rendered word crops; LR counterparts are produced by blurring
the HR image n times (n uniform in 1..5, each blur drawn from four kinds)
and bicubic-downsampling by 2. Bicubic uses the Catmull-Rom kernel
(a = -0.5, Pillow's BICUBIC) so independent implementations can match.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

from .stroke_codec import StrokeLabel, StrokeTable, encode_label
from . import __version__

DEFAULT_FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf"

BLUR_KINDS = ("gaussian", "box", "motion_h", "motion_v")


@dataclass(frozen=True)
class RenderStyle:
    """Font and color choices for the renderer; jitter is driven by the seed."""

    font_path: str = DEFAULT_FONT
    min_font_size: int = 8
    fg_gray: tuple[int, int] = (0, 80)  # sampled text intensity range
    bg_gray: tuple[int, int] = (180, 255)  # sampled background intensity range
    color_jitter: int = 25  # per-channel tint amplitude


@dataclass(frozen=True)
class DegradationSpec:
    """Blur-then-downsample recipe for making LR images from HR images."""

    n_ops_range: tuple[int, int] = (1, 5)  # inclusive
    blur_types: tuple[str, ...] = BLUR_KINDS
    gaussian_sigma: tuple[float, float] = (0.8, 2.0)
    box_sizes: tuple[int, ...] = (3, 5)
    motion_lengths: tuple[int, ...] = (3, 4, 5, 6, 7)
    downsample_factor: int = 2
    misalign: bool = False  # optional +-2px LR translation, exercises the STN
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.blur_types) != 4:
            raise ValueError("exactly 4 blur kinds are required")
        if self.downsample_factor != 2:
            raise ValueError("only x2 downsampling is supported")


def sample_seed(global_seed: int, sample_id: str) -> int:
    """Stable per-sample seed so parallel generation is order-independent."""
    h = hashlib.sha256(f"{global_seed}:{sample_id}".encode()).digest()
    return int.from_bytes(h[:8], "big")


def _fit_font(text: str, style: RenderStyle, h: int, w: int) -> ImageFont.FreeTypeFont:
    size = max(int(h * 0.75), style.min_font_size)
    while size >= style.min_font_size:
        font = ImageFont.truetype(style.font_path, size)
        x0, y0, x1, y1 = font.getbbox(text)
        if x1 - x0 <= w - 4 and y1 - y0 <= h - 2:
            return font
        size -= 1
    raise ValueError(f"text {text!r} does not fit a {h}x{w} canvas at minimum font size")


def render_text_image(
    text: str,
    style: RenderStyle,
    canvas: tuple[int, int],
    seed: int = 0,
) -> np.ndarray:
    """Render one word onto an HxW canvas; returns HxWx3 float image in [0,1]."""
    if not text:
        raise ValueError("cannot render empty text")
    h, w = canvas
    rng = np.random.default_rng(seed)
    font = _fit_font(text, style, h, w)

    bg = rng.integers(*style.bg_gray, endpoint=True)
    fg = rng.integers(*style.fg_gray, endpoint=True)
    tint = rng.integers(-style.color_jitter, style.color_jitter, size=3, endpoint=True)
    bg_rgb = tuple(int(np.clip(bg + t, 0, 255)) for t in tint)
    fg_rgb = tuple(int(np.clip(fg + t, 0, 255)) for t in -tint)

    img = Image.new("RGB", (w, h), bg_rgb)
    draw = ImageDraw.Draw(img)
    x0, y0, x1, y1 = font.getbbox(text)
    free_x = w - (x1 - x0)
    free_y = h - (y1 - y0)
    # jittered placement, always fully inside the canvas
    ox = int(rng.integers(0, max(free_x - 1, 0) + 1)) - x0
    oy = int(rng.integers(0, max(free_y - 1, 0) + 1)) - y0
    draw.text((ox, oy), text, font=font, fill=fg_rgb)
    return np.asarray(img, dtype=np.float64) / 255.0


def _apply_blur(img: np.ndarray, kind: str, spec: DegradationSpec, rng) -> np.ndarray:
    if kind == "gaussian":
        sigma = rng.uniform(*spec.gaussian_sigma)
        out = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0))
    elif kind == "box":
        size = int(rng.choice(spec.box_sizes))
        out = ndimage.uniform_filter(img, size=(size, size, 1))
    elif kind == "motion_h":
        length = int(rng.choice(spec.motion_lengths))
        out = ndimage.uniform_filter1d(img, size=length, axis=1)
    elif kind == "motion_v":
        length = int(rng.choice(spec.motion_lengths))
        out = ndimage.uniform_filter1d(img, size=length, axis=0)
    else:
        raise ValueError(f"unknown blur kind {kind!r}")
    return np.clip(out, 0.0, 1.0)


def bicubic_resize(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Bicubic (Catmull-Rom) resize of an HxWxC float image in [0,1]."""
    h, w = out_hw
    pil = Image.fromarray(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8))
    out = pil.resize((w, h), Image.BICUBIC)
    return np.asarray(out, dtype=np.float64) / 255.0


def num_ops_for_seed(spec: DegradationSpec, seed: int) -> int:
    """The blur count degrade() will use for this seed (its first RNG draw)."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.n_ops_range
    return int(rng.integers(lo, hi + 1))


def degrade(hr: np.ndarray, spec: DegradationSpec, seed: int) -> np.ndarray:
    """Blur the HR image n times (n uniform in n_ops_range) and downsample by 2."""
    hr = np.asarray(hr, dtype=np.float64)
    h, w = hr.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"HR dims must be divisible by 2, got {h}x{w}")
    rng = np.random.default_rng(seed)
    lo, hi = spec.n_ops_range
    n = int(rng.integers(lo, hi + 1))
    img = hr
    for _ in range(n):
        kind = spec.blur_types[int(rng.integers(0, len(spec.blur_types)))]
        img = _apply_blur(img, kind, spec, rng)
    lr = bicubic_resize(img, (h // 2, w // 2))
    if spec.misalign:
        dy, dx = rng.integers(-2, 3, size=2)
        lr = np.roll(lr, (int(dy), int(dx)), axis=(0, 1))
    return np.clip(lr, 0.0, 1.0)


@dataclass
class TextSample:
    """One LR/HR pair with its labels; images load lazily from disk."""

    sample_id: str
    split: str
    text: str
    stroke_label: StrokeLabel
    lr_path: Path
    hr_path: Path
    lr_shape: tuple[int, int, int]
    hr_shape: tuple[int, int, int]
    seed: int
    _lr: np.ndarray | None = field(default=None, repr=False)
    _hr: np.ndarray | None = field(default=None, repr=False)

    def _load(self, path: Path, shape) -> np.ndarray:
        if not path.is_file():
            raise FileNotFoundError(f"sample {self.sample_id}: missing image {path}")
        img = np.asarray(Image.open(path), dtype=np.float64) / 255.0
        if img.shape != tuple(shape):
            raise ValueError(
                f"sample {self.sample_id}: image {path} has shape {img.shape}, "
                f"manifest says {tuple(shape)}"
            )
        return img

    @property
    def lr_image(self) -> np.ndarray:
        if self._lr is None:
            self._lr = self._load(self.lr_path, self.lr_shape)
        return self._lr

    @property
    def hr_image(self) -> np.ndarray:
        if self._hr is None:
            self._hr = self._load(self.hr_path, self.hr_shape)
        return self._hr


def build_dataset(
    corpus: list[str],
    table: StrokeTable,
    spec: DegradationSpec,
    out_dir: str | Path,
    *,
    canvas: tuple[int, int] = (32, 128),
    style: RenderStyle | None = None,
    test_fraction: float = 0.2,
    max_label_len: int | None = None,
    global_seed: int = 0,
) -> Path:
    """Render + degrade every corpus word and write images plus manifest.jsonl."""
    style = style or RenderStyle()
    out_dir = Path(out_dir)
    (out_dir / "images" / "lr").mkdir(parents=True, exist_ok=True)
    (out_dir / "images" / "hr").mkdir(parents=True, exist_ok=True)

    n_test = int(round(len(corpus) * test_fraction))
    n_train = len(corpus) - n_test

    rows = []
    for idx, text in enumerate(corpus):
        label = encode_label(table, text)  # raises on unencodable characters
        if max_label_len is not None and len(label) > max_label_len:
            raise ValueError(
                f"text {text!r} has stroke label length {len(label)} > limit {max_label_len}"
            )
        sample_id = f"s{idx:06d}"
        seed = sample_seed(global_seed, sample_id)
        hr = render_text_image(text, style, canvas, seed=seed)
        lr = degrade(hr, spec, seed=seed + 1)

        lr_rel = f"images/lr/{sample_id}.png"
        hr_rel = f"images/hr/{sample_id}.png"
        Image.fromarray(np.round(hr * 255).astype(np.uint8)).save(out_dir / hr_rel)
        Image.fromarray(np.round(lr * 255).astype(np.uint8)).save(out_dir / lr_rel)
        rows.append(
            {
                "id": sample_id,
                "split": "train" if idx < n_train else "test",
                "text": text,
                "stroke_ids": list(label.ids),
                "lr_path": lr_rel,
                "hr_path": hr_rel,
                "lr_shape": list(lr.shape),
                "hr_shape": list(hr.shape),
                "seed": seed,
            }
        )

    manifest = out_dir / "manifest.jsonl"
    with manifest.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    meta = {
        "degradation": asdict(spec),
        "stroke_table_hash": table.table_hash(),
        "stroke_table_script": table.script_name,
        "generator_version": __version__,
        "canvas": list(canvas),
        "global_seed": global_seed,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return manifest


def read_meta(manifest_path: str | Path) -> dict:
    return json.loads((Path(manifest_path).parent / "meta.json").read_text())


def load_pairs(manifest_path: str | Path, split: str) -> list[TextSample]:
    """Samples of one split, in manifest order; images load lazily on access."""
    if split not in ("train", "test"):
        raise ValueError(f"split must be train or test, got {split!r}")
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    root = manifest_path.parent
    samples = []
    for line in manifest_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        if row["split"] != split:
            continue
        samples.append(
            TextSample(
                sample_id=row["id"],
                split=row["split"],
                text=row["text"],
                stroke_label=StrokeLabel(ids=tuple(row["stroke_ids"]), source_text=row["text"]),
                lr_path=root / row["lr_path"],
                hr_path=root / row["hr_path"],
                lr_shape=tuple(row["lr_shape"]),
                hr_shape=tuple(row["hr_shape"]),
                seed=row["seed"],
            )
        )
    return samples


def random_words(
    n: int,
    rng_seed: int = 0,
    min_len: int = 2,
    max_len: int = 6,
    alphabet: str = "abcdefghijklmnopqrstuvwxyz0123456789",
) -> list[str]:
    """Seeded random word corpus for toy benchmarks."""
    rng = np.random.default_rng(rng_seed)
    words = []
    for _ in range(n):
        k = int(rng.integers(min_len, max_len + 1))
        words.append("".join(rng.choice(list(alphabet), size=k)))
    return words
