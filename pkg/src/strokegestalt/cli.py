"""Command-line surface: dataset building, training, evaluation, inference."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import evaluation, synth_data, training
from .recognizer import (
    RecognizerConfig,
    pretrain_recognizer,
    save_recognizer,
    load_recognizer,
)
from .sr_models import SRConfig, load_sr, upsample
from .stroke_codec import load_stroke_table, builtin_table_path


def _manifest_path(data: str) -> Path:
    p = Path(data)
    return p if p.is_file() else p / "manifest.jsonl"


def _load_config(path: str | None) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


@click.group()
def main():
    """Stroke-aware scene-text super-resolution toolkit."""


@main.command("build-dataset")
@click.option("--corpus", required=True, type=click.Path(exists=True), help="one word per line")
@click.option("--stroke-table", default=None, type=click.Path(exists=True),
              help="defaults to the bundled latin_digits table")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--test-fraction", default=0.2, show_default=True)
@click.option("--canvas", default="32x128", show_default=True, help="HR canvas HxW")
@click.option("--max-label-len", default=None, type=int)
@click.option("--misalign", is_flag=True, help="random +-2px LR/HR offset (STN exercise)")
def build_dataset_cmd(corpus, stroke_table, out, seed, test_fraction, canvas, max_label_len, misalign):
    """Render and degrade a word corpus into an LR/HR dataset."""
    table_path = Path(stroke_table) if stroke_table else builtin_table_path("latin_digits")
    table = load_stroke_table(table_path)
    words = [w.strip() for w in Path(corpus).read_text().splitlines() if w.strip()]
    h, w = (int(t) for t in canvas.split("x"))
    spec = synth_data.DegradationSpec(misalign=misalign, rng_seed=seed)
    manifest = synth_data.build_dataset(
        words, table, spec, out,
        canvas=(h, w), test_fraction=test_fraction,
        max_label_len=max_label_len, global_seed=seed,
    )
    click.echo(f"wrote {manifest} ({len(words)} samples)")


def _load_split_arrays(manifest: Path, split: str):
    samples = synth_data.load_pairs(manifest, split)
    return samples, [s.hr_image for s in samples], [s.stroke_label.ids for s in samples]


@main.command("pretrain-recognizer")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
def pretrain_recognizer_cmd(data, config_path, out, seed):
    """Pre-train the stroke-level recognizer on HR images."""
    manifest = _manifest_path(data)
    meta = synth_data.read_meta(manifest)
    raw = _load_config(config_path)
    epochs = raw.pop("epochs", 30)
    batch_size = raw.pop("batch_size", 16)
    optimizer = raw.pop("optimizer", "adam")
    lr = raw.pop("lr", None)
    table = load_stroke_table(builtin_table_path(meta["stroke_table_script"]))
    raw.setdefault("vocab_size", table.vocab_size)
    cfg = RecognizerConfig(**raw)

    _, train_imgs, train_labels = _load_split_arrays(manifest, "train")
    _, test_imgs, test_labels = _load_split_arrays(manifest, "test")
    model, run_meta = pretrain_recognizer(
        train_imgs, train_labels, cfg,
        epochs=epochs, batch_size=batch_size, optimizer=optimizer, lr=lr, seed=seed,
        holdout=(test_imgs, test_labels),
        log_fn=lambda rec: click.echo(f"epoch {rec['epoch']}: loss {rec['loss']:.4f}"),
    )
    run_meta["stroke_table_hash"] = meta["stroke_table_hash"]
    out_dir = Path(out)
    path = save_recognizer(out_dir / "recognizer.ckpt" if out_dir.suffix == "" else out_dir, model, run_meta)
    click.echo(f"holdout token accuracy: {run_meta['holdout_token_accuracy']:.4f}")
    click.echo(f"wrote {path}")


@main.command("train-sr")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--recognizer", "recognizer_path", required=True, type=click.Path(exists=True))
@click.option("--backbone", type=click.Choice(["srcnn", "tsrn"]), default="srcnn", show_default=True)
@click.option("--lambda-sfm", default=50.0, show_default=True)
@click.option("--psm-norm", type=click.Choice(["l1", "l2"]), default="l2", show_default=True)
@click.option("--sfm-norm", type=click.Choice(["l1", "l2"]), default="l1", show_default=True)
@click.option("--filter", "filter_mode", type=click.Choice(["all", "correct", "wrong"]),
              default="all", show_default=True)
@click.option("--steps", default=400, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=1e-4, show_default=True)
@click.option("--channels", default=32, show_default=True)
@click.option("--no-stn", is_flag=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def train_sr_cmd(data, recognizer_path, backbone, lambda_sfm, psm_norm, sfm_norm,
                 filter_mode, steps, batch_size, lr, channels, no_stn, seed, out):
    """Train an SR generator with pixel + stroke-attention losses."""
    manifest = _manifest_path(data)
    ds_meta = synth_data.read_meta(manifest)
    frozen, rec_meta = load_recognizer(
        recognizer_path, expect_table_hash=ds_meta["stroke_table_hash"]
    )
    samples = synth_data.load_pairs(manifest, "train")
    sr_cfg = SRConfig(backbone=backbone, channels=channels, use_stn=not no_stn)
    cfg = training.TrainConfig(
        lambda_sfm=lambda_sfm, psm_norm=psm_norm, sfm_norm=sfm_norm,
        batch_size=batch_size, lr=lr, steps=steps, seed=seed,
        attention_filter=filter_mode,
    )
    ckpt = training.train_sr(
        samples, frozen, sr_cfg, cfg, out,
        recognizer_meta={"stroke_table_hash": ds_meta["stroke_table_hash"]},
    )
    click.echo(f"wrote {ckpt}")


@main.command("train-evaluator")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
def train_evaluator_cmd(data, config_path, out, seed):
    """Train the character-level evaluator used for scoring."""
    manifest = _manifest_path(data)
    raw = _load_config(config_path)
    epochs = raw.pop("epochs", 20)
    batch_size = raw.pop("batch_size", 16)
    optimizer = raw.pop("optimizer", "adam")
    lr = raw.pop("lr", None)
    blur_augment = raw.pop("blur_augment", True)
    raw.setdefault("vocab_size", evaluation.CHAR_VOCAB_SIZE)
    raw.setdefault("max_len", 10)
    cfg = RecognizerConfig(**raw)

    train = synth_data.load_pairs(manifest, "train")
    test = synth_data.load_pairs(manifest, "test")
    model, run_meta = evaluation.train_evaluator(
        train, cfg, epochs=epochs, batch_size=batch_size, optimizer=optimizer, lr=lr, seed=seed,
        blur_augment=blur_augment, holdout=test,
        log_fn=lambda rec: click.echo(f"epoch {rec['epoch']}: loss {rec['loss']:.4f}"),
    )
    out_path = Path(out)
    path = evaluation.save_evaluator(
        out_path / "evaluator.ckpt" if out_path.suffix == "" else out_path, model, run_meta
    )
    click.echo(f"holdout token accuracy: {run_meta['holdout_token_accuracy']:.4f}")
    click.echo(f"wrote {path}")


@main.command("evaluate")
@click.option("--sr", "sr_path", default=None, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--evaluator", "evaluator_path", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", show_default=True)
@click.option("--images", type=click.Choice(["sr", "bicubic", "hr"]), default=None,
              help="defaults to sr when --sr is given, else bicubic")
@click.option("--out", required=True, type=click.Path())
def evaluate_cmd(sr_path, data, evaluator_path, split, images, out):
    """Score a split with PSNR/SSIM and evaluator recognition accuracy."""
    manifest = _manifest_path(data)
    samples = synth_data.load_pairs(manifest, split)
    evaluator, _ = evaluation.load_evaluator(evaluator_path)
    sr_model = None
    fingerprint = "bicubic"
    if sr_path:
        sr_model, sr_meta = load_sr(sr_path)
        fingerprint = f"{sr_model.cfg.backbone}:{sr_meta.get('recognizer_hash', '')[:12]}"
    report = evaluation.evaluate(
        sr_model, samples, evaluator, images=images, config_fingerprint=fingerprint
    )
    report.save(out)
    click.echo(
        f"{report.images}: n={report.n_samples} psnr={report.psnr_mean:.3f} "
        f"ssim={report.ssim_mean:.4f} acc={report.accuracy:.4f}"
    )


@main.command("infer")
@click.option("--sr", "sr_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def infer_cmd(sr_path, in_path, out_path):
    """Upsample one image file x2 with a trained SR checkpoint."""
    model, _ = load_sr(sr_path)
    img = np.asarray(Image.open(in_path).convert("RGB"), dtype=np.float64) / 255.0
    sr = upsample(model, img)
    Image.fromarray(np.round(sr * 255).astype(np.uint8)).save(out_path)
    click.echo(f"wrote {out_path} ({sr.shape[0]}x{sr.shape[1]})")


@main.command("report")
@click.option("--runs", multiple=True, required=True, type=click.Path(exists=True),
              help="run directories containing log.jsonl (+ optional report.json)")
@click.option("--out", required=True, type=click.Path())
def report_cmd(runs, out):
    """Plot loss trends across runs, plus a lambda-sweep accuracy chart if available."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    fig, (ax_psm, ax_sfm) = plt.subplots(1, 2, figsize=(11, 4))
    sweep = []
    for run in runs:
        run = Path(run)
        log = run / "log.jsonl"
        if not log.is_file():
            continue
        rows = [json.loads(l) for l in log.read_text().splitlines() if l.strip()]
        steps = [r["step"] for r in rows]
        label = run.name
        ax_psm.plot(steps, [r["psm"] for r in rows], label=label)
        ax_sfm.plot(steps, [r["sfm"] for r in rows], label=label)
        cfg_file = run / "config.json"
        rep_file = run / "report.json"
        if cfg_file.is_file() and rep_file.is_file():
            cfg = json.loads(cfg_file.read_text())
            rep = json.loads(rep_file.read_text())
            sweep.append((cfg["train"]["lambda_sfm"], rep["accuracy"]))
    ax_psm.set_title("pixel loss")
    ax_sfm.set_title("attention loss")
    for ax in (ax_psm, ax_sfm):
        ax.set_xlabel("step")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_dir / "loss_trends.png", dpi=120)
    plt.close(fig)

    if sweep:
        sweep.sort()
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot([s[0] for s in sweep], [s[1] for s in sweep], marker="o")
        ax.set_xscale("symlog")
        ax.set_xlabel("lambda_sfm")
        ax.set_ylabel("evaluator accuracy")
        fig.tight_layout()
        fig.savefig(out_dir / "lambda_sweep.png", dpi=120)
        plt.close(fig)
    click.echo(f"wrote plots to {out_dir}")


if __name__ == "__main__":
    main()
