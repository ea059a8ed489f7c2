"""Pilot: does a blur-augmented frozen recognizer make the attention loss help?"""

import json
import time

import torch

from strokegestalt import evaluation as ev
from strokegestalt import synth_data as sd
from strokegestalt import training as tr
from strokegestalt.evaluation import _batch_blur_augment
from strokegestalt.recognizer import (
    RecognizerConfig, TransformerRecognizer, load_recognizer,
    pretrain_recognizer, save_recognizer,
)
from strokegestalt.sr_models import SRConfig, load_sr
from strokegestalt.stroke_codec import load_builtin_table

RESULTS = "/tmp/aug_pilot_results.jsonl"


def main():
    table = load_builtin_table()
    train = sd.load_pairs("/tmp/ds_light/manifest.jsonl", "train")
    test = sd.load_pairs("/tmp/ds_light/manifest.jsonl", "test")[:200]

    t0 = time.time()
    cfg = RecognizerConfig(vocab_size=table.vocab_size, max_len=24)
    model, meta = pretrain_recognizer(
        [s.hr_image for s in train], [s.stroke_label.ids for s in train], cfg,
        epochs=30, seed=0, augment_fn=_batch_blur_augment,
        holdout=([s.hr_image for s in test], [s.stroke_label.ids for s in test]),
    )
    meta["stroke_table_hash"] = table.table_hash()
    save_recognizer("/tmp/rec_light_aug.ckpt", model, meta)
    print({"stage": "recognizer", "secs": round(time.time() - t0),
           "token_acc": round(meta["holdout_token_accuracy"], 4)}, flush=True)

    frozen, _ = load_recognizer("/tmp/rec_light_aug.ckpt")
    evalr = TransformerRecognizer(ev.evaluator_config(max_len=8))
    evalr.load_state_dict(torch.load("/tmp/eval_light.pt"))
    evalr.eval()

    with open(RESULTS, "a") as out:
        for lam in (0.0, 50.0):
            name = f"aug_srcnn_l{lam:g}_s1500"
            t0 = time.time()
            cfg = tr.TrainConfig(lambda_sfm=lam, steps=1500, seed=0)
            ck = tr.train_sr(train, frozen, SRConfig(channels=32), cfg, f"/tmp/{name}")
            m, _ = load_sr(ck)
            rep = ev.evaluate(m, test, evalr)
            row = {"name": name, "secs": round(time.time() - t0),
                   "psnr": round(rep.psnr_mean, 3), "ssim": round(rep.ssim_mean, 4),
                   "acc": round(rep.accuracy, 4)}
            print(row, flush=True)
            out.write(json.dumps(row) + "\n")
            out.flush()


if __name__ == "__main__":
    main()
