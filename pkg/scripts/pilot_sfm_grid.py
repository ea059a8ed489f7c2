"""Pilot grid: does the attention loss help evaluator accuracy, and where?"""

import json
import time

import torch

from strokegestalt import evaluation as ev
from strokegestalt import synth_data as sd
from strokegestalt import training as tr
from strokegestalt.recognizer import TransformerRecognizer, load_recognizer
from strokegestalt.sr_models import SRConfig, load_sr

RESULTS = "/tmp/sfm_grid_results.jsonl"


def main():
    train = sd.load_pairs("/tmp/ds_light/manifest.jsonl", "train")
    test = sd.load_pairs("/tmp/ds_light/manifest.jsonl", "test")[:200]
    frozen, _ = load_recognizer("/tmp/rec_light.ckpt")
    evalr = TransformerRecognizer(ev.evaluator_config(max_len=8))
    evalr.load_state_dict(torch.load("/tmp/eval_light.pt"))
    evalr.eval()

    grid = [
        ("srcnn", 0.0, 4000, 32),
        ("srcnn", 50.0, 4000, 32),
        ("tsrn", 0.0, 1200, 16),
        ("tsrn", 50.0, 1200, 16),
    ]
    with open(RESULTS, "a") as out:
        for backbone, lam, steps, ch in grid:
            name = f"{backbone}_l{lam:g}_s{steps}"
            t0 = time.time()
            cfg = tr.TrainConfig(lambda_sfm=lam, steps=steps, seed=0)
            ck = tr.train_sr(train, frozen, SRConfig(backbone=backbone, channels=ch), cfg, f"/tmp/grid_{name}")
            m, _ = load_sr(ck)
            rep = ev.evaluate(m, test, evalr)
            row = {
                "name": name,
                "secs": round(time.time() - t0),
                "psnr": round(rep.psnr_mean, 3),
                "ssim": round(rep.ssim_mean, 4),
                "acc": round(rep.accuracy, 4),
            }
            print(row, flush=True)
            out.write(json.dumps(row) + "\n")
            out.flush()


if __name__ == "__main__":
    main()
