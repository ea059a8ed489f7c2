"""Pilot: pretrain the stroke recognizer on a small synthetic set and time it."""

import sys
import time

from strokegestalt import synth_data as sd
from strokegestalt.recognizer import RecognizerConfig, pretrain_recognizer
from strokegestalt.stroke_codec import load_builtin_table


def main(n_train=400, n_test=100, epochs=6, out_dir="/tmp/pilot_ds"):
    table = load_builtin_table()
    words = sd.random_words(n_train + n_test, rng_seed=1)
    spec = sd.DegradationSpec()
    t0 = time.time()
    manifest = sd.build_dataset(
        words, table, spec, out_dir, test_fraction=n_test / (n_train + n_test)
    )
    print(f"dataset build: {time.time() - t0:.1f}s")

    train = sd.load_pairs(manifest, "train")
    test = sd.load_pairs(manifest, "test")
    cfg = RecognizerConfig(vocab_size=table.vocab_size, max_len=20)
    t0 = time.time()
    model, meta = pretrain_recognizer(
        [s.hr_image for s in train],
        [s.stroke_label.ids for s in train],
        cfg,
        epochs=epochs,
        holdout=([s.hr_image for s in test], [s.stroke_label.ids for s in test]),
        log_fn=lambda r: print(r, f"{time.time() - t0:.1f}s"),
    )
    print("holdout token acc:", meta["holdout_token_accuracy"])


if __name__ == "__main__":
    kwargs = dict(arg.split("=") for arg in sys.argv[1:])
    main(**{k: int(v) if v.isdigit() else v for k, v in kwargs.items()})
