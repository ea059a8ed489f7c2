"""Acceptance gate: property checks plus directional trend reproduction.

Criteria 1-7 run self-contained in minutes. Criteria 8-11 read the toy
benchmark built by scripts/run_benchmark.py (cached under
STROKEGESTALT_BENCH_DIR or ~/.cache/strokegestalt-bench); building it from
scratch takes a few hours of CPU, so run the script first.
"""

import numpy as np
import pytest
import torch
from scipy import stats

from strokegestalt import synth_data as sd
from strokegestalt import training as tr
from strokegestalt.benchmark import BenchmarkConfig, default_cache_dir, ensure_results
from strokegestalt.checkpoint import state_dict_hash
from strokegestalt.metrics import psnr, ssim
from strokegestalt.recognizer import (
    RecognizerConfig,
    TransformerRecognizer,
    attention_for_batch,
    encode_image,
    extract_attention,
    freeze,
    full_config,
)
from strokegestalt.sr_models import SRConfig, SRGenerator, pixel_shuffle
from strokegestalt.stroke_codec import encode_label, load_builtin_table
from tests.test_metrics import reference_psnr, reference_ssim
from tests.test_sr_models import pixel_shuffle_oracle


def report(num, ok, text):
    print(f"\nCRITERION {num}: {'PASS' if ok else 'FAIL'} - {text}")
    assert ok, f"criterion {num}: {text}"


TINY = RecognizerConfig(vocab_size=11, max_len=16, d_feat=16, model_dim=16, heads=4)


class TestCriterion1:
    def test_loss_identities(self, rng):
        x = torch.rand(2, 3, 8, 16, dtype=torch.float64)
        y = torch.rand(2, 3, 8, 16, dtype=torch.float64)
        a = torch.rand(5, 4, 8, dtype=torch.float64)
        b = torch.rand(5, 4, 8, dtype=torch.float64)
        total, psm, _ = tr.total_loss(x, y, a, b, tr.TrainConfig(lambda_sfm=0.0))
        ok = (
            float(total) == float(psm)
            and float(tr.psm_loss(x, x)) == 0.0
            and float(tr.sfm_loss(a, a)) == 0.0
        )
        report(1, ok, "loss identities exact (lambda=0 total==psm; self-losses zero)")


class TestCriterion2:
    def test_gradients_match_finite_differences(self):
        torch.manual_seed(0)
        sr = SRGenerator(SRConfig(channels=2, use_stn=False)).double()
        n_params = sum(p.numel() for p in sr.parameters())
        assert n_params <= 1000, n_params
        rec = freeze(TransformerRecognizer(TINY)).double()
        lr_img = torch.rand(1, 3, 8, 16, dtype=torch.float64) * 0.6 + 0.2
        hr_img = torch.rand(1, 3, 16, 32, dtype=torch.float64) * 0.6 + 0.2
        shifted = torch.tensor([[10, 2, 1]])
        cfg = tr.TrainConfig(lambda_sfm=50.0)
        with torch.no_grad():
            attn_hr = attention_for_batch(rec, hr_img, shifted)

        def loss_value():
            out = sr(lr_img)
            attn_sr = attention_for_batch(rec, out, shifted)
            total, _, _ = tr.total_loss(out, hr_img, attn_sr, attn_hr, cfg)
            return total

        sr.zero_grad()
        loss_value().backward()
        analytic = torch.cat([p.grad.flatten() for p in sr.parameters()]).numpy()

        eps = 1e-6
        fd = np.zeros_like(analytic)
        k = 0
        with torch.no_grad():
            for p in sr.parameters():
                flat = p.view(-1)
                for i in range(flat.numel()):
                    orig = float(flat[i])
                    flat[i] = orig + eps
                    hi = float(loss_value())
                    flat[i] = orig - eps
                    lo = float(loss_value())
                    flat[i] = orig
                    fd[k] = (hi - lo) / (2 * eps)
                    k += 1
        rel = np.abs(analytic - fd) / np.maximum(np.abs(analytic) + np.abs(fd), 1e-6)
        frac = float(np.mean(rel <= 1e-3))
        report(2, frac >= 0.95,
               f"analytic vs central-difference gradients: {frac:.1%} of "
               f"{n_params} coords within 1e-3 (need >= 95%)")


class TestCriterion3:
    def test_shapes_and_normalization(self, rng):
        torch.manual_seed(0)
        model = TransformerRecognizer(full_config(vocab_size=11))
        feat = encode_image(model, rng.random((32, 128, 1)))
        shape_ok = feat.shape == (8, 32, 1024)

        tiny = TransformerRecognizer(TINY)
        table = load_builtin_table()
        norm_ok, len_ok = True, True
        for word in ("a", "17", "dog"):
            label = encode_label(table, word).ids
            attn = extract_attention(tiny, rng.random((32, 128, 3)), label)
            len_ok &= len(attn) == len(label)
            norm_ok &= bool(np.all(np.abs(attn.maps.sum(axis=(1, 2)) - 1.0) <= 1e-5))
        report(3, shape_ok and len_ok and norm_ok,
               "encoder 32x128 -> 8x32x1024; |attn| == |label|; maps sum to 1 +- 1e-5")


class TestCriterion4:
    def test_frozen_recognizer_hash_stable(self, tmp_path):
        table = load_builtin_table()
        words = sd.random_words(8, rng_seed=4, min_len=2, max_len=3)
        manifest = sd.build_dataset(words, table, sd.DegradationSpec(), tmp_path,
                                    test_fraction=0.0)
        samples = sd.load_pairs(manifest, "train")
        torch.manual_seed(0)
        frozen = freeze(TransformerRecognizer(TINY))
        before = state_dict_hash(frozen.state_dict())
        cfg = tr.TrainConfig(steps=1000, batch_size=4, seed=0)
        tr.train_sr(samples, frozen, SRConfig(channels=8), cfg, tmp_path / "run")
        after = state_dict_hash(frozen.state_dict())
        report(4, before == after,
               "recognizer parameter hash unchanged across 1000 SR steps")


class TestCriterion5:
    def test_metric_oracles(self, rng):
        psnr_ok = all(
            abs(psnr(a, b) - reference_psnr(a, b)) <= 1e-9
            for a, b in ((rng.random((6, 9, 3)), rng.random((6, 9, 3))) for _ in range(100))
        )
        anchor_ok = abs(psnr(np.zeros((4, 4)), np.full((4, 4), 0.5)) - 6.0206) < 1e-4
        ssim_ok = all(
            abs(ssim(a, b) - reference_ssim(a, b)) <= 1e-6
            for a, b in ((rng.random((13, 14, 3)), rng.random((13, 14, 3))) for _ in range(100))
        )
        ps_ok = all(
            np.array_equal(pixel_shuffle(x, r), pixel_shuffle_oracle(x, r))
            for x, r in ((rng.random((3, 4, 8)), 2), (rng.random((2, 2, 18)), 3))
        )
        report(5, psnr_ok and anchor_ok and ssim_ok and ps_ok,
               "psnr/ssim match brute-force references (1e-9/1e-6, 100 pairs); "
               "psnr anchor 6.0206 dB; pixel_shuffle matches index-law oracle")


class TestCriterion6:
    def test_codec_completeness(self, rng):
        table = load_builtin_table()
        alphabet = "abcdefghijklmnopqrstuvwxyz0123456789"
        coverage = set(table.char_to_strokes) == set(alphabet)
        ids_ok = all(
            1 <= i <= 9 for seq in table.char_to_strokes.values() for i in seq
        )
        length_law = True
        for _ in range(1000):
            word = "".join(rng.choice(list(alphabet), size=rng.integers(1, 8)))
            label = encode_label(table, word)
            expect = sum(len(table.char_to_strokes[c]) for c in word) + 1
            length_law &= len(label.ids) == expect
        pinned = (
            table.char_to_strokes["1"] == (table.stroke_id("vertical"),)
            and table.char_to_strokes["7"]
            == (table.stroke_id("horizontal"), table.stroke_id("vertical"))
        )
        report(6, coverage and ids_ok and length_law and pinned,
               "36 chars over 9 stroke ids; length law on 1000 strings; "
               "'1'=[vertical], '7'=[horizontal,vertical]")


class TestCriterion7:
    def test_degradation_generator(self, rng):
        spec = sd.DegradationSpec()
        hr = rng.random((32, 64, 3))
        dims_ok = sd.degrade(hr, spec, 0).shape == (16, 32, 3)
        det_ok = np.array_equal(sd.degrade(hr, spec, 7), sd.degrade(hr, spec, 7))
        draws = [sd.num_ops_for_seed(spec, s) for s in range(10_000)]
        counts = np.bincount(draws, minlength=6)[1:6]
        p = stats.chisquare(counts).pvalue
        report(7, dims_ok and det_ok and p > 0.01,
               f"dims halved; deterministic per seed; n uniform over 1..5 "
               f"(chi^2 p={p:.3f} > 0.01)")


@pytest.fixture(scope="module")
def bench():
    cfg = BenchmarkConfig()
    root = default_cache_dir() / cfg.fingerprint()
    if not (root / "results.json").is_file():
        pytest.fail(
            "toy benchmark results missing; run scripts/run_benchmark.py first "
            f"(expected {root / 'results.json'})"
        )
    return ensure_results(cfg)


class TestCriterion8:
    def test_sfm_weight_improves_accuracy(self, bench):
        l0 = np.array(bench.accuracies("lam0"))
        l50 = np.array(bench.accuracies("lam50"))
        wins = int(np.sum(l50 > l0))
        gain = float(np.mean(l50 - l0))
        report(8, wins >= 2 and gain > 0,
               f"lambda=50 vs lambda=0 accuracy: wins {wins}/3 seeds "
               f"(l50={l50.round(4).tolist()} l0={l0.round(4).tolist()}), "
               f"mean gain {gain:+.4f}")


class TestCriterion9:
    def test_sfm_l1_ranks_at_least_l2(self, bench):
        l1 = float(np.mean(bench.accuracies("norm_l1")))
        l2 = float(np.mean(bench.accuracies("norm_l2")))
        report(9, l1 >= l2,
               f"mean accuracy (PSM=L2,SFM=L1) {l1:.4f} >= (PSM=L2,SFM=L2) {l2:.4f}")


class TestCriterion10:
    def test_attention_filtering(self, bench):
        all_m = float(np.mean(bench.accuracies("lam50")))
        wrong_m = float(np.mean(bench.accuracies("filter_wrong")))
        correct_m = float(np.mean(bench.accuracies("filter_correct")))
        gap = all_m - wrong_m
        ok = wrong_m < all_m and abs(correct_m - all_m) < gap
        report(10, ok,
               f"filter=wrong {wrong_m:.4f} < all {all_m:.4f}; "
               f"|correct-all|={abs(correct_m - all_m):.4f} < all-wrong gap {gap:.4f}")


class TestCriterion11:
    def test_evaluator_ordering(self, bench):
        hr = bench.baselines["hr"]["acc"]
        bic = bench.baselines["bicubic"]["acc"]
        sr = bench.accuracies("lam50")
        ok = all(bic <= a <= hr for a in sr)
        report(11, ok,
               f"accuracy ordering hr {hr:.4f} >= sr(lambda=50) "
               f"{[round(a, 4) for a in sr]} >= bicubic {bic:.4f} per seed")
