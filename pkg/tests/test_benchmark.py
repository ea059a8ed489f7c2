from strokegestalt.benchmark import CONDITIONS, BenchmarkConfig


class TestBenchmarkConfig:
    def test_fingerprint_stable(self):
        assert BenchmarkConfig().fingerprint() == BenchmarkConfig().fingerprint()

    def test_fingerprint_sensitive_to_fields(self):
        assert BenchmarkConfig().fingerprint() != BenchmarkConfig(sr_steps=99).fingerprint()

    def test_conditions_cover_ablations(self):
        assert {"lam0", "lam50", "norm_l1", "norm_l2", "filter_correct",
                "filter_wrong"} == set(CONDITIONS)
        assert CONDITIONS["lam0"]["lambda_sfm"] == 0.0
        assert CONDITIONS["norm_l2"]["sfm_norm"] == "l2"
        # norm ablation runs at a matched effective weight
        assert CONDITIONS["norm_l1"]["lambda_sfm"] == CONDITIONS["norm_l2"]["lambda_sfm"]
