import numpy as np
import pytest

from strokegestalt import synth_data as sd
from strokegestalt.stroke_codec import load_builtin_table


@pytest.fixture(scope="session")
def latin_table():
    return load_builtin_table("latin_digits")


@pytest.fixture(scope="session")
def chinese_table():
    return load_builtin_table("chinese")


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, latin_table):
    """10-word rendered dataset shared by data/training tests."""
    root = tmp_path_factory.mktemp("tiny_ds")
    words = sd.random_words(10, rng_seed=42, min_len=2, max_len=4)
    manifest = sd.build_dataset(
        words, latin_table, sd.DegradationSpec(), root, test_fraction=0.2
    )
    return manifest


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
