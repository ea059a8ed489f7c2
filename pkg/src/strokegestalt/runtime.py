"""Seeding and deterministic-mode plumbing shared by all trainers."""

from __future__ import annotations

import os
import random

import numpy as np
import torch

DETERMINISTIC_ENV = "STROKEGESTALT_DETERMINISTIC"


def deterministic_mode() -> bool:
    return os.environ.get(DETERMINISTIC_ENV, "") == "1"


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def configure_torch(deterministic: bool | None = None) -> None:
    """Single-threaded deterministic execution when requested (or forced by env)."""
    if deterministic is None:
        deterministic = deterministic_mode()
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
