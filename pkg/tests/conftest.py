from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).resolve().parent))

from weylsys.config import load_config  # noqa: E402
from weylsys.sectors import compute_sectors  # noqa: E402
from weylsys.unperturbed import build_frame  # noqa: E402

REFERENCE = ROOT / "configs" / "reference.yaml"
REFERENCE_BUMP = ROOT / "configs" / "reference_bump.yaml"


@pytest.fixture(scope="session")
def ref_config():
    return load_config(REFERENCE)


@pytest.fixture(scope="session")
def ref_spec(ref_config):
    return ref_config.spec()


@pytest.fixture(scope="session")
def zero_spec(ref_spec):
    return ref_spec.unperturbed()


@pytest.fixture(scope="session")
def sectors(ref_spec):
    return compute_sectors(ref_spec.b)


@pytest.fixture(scope="session")
def frames(ref_spec, sectors):
    return [build_frame(ref_spec, s) for s in sectors]


@pytest.fixture(scope="session")
def zero_frames(zero_spec, sectors):
    return [build_frame(zero_spec, s) for s in sectors]


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def rel_cols(a, b):
    """max over x and columns of ||a - b||_1 / ||b||_1 (column axis -1)."""
    a, b = np.asarray(a), np.asarray(b)
    return float((np.abs(a - b).sum(axis=-2) / np.abs(b).sum(axis=-2)).max())
