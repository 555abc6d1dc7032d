import numpy as np
import pytest

from poselift import (
    Intrinsics,
    SynthConfig,
    default_skeleton_14,
    default_skeleton_17,
    generate_corpus,
    normalize_corpus,
)


@pytest.fixture(scope="session")
def skel14():
    return default_skeleton_14()


@pytest.fixture(scope="session")
def skel17():
    return default_skeleton_17()


@pytest.fixture(scope="session")
def corpus14(skel14):
    """60 canonical basic14 poses, deterministic."""
    return normalize_corpus(generate_corpus(SynthConfig(seed=100, corpus_size=60)), skel14)


@pytest.fixture(scope="session")
def corpus17(skel17):
    cfg = SynthConfig(seed=101, corpus_size=60, skeleton_name="basic17")
    return normalize_corpus(generate_corpus(cfg), skel17)


@pytest.fixture(scope="session")
def intrinsics():
    return Intrinsics(1100.0, 1100.0, 0.0, 0.0)
