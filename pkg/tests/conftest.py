import pytest

from cfslbench import DatasetPack
from synth import clustered_pack, noise_pack


@pytest.fixture(scope="session")
def small_pack() -> DatasetPack:
    return noise_pack()


@pytest.fixture(scope="session")
def rgb_pack() -> DatasetPack:
    return noise_pack(num_classes=60, per_class=16, shape=(8, 8, 3), seed=11, name="rgb")


@pytest.fixture(scope="session")
def separable_pack() -> DatasetPack:
    return clustered_pack()


@pytest.fixture(scope="session")
def lowdim_pack() -> DatasetPack:
    """Separable clusters in a 4-dim pixel space: single-class centroids stay
    near-perfect while merged super-class centroids genuinely misclassify,
    which is what the overwrite-task comparisons need."""
    return clustered_pack(shape=(2, 2, 1), noise=2, seed=3, name="lowdim")
