import numpy as np
import pytest

from data_ingestion import Dataset
from data_simulation import SynthSpec, gen_gaussian_2class


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def toy():
    """Six well-separated points, three per class."""
    X = np.array([[2.0, 2.0], [3.0, 2.0], [2.0, 3.0], [-2.0, -2.0], [-3.0, -2.0], [-2.0, -3.0]])
    y = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    return Dataset(X, y, ("x1", "x2"), "toy")


@pytest.fixture
def gaussian():
    return gen_gaussian_2class(SynthSpec())


@pytest.fixture
def write_text(tmp_path):
    def _write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write


def random_dataset(rng: np.random.Generator, n: int, p: int = 2, shift: float = 1.0) -> Dataset:
    """n samples, classes alternating, positives shifted by +shift on every feature."""
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.standard_normal((n, p)) + shift * y[:, None]
    return Dataset(X, y)
