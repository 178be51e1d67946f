# conftest.py
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from data import encode_idx_images, encode_idx_labels, load_dataset  # noqa: E402
from database import get_engine  # noqa: E402
from settings import settings  # noqa: E402


@pytest.fixture(autouse=True)
def quiet_settings(monkeypatch):
    monkeypatch.setattr(settings, "SHOW_PROGRESS", False)
    monkeypatch.setattr(settings, "ROUND_THREADS", 1)
    load_dataset.cache_clear()
    yield
    load_dataset.cache_clear()


@pytest.fixture
def isolated_dirs(tmp_path, monkeypatch):
    """Banco, saídas e dados apontando para diretórios temporários."""
    monkeypatch.setattr(settings, "DB_DIR", tmp_path / "database")
    monkeypatch.setattr(settings, "OUTPUT_DIR", tmp_path / "runs")
    monkeypatch.setattr(settings, "DATA_DIR", tmp_path / "data")
    (tmp_path / "data").mkdir()
    get_engine.cache_clear()
    yield tmp_path
    get_engine.cache_clear()


def covtype_csv_line(features, cls) -> str:
    return ",".join(str(v) for v in list(features) + [cls])


@pytest.fixture
def covtype_file(tmp_path):
    """COVTYPE em CSV com 200 linhas, classes 1..7 e algumas colunas numéricas."""
    rng = np.random.default_rng(3)
    lines = []
    for i in range(200):
        feats = np.zeros(54)
        feats[:10] = rng.integers(0, 3000, size=10)
        feats[10 + i % 4] = 1
        feats[14 + i % 40] = 1
        lines.append(covtype_csv_line(feats.astype(int), 1 + i % 7))
    path = tmp_path / "covtype.data"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def mnist_pair(tmp_path):
    """Par IDX com 50 imagens 28x28 e rótulos 0..9."""
    rng = np.random.default_rng(5)
    pixels = rng.integers(0, 256, size=(50, 28, 28), dtype=np.uint8)
    labels = (np.arange(50) % 10).astype(np.uint8)
    images_path = tmp_path / "imgs-idx3-ubyte"
    labels_path = tmp_path / "lbls-idx1-ubyte"
    images_path.write_bytes(encode_idx_images(pixels))
    labels_path.write_bytes(encode_idx_labels(labels))
    return images_path, labels_path, pixels, labels


@pytest.fixture
def real_data_dir():
    return Path(settings.DATA_DIR)
