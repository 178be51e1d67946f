# data.py
"""
Módulo de Ingestão de Dados.

Responsável por:
1. Carregar COVTYPE (LIBSVM ou CSV, opcionalmente .gz) e MNIST (IDX).
2. Gerar datasets sintéticos para testes e smoke runs.
3. Split estratificado treino/teste, partição uniforme entre workers
   honestos e amostragem de mini-lotes com reposição.
"""

from __future__ import annotations

import gzip
import logging
import math
import struct
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import IO, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from errors import DataFormatError, DimensionError
from model import Batch, LabelKind
from settings import settings

logger = logging.getLogger(__name__)

COVTYPE_FEATURES = 54
COVTYPE_NUMERIC_COLUMNS = 10
COVTYPE_POSITIVE_CLASS = 2

IDX_IMAGES_MAGIC = 2051  # 0x00000803
IDX_LABELS_MAGIC = 2049  # 0x00000801


# --- Tipos ---


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, m) float64
    labels: np.ndarray  # (n,) int64
    label_kind: LabelKind

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DimensionError(
                f"features {self.features.shape} e rótulos {self.labels.shape} incompatíveis"
            )
        # Compartilhado entre threads/rodadas: somente leitura
        self.features.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.label_kind)

    def class_counts(self) -> dict:
        classes, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(classes, counts)}

    def as_batch(self) -> Batch:
        return Batch(self.features, self.labels, self.label_kind)


@dataclass(frozen=True)
class WorkerShard:
    worker_id: int  # 1..H
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction deve estar em (0, 1): {self.train_fraction}")


class SyntheticKind(str, Enum):
    BINARY = "binary"
    CLASS10 = "class10"


# --- Leitura de arquivos ---


def _open_binary(path: Path) -> IO[bytes]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_text_lines(path: Path) -> List[str]:
    with _open_binary(path) as f:
        return f.read().decode("utf-8").splitlines()


def _parse_libsvm_row(line: str, lineno: int, out: np.ndarray) -> int:
    tokens = line.split()
    try:
        cls = int(float(tokens[0]))
        for tok in tokens[1:]:
            idx_txt, val_txt = tok.split(":", 1)
            idx = int(idx_txt)
            if not 1 <= idx <= COVTYPE_FEATURES:
                raise DataFormatError(
                    f"índice de feature {idx} fora de 1..{COVTYPE_FEATURES}", lineno
                )
            out[idx - 1] = float(val_txt)
    except (ValueError, IndexError) as e:
        if isinstance(e, DataFormatError):
            raise
        raise DataFormatError(f"linha LIBSVM inválida ({e})", lineno) from e
    return cls


def _parse_csv_row(line: str, lineno: int, out: np.ndarray) -> int:
    parts = line.split(",")
    if len(parts) != COVTYPE_FEATURES + 1:
        raise DataFormatError(
            f"esperadas {COVTYPE_FEATURES} features + rótulo, encontradas {len(parts)} colunas",
            lineno,
        )
    try:
        out[:] = np.array(parts[:COVTYPE_FEATURES], dtype=float)
        return int(float(parts[COVTYPE_FEATURES]))
    except ValueError as e:
        raise DataFormatError(f"valor não numérico ({e})", lineno) from e


def load_covtype(path: Path, minmax_numeric: bool = False) -> Dataset:
    """
    Carrega o COVTYPE e converte para classificação binária:
    classe 2 -> +1, demais -> -1. Features usadas como estão no arquivo,
    exceto quando minmax_numeric=True (escala as 10 colunas numéricas).
    """
    logger.info("Carregando COVTYPE de %s", path)
    lines = _read_text_lines(path)
    n = sum(1 for line in lines if line.strip())
    if n == 0:
        raise DataFormatError(f"arquivo vazio: {path}")

    features = np.zeros((n, COVTYPE_FEATURES))
    classes = np.empty(n, dtype=np.int64)

    row = 0
    libsvm = None
    for lineno, line in enumerate(
        tqdm(lines, desc="Lendo COVTYPE", unit="linha", disable=not settings.SHOW_PROGRESS),
        start=1,
    ):
        line = line.strip()
        if not line:
            continue
        if libsvm is None:
            # Layout decidido pela primeira linha não vazia
            libsvm = "," not in line
        parse = _parse_libsvm_row if libsvm else _parse_csv_row
        cls = parse(line, lineno, features[row])
        if not 1 <= cls <= 7:
            raise DataFormatError(f"classe {cls} fora de 1..7", lineno)
        classes[row] = cls
        row += 1

    if minmax_numeric:
        cols = features[:, :COVTYPE_NUMERIC_COLUMNS]
        lo, hi = cols.min(axis=0), cols.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        features[:, :COVTYPE_NUMERIC_COLUMNS] = (cols - lo) / span

    labels = np.where(classes == COVTYPE_POSITIVE_CLASS, 1, -1).astype(np.int64)
    logger.info("COVTYPE: %d amostras, fração positiva %.4f", n, float(np.mean(labels == 1)))
    return Dataset(features, labels, LabelKind.BINARY)


def _read_idx_header(data: bytes, magic: int, n_dims: int, path: Path) -> Tuple[int, ...]:
    # IDX: inteiros de 32 bits big-endian (magic, dimensões...) seguidos de bytes
    header_size = 4 * (1 + n_dims)
    if len(data) < header_size:
        raise DataFormatError(f"arquivo IDX truncado: {path}")
    found, *dims = struct.unpack(">" + "I" * (1 + n_dims), data[:header_size])
    if found != magic:
        raise DataFormatError(f"magic number {found} != {magic} em {path}")
    expected = header_size + math.prod(dims)
    if len(data) != expected:
        raise DataFormatError(f"{path}: esperados {expected} bytes, encontrados {len(data)}")
    return tuple(dims)


def load_mnist(images: Path, labels: Path) -> Dataset:
    """Lê o par IDX (imagens, rótulos); pixels divididos por 255."""
    with _open_binary(images) as f:
        img_bytes = f.read()
    with _open_binary(labels) as f:
        lbl_bytes = f.read()

    count, rows, cols = _read_idx_header(img_bytes, IDX_IMAGES_MAGIC, 3, images)
    (n_labels,) = _read_idx_header(lbl_bytes, IDX_LABELS_MAGIC, 1, labels)
    if n_labels != count:
        raise DataFormatError(f"{count} imagens mas {n_labels} rótulos")

    pixels = np.frombuffer(img_bytes, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    ys = np.frombuffer(lbl_bytes, dtype=np.uint8, offset=8).astype(np.int64)
    if ys.size and ys.max() > 9:
        raise DataFormatError(f"rótulo {ys.max()} fora de 0..9 em {labels}")

    logger.info("MNIST: %d imagens %dx%d de %s", count, rows, cols, images)
    return Dataset(pixels.astype(np.float64) / 255.0, ys, LabelKind.CLASS10)


def encode_idx_images(pixels: np.ndarray) -> bytes:
    n, rows, cols = pixels.shape
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.astype(np.uint8).tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    return struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + np.asarray(labels, dtype=np.uint8).tobytes()


def dump_mnist(ds: Dataset, images_path: Path, labels_path: Path):
    """Grava um dataset MNIST de volta em IDX (imagens quadradas)."""
    side = math.isqrt(ds.feature_dim)
    if side * side != ds.feature_dim:
        raise DimensionError(f"{ds.feature_dim} features não formam imagem quadrada")
    pixels = np.rint(ds.features * 255.0).astype(np.uint8).reshape(len(ds), side, side)
    Path(images_path).write_bytes(encode_idx_images(pixels))
    Path(labels_path).write_bytes(encode_idx_labels(ds.labels))


# --- Dados sintéticos ---


def synth_dataset(kind: SyntheticKind, n: int, dim: int, seed: int) -> Dataset:
    """
    BINARY: separável por um hiperplano pela origem com margem >= 0.5.
    CLASS10: blobs gaussianos rotulados, classes balanceadas (i % 10).
    """
    if n < 1:
        raise ValueError("n deve ser >= 1")
    rng = np.random.default_rng(seed)

    if SyntheticKind(kind) == SyntheticKind.BINARY:
        w = rng.standard_normal(dim)
        w /= np.linalg.norm(w)
        x = rng.standard_normal((n, dim))
        along = x @ w
        y = np.where(along >= 0, 1, -1).astype(np.int64)
        # Empurra cada ponto para fora da faixa |wᵀφ| < 0.5
        x = x - np.outer(along, w) + np.outer(y * (0.5 + np.abs(along)), w)
        return Dataset(x, y, LabelKind.BINARY)

    labels = rng.permutation(np.arange(n) % 10).astype(np.int64)
    centers = rng.normal(0.0, 3.0, size=(10, dim))
    x = centers[labels] + rng.standard_normal((n, dim))
    return Dataset(x, labels, LabelKind.CLASS10)


# --- Split, partição e amostragem ---


def stratified_split(ds: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    rng = np.random.default_rng(spec.seed)
    train_parts, test_parts = [], []
    for cls in np.unique(ds.labels):
        idx = np.flatnonzero(ds.labels == cls)
        if len(idx) < 2:
            raise DataFormatError(f"classe {cls} com menos de 2 amostras")
        n_train = int(math.floor(spec.train_fraction * len(idx) + 0.5))
        n_train = min(max(n_train, 1), len(idx) - 1)
        perm = rng.permutation(idx)
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    return ds.subset(train_idx), ds.subset(test_idx)


def partition_uniform(train: Dataset, H: int, seed: int) -> List[WorkerShard]:
    if H < 1:
        raise ValueError("H deve ser >= 1")
    if H > len(train):
        raise DimensionError(f"H={H} maior que o conjunto de treino ({len(train)})")
    perm = np.random.default_rng(seed).permutation(len(train))
    return [
        WorkerShard(worker_id=i + 1, indices=chunk)
        for i, chunk in enumerate(np.array_split(perm, H))
    ]


def sample_minibatch(ds: Dataset, shard: WorkerShard, B: int, rng: np.random.Generator) -> Batch:
    if B < 1:
        raise ValueError("B deve ser >= 1")
    if len(shard) == 0:
        raise DimensionError(f"shard vazio (worker {shard.worker_id})")
    picks = shard.indices[rng.integers(0, len(shard), size=B)]
    return Batch(ds.features[picks], ds.labels[picks], ds.label_kind)


# --- Resolução do dataset configurado ---


class DatasetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["covtype", "mnist", "synthetic_binary", "synthetic_class10"]
    # Caminhos relativos são resolvidos contra BYRD_DATA_DIR
    path: Optional[Path] = None
    train_images: Optional[Path] = None
    train_labels: Optional[Path] = None
    test_images: Optional[Path] = None
    test_labels: Optional[Path] = None
    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)
    train_limit: Optional[int] = Field(None, ge=1)
    minmax_numeric: bool = False
    # Somente sintéticos
    n: int = Field(1000, ge=1)
    dim: int = Field(20, ge=1)

    @property
    def label_kind(self) -> LabelKind:
        if self.kind in ("covtype", "synthetic_binary"):
            return LabelKind.BINARY
        return LabelKind.CLASS10


def _resolve(data_dir: Path, given: Optional[Path], *candidates: str) -> Path:
    if given is not None:
        return given if given.is_absolute() else data_dir / given
    for name in candidates:
        for suffix in ("", ".gz"):
            path = data_dir / (name + suffix)
            if path.exists():
                return path
    raise FileNotFoundError(f"nenhum de {candidates} encontrado em {data_dir}")


@lru_cache(maxsize=4)
def load_dataset(
    spec: DatasetConfig, seed: int, data_dir: Optional[Path] = None
) -> Tuple[Dataset, Dataset]:
    """Retorna (treino, teste) para a configuração dada; resultado em cache."""
    data_dir = Path(data_dir or settings.DATA_DIR)

    if spec.kind == "mnist":
        train = load_mnist(
            _resolve(data_dir, spec.train_images, "train-images-idx3-ubyte", "train-images.idx3-ubyte"),
            _resolve(data_dir, spec.train_labels, "train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
        )
        test = load_mnist(
            _resolve(data_dir, spec.test_images, "t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
            _resolve(data_dir, spec.test_labels, "t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
        )
    else:
        if spec.kind == "covtype":
            full = load_covtype(
                _resolve(data_dir, spec.path, "covtype.data", "covtype.libsvm"),
                minmax_numeric=spec.minmax_numeric,
            )
        else:
            kind = SyntheticKind.BINARY if spec.kind == "synthetic_binary" else SyntheticKind.CLASS10
            full = synth_dataset(kind, spec.n, spec.dim, seed)
        train, test = stratified_split(full, SplitSpec(spec.train_fraction, seed))

    if spec.train_limit is not None and spec.train_limit < len(train):
        # Subamostra estratificada (aproximadamente train_limit amostras)
        train, _ = stratified_split(train, SplitSpec(spec.train_limit / len(train), seed))

    logger.info("Dataset %s: %d treino / %d teste", spec.kind, len(train), len(test))
    return train, test
