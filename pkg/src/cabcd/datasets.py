"""Dataset loading and the shipped per-dataset reference constants.

Datasets are not downloaded. Place the LIBSVM files (optionally ``.bz2``)
in the directory named by ``CABCD_DATA_DIR`` and load them by name, or pass
a path directly.
"""

from __future__ import annotations

import bz2
import gzip
import json
import os
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .sparse import CsrMatrix, parse_libsvm

DATA_DIR_ENV = "CABCD_DATA_DIR"


class DatasetUnavailable(FileNotFoundError):
    pass


@lru_cache(maxsize=None)
def dataset_table() -> dict:
    text = resources.files("cabcd").joinpath("data/datasets.json").read_text()
    return json.loads(text)


def sigma_min(name: str) -> float:
    info = dataset_table().get(name)
    if info is None or "sigma_min" not in info:
        raise KeyError(f"no smallest singular value shipped for dataset {name!r}")
    return float(info["sigma_min"])


def lambda_from_multiplier(name: str, multiplier: float = 1000.0) -> float:
    """lam = multiplier * sigma_min(name), using the shipped table (no eigensolve)."""
    return multiplier * sigma_min(name)


def _open_text(path: Path):
    if path.suffix == ".bz2":
        return bz2.open(path, "rt", encoding="utf-8")
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def read_libsvm_file(path, expected_features: Optional[int] = None) -> tuple[CsrMatrix, np.ndarray]:
    path = Path(path)
    with _open_text(path) as fh:
        return parse_libsvm(fh, expected_features=expected_features)


def find_dataset(name: str, data_dir=None) -> Path:
    """Locate a named dataset file under ``data_dir`` or ``$CABCD_DATA_DIR``."""
    root = data_dir or os.environ.get(DATA_DIR_ENV)
    info = dataset_table().get(name, {})
    candidates = info.get("files", []) + [name, name + ".bz2"]
    if root:
        for c in candidates:
            p = Path(root) / c
            if p.is_file():
                return p
    where = f"not found in {root!r}" if root else f"not found (${DATA_DIR_ENV} is unset)"
    raise DatasetUnavailable(
        f"dataset {name!r} {where}; expected one of {candidates}. "
        f"Download it from the LIBSVM collection and set {DATA_DIR_ENV}.")


def load_dataset(name_or_path: str, data_dir=None, verify: bool = True):
    """Load a dataset by table name or file path.

    For named datasets the shape (and nnz when known) is checked against the
    shipped table, which stands in for a checksum.
    """
    p = Path(name_or_path)
    info = dataset_table().get(name_or_path)
    if info is None:
        if not p.is_file():
            raise DatasetUnavailable(f"no such dataset file or known name: {name_or_path!r}")
        return read_libsvm_file(p)
    path = find_dataset(name_or_path, data_dir)
    X, y = read_libsvm_file(path, expected_features=info["d"])
    if verify:
        got = (X.n_rows, X.n_cols)
        if got != (info["d"], info["n"]):
            raise ValueError(f"{name_or_path}: shape {got} != expected {(info['d'], info['n'])}")
        if info.get("nnz") is not None and X.nnz != info["nnz"]:
            raise ValueError(f"{name_or_path}: nnz {X.nnz} != expected {info['nnz']}")
    return X, y


def dataset_name(spec: str) -> Optional[str]:
    """Table key for a name or a path whose file name matches a known dataset."""
    if spec in dataset_table():
        return spec
    fname = Path(spec).name
    for key, info in dataset_table().items():
        if fname in info.get("files", []):
            return key
    return None
