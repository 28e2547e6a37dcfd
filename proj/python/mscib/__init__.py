"""Python front end for the mscib multi-view clustering core."""

from __future__ import annotations

import os
import tempfile
from collections.abc import Mapping
from pathlib import Path

from . import _mscib
from ._mscib import (
    ConfigError,
    DataError,
    Error,
    FormatError,
    InvalidArgument,
    NumericError,
    ari,
    clustering_accuracy,
    consistent_contrastive,
    entropy_regularizer,
    evaluate,
    gaussian_kl,
    generate_synthetic,
    kmeans,
    nmi,
    normalize,
    pair_contrastive,
    semantic_loss,
)

__all__ = [
    "ConfigError", "DataError", "Error", "FormatError", "InvalidArgument", "NumericError",
    "ari", "clustering_accuracy", "consistent_contrastive", "embed", "entropy_regularizer",
    "evaluate", "evaluate_checkpoint", "gaussian_kl", "generate_synthetic", "kmeans", "nmi",
    "normalize", "pair_contrastive", "semantic_loss", "train", "write_config",
]


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def write_config(config: Mapping, path: str | os.PathLike) -> Path:
    """Writes a {dotted.key: value} mapping in the key-value config format."""
    path = Path(path)
    path.write_text("".join(f"{k} = {_format(v)}\n" for k, v in config.items()))
    return path


def _config_path(config, out):
    if isinstance(config, Mapping):
        # relative paths inside the mapping resolve against the output dir
        base = Path(out) if out is not None else Path(tempfile.mkdtemp(prefix="mscib_"))
        base.mkdir(parents=True, exist_ok=True)
        return write_config(config, base / "config.input.txt")
    return Path(config)


def train(config, out=None, seed=None):
    """Runs pretraining and training. `config` is a file path or a mapping."""
    return _mscib.train(_config_path(config, out), seed, out)


def evaluate_checkpoint(config, checkpoint, out=None):
    return _mscib.evaluate_checkpoint(_config_path(config, out), checkpoint, out)


def embed(config, checkpoint, which="Z", out=None):
    return _mscib.embed(_config_path(config, out), checkpoint, which, out)
