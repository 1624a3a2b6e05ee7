"""Scikit-learn-compatible classifier wrapper around toy-scale training.

Duck-typed against the estimator API (``get_params`` / ``set_params`` /
``fit`` / ``predict`` / ``score``) so the network slots into pipelines and
model-selection utilities without importing scikit-learn here.
"""

from __future__ import annotations

import numpy as np

from .config import ModelConfig, TrainConfig
from .errors import ConfigError
from .model import Model, build_model
from .neuron import LIFParams
from .train import Dataset, train_toy

__all__ = ["SpikingClassifier", "check_images", "check_labels"]


def check_images(x) -> np.ndarray:
    """Validate and coerce input to a float64 (N, C, H, W) image batch."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 4:
        raise ValueError(f"expected (N, C, H, W) images, got shape {a.shape}")
    if a.shape[2] != a.shape[3]:
        raise ValueError("images must be square")
    if not np.all(np.isfinite(a)):
        raise ValueError("images must be finite")
    return a


def check_labels(y, n: int) -> np.ndarray:
    labels = np.asarray(y)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.array_equal(labels, labels.astype(np.int64)):
            raise ValueError("labels must be integers")
    return labels.astype(np.int64)


class SpikingClassifier:
    """Image classifier with the estimator interface.

    Parameters mirror the model and training configs; everything is plain
    keyword state so ``get_params`` round-trips.
    """

    def __init__(self, base_channels=8, depths=(1, 1, 1, 2, 1), timesteps=1,
                 sdsa_variant=3, heads=2, shortcut="MS", epochs=10,
                 batch_size=32, lr=1e-2, label_smoothing=0.0, seed=0,
                 surrogate_window=1.0):
        self.base_channels = base_channels
        self.depths = depths
        self.timesteps = timesteps
        self.sdsa_variant = sdsa_variant
        self.heads = heads
        self.shortcut = shortcut
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.label_smoothing = label_smoothing
        self.seed = seed
        self.surrogate_window = surrogate_window
        self.model_: Model | None = None
        self.classes_: np.ndarray | None = None
        self.history_: list[dict] | None = None

    _PARAM_NAMES = ("base_channels", "depths", "timesteps", "sdsa_variant", "heads",
                    "shortcut", "epochs", "batch_size", "lr", "label_smoothing", "seed",
                    "surrogate_window")

    def get_params(self, deep=True):
        return {k: getattr(self, k) for k in self._PARAM_NAMES}

    def set_params(self, **params):
        for k, v in params.items():
            if k not in self._PARAM_NAMES:
                raise ValueError(f"invalid parameter {k!r} for SpikingClassifier")
            setattr(self, k, v)
        return self

    def fit(self, X, y):
        images = check_images(X)
        labels = check_labels(y, images.shape[0])
        self.classes_ = np.unique(labels)
        mapped = np.searchsorted(self.classes_, labels)
        cfg = ModelConfig(
            base_channels=self.base_channels,
            num_classes=len(self.classes_),
            in_channels=images.shape[1],
            resolution=images.shape[2],
            timesteps=self.timesteps,
            depths=tuple(self.depths),
            sdsa_variant=self.sdsa_variant,
            heads=self.heads,
            shortcut=self.shortcut,
            seed=self.seed,
            lif=LIFParams(surrogate_window=self.surrogate_window),
        )
        tc = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                         label_smoothing=self.label_smoothing, seed=self.seed)
        self.model_ = build_model(cfg)
        self.history_ = train_toy(self.model_, Dataset(images, mapped), self.epochs, tc=tc)
        return self

    def _logits(self, X) -> np.ndarray:
        if self.model_ is None:
            raise ConfigError("SpikingClassifier is not fitted; call fit first")
        images = check_images(X)
        return self.model_.forward(images).data

    def predict(self, X):
        return self.classes_[self._logits(X).argmax(axis=1)]

    def predict_proba(self, X):
        z = self._logits(X)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def score(self, X, y):
        labels = check_labels(y, np.asarray(X).shape[0])
        return float((self.predict(X) == labels).mean())
