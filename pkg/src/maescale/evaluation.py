"""Evaluation protocols: frozen-feature linear probing and 2% fine-tuning.

Both protocols score classification accuracy on a seeded, stratified 20%
held-out split and report it in percent. The probe trains a closed-form ridge
classifier on frozen features; fine-tuning attaches a linear head to the
mean-pooled encoder output and updates head and encoder jointly by SGD on a
stratified 2% label subset.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import autodiff as ad
from . import mae
from .autodiff import Tensor
from .corpus import CorpusManifest, apportion_largest_remainder
from .errors import NumericError
from .seeding import rng_for


class EvalProtocol(enum.Enum):
    NO_FINETUNE = "NO_FINETUNE"
    FINETUNE_2PCT = "FINETUNE_2PCT"

    @property
    def label_fraction(self) -> float:
        return 1.0 if self is EvalProtocol.NO_FINETUNE else 0.02


EVAL_SPLIT = 0.2
DEFAULT_RIDGE = 1e-4
FINETUNE_LABEL_FRACTION = 0.02


@dataclass(frozen=True)
class EvalReport:
    accuracy_pct: float
    protocol: EvalProtocol
    n_eval: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.accuracy_pct <= 100.0:
            raise ValueError(f"accuracy_pct {self.accuracy_pct} outside [0, 100]")


def stratified_split(labels: np.ndarray, eval_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (train, eval); the eval side holds round(f * N)
    examples apportioned across classes by largest remainder."""
    labels = np.asarray(labels)
    n = labels.size
    eval_total = round(eval_fraction * n)
    classes, class_counts = np.unique(labels, return_counts=True)
    shares = apportion_largest_remainder(eval_total, [int(c) for c in class_counts])
    eval_idx: list[int] = []
    for cls, share in zip(classes, shares):
        members = np.flatnonzero(labels == cls)
        rng = rng_for(seed, "split", int(cls))
        picks = rng.choice(members.size, size=share, replace=False)
        eval_idx.extend(int(members[i]) for i in picks)
    eval_idx = np.array(sorted(eval_idx), dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[eval_idx] = False
    return np.flatnonzero(mask), eval_idx


def extract_features(params: mae.ParameterStore, config: mae.MaeModelConfig,
                     manifest: CorpusManifest) -> np.ndarray:
    """Encoder features with an empty mask: every patch visible, latents
    mean-pooled into one vector per image."""
    stack = np.stack([r.pixels.astype(np.float64) for r in manifest.records])
    return mae.encode_features(params, config, stack)


class RidgeProbeClassifier(BaseEstimator, ClassifierMixin):
    """Closed-form ridge regression to one-hot targets; argmax prediction
    with ties broken toward the lowest class index."""

    def __init__(self, ridge: float = DEFAULT_RIDGE):
        self.ridge = ridge

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need at least 2 classes to fit a probe")
        onehot = (y[:, None] == self.classes_[None, :]).astype(np.float64)
        aug = np.hstack([X.astype(np.float64), np.ones((X.shape[0], 1))])
        gram = aug.T @ aug + self.ridge * np.eye(aug.shape[1])
        try:
            weights = np.linalg.solve(gram, aug.T @ onehot)
        except np.linalg.LinAlgError as exc:
            raise NumericError("normal matrix is singular; set ridge > 0") from exc
        self.coef_ = weights[:-1]
        self.intercept_ = weights[-1]
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X.astype(np.float64) @ self.coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


def linear_probe(features: np.ndarray, labels: np.ndarray, eval_split: float = EVAL_SPLIT,
                 ridge: float = DEFAULT_RIDGE, seed: int = 0) -> EvalReport:
    """Frozen-feature evaluation: ridge probe on the training split, accuracy
    on the held-out split, reported in percent."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    train_idx, eval_idx = stratified_split(labels, eval_split, seed)
    if np.unique(labels[train_idx]).size < 2:
        raise ValueError("training split holds fewer than 2 classes")
    probe = RidgeProbeClassifier(ridge=ridge).fit(features[train_idx], labels[train_idx])
    predicted = probe.predict(features[eval_idx])
    correct = int(np.sum(predicted == labels[eval_idx]))
    return EvalReport(
        accuracy_pct=100.0 * correct / eval_idx.size,
        protocol=EvalProtocol.NO_FINETUNE,
        n_eval=int(eval_idx.size),
        seed=seed,
    )


def _stratified_label_subset(labels: np.ndarray, pool: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Pick `count` indices from `pool`, class proportions kept by largest
    remainder; raises naming any class that would receive zero labels."""
    classes, class_counts = np.unique(labels[pool], return_counts=True)
    if count < classes.size:
        raise ValueError(
            f"label subset of {count} cannot cover {classes.size} classes"
        )
    shares = apportion_largest_remainder(count, [int(c) for c in class_counts])
    for cls, share in zip(classes, shares):
        if share == 0:
            raise ValueError(f"label subset misses class {int(cls)}")
    chosen: list[int] = []
    for cls, share in zip(classes, shares):
        members = pool[labels[pool] == cls]
        rng = rng_for(seed, "ft-labels", int(cls))
        picks = rng.choice(members.size, size=share, replace=False)
        chosen.extend(int(members[i]) for i in picks)
    return np.array(sorted(chosen), dtype=np.int64)


def finetune_two_percent(params: mae.ParameterStore, config: mae.MaeModelConfig,
                         manifest: CorpusManifest, labels: np.ndarray,
                         schedule: mae.TrainSchedule, seed: int,
                         eval_split: float = EVAL_SPLIT, ridge: float = DEFAULT_RIDGE) -> EvalReport:
    """Joint head+encoder fine-tuning on a stratified 2% label subset.

    The head starts from the ridge-probe solution on the subset's frozen
    features, so a zero learning rate reproduces the probe exactly. Training
    minimizes softmax cross-entropy by SGD; evaluation uses the same held-out
    split as the probe.
    """
    labels = np.asarray(labels)
    n = labels.size
    ft_count = round(FINETUNE_LABEL_FRACTION * n)
    train_idx, eval_idx = stratified_split(labels, eval_split, seed)
    ft_idx = _stratified_label_subset(labels, train_idx, ft_count, seed)

    classes = np.unique(labels)
    stack = np.stack([r.pixels.astype(np.float64) for r in manifest.records])
    ft_feats = mae.encode_features(params, config, stack[ft_idx])
    probe = RidgeProbeClassifier(ridge=ridge).fit(ft_feats, labels[ft_idx])
    head_w = np.zeros((config.embed_dim, classes.size))
    head_b = np.zeros(classes.size)
    for j, cls in enumerate(classes):
        k = int(np.flatnonzero(probe.classes_ == cls)[0])
        head_w[:, j] = probe.coef_[:, k]
        head_b[j] = probe.intercept_[k]

    store = params.copy()
    onehot_all = (labels[:, None] == classes[None, :]).astype(np.float64)
    patches_ft = np.stack([mae.patchify(stack[i], config.patch_size) for i in ft_idx])
    for epoch in range(schedule.epochs):
        order = rng_for(schedule.seed, "ft-shuffle", epoch).permutation(ft_idx.size)
        for start in range(0, ft_idx.size, schedule.batch_size):
            chunk = order[start : start + schedule.batch_size]
            p = mae._params_to_tensors(store)
            w_t = Tensor(head_w, requires_grad=True)
            b_t = Tensor(head_b, requires_grad=True)
            latents = mae._encode(p, config, patches_ft[chunk])
            logits = ad.tmean(latents, axis=1) @ w_t + b_t
            loss = ad.softmax_cross_entropy(logits, onehot_all[ft_idx[chunk]])
            loss.backward()
            store.values -= schedule.learning_rate * mae._collect_gradient(p, store)
            head_w -= schedule.learning_rate * w_t.grad
            head_b -= schedule.learning_rate * b_t.grad

    eval_feats = mae.encode_features(store, config, stack[eval_idx])
    scores = eval_feats @ head_w + head_b
    predicted = classes[np.argmax(scores, axis=1)]
    correct = int(np.sum(predicted == labels[eval_idx]))
    return EvalReport(
        accuracy_pct=100.0 * correct / eval_idx.size,
        protocol=EvalProtocol.FINETUNE_2PCT,
        n_eval=int(eval_idx.size),
        seed=seed,
    )
