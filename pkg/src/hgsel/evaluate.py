"""Downstream evaluation: linear-probe classification and k-means clustering.

The probe trains a multinomial logistic regression on frozen embeddings
with the package's own optimizer, selecting the reporting epoch by
validation micro-F1. Clustering runs seeded k-means++ with restarts and
scores against ground truth. Quality metrics come from scikit-learn.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.metrics import (adjusted_rand_score, f1_score,
                             normalized_mutual_info_score, roc_auc_score)

from . import autodiff as ad
from .autodiff import Adam, Tape, Tensor, backward
from .errors import ValidationError


@dataclass(frozen=True)
class Split:
    """Disjoint train/validation/test node indices."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        parts = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise ValidationError("split parts must be disjoint")


@dataclass(frozen=True)
class Metrics:
    """Classification and clustering scores; unset fields stay None."""

    macro_f1: Optional[float] = None
    micro_f1: Optional[float] = None
    auc: Optional[float] = None
    nmi: Optional[float] = None
    ari: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def make_split(labels: np.ndarray, n_per_class: int, n_val: int, n_test: int,
               rng: np.random.Generator, seed: int = 0) -> Split:
    """Sample a label-balanced train split plus disjoint val/test pools."""
    labels = np.asarray(labels)
    train = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < n_per_class:
            raise ValidationError(
                f"class {c} has only {members.size} nodes, need {n_per_class}")
        train.append(rng.choice(members, size=n_per_class, replace=False))
    train = np.sort(np.concatenate(train))
    rest = np.setdiff1d(np.arange(labels.shape[0]), train)
    if rest.size < n_val + n_test:
        raise ValidationError("not enough nodes left for validation and test")
    rest = rng.permutation(rest)
    return Split(train=train, val=np.sort(rest[:n_val]),
                 test=np.sort(rest[n_val:n_val + n_test]), seed=seed)


def _softmax_probs(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def linear_probe(embeddings: np.ndarray, labels: np.ndarray, split: Split,
                 epochs: int = 200, lr: float = 0.01,
                 rng: Optional[np.random.Generator] = None) -> Metrics:
    """Frozen-embedding multinomial logistic regression.

    Trains on the split's train nodes, picks the epoch with the best
    validation micro-F1, and reports test macro-F1, micro-F1, and
    one-vs-rest macro AUC at that epoch.
    """
    h = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    n_classes = classes.size
    train_classes = np.unique(labels[split.train])
    if train_classes.size != n_classes:
        missing = np.setdiff1d(classes, train_classes)
        raise ValidationError(f"classes {missing.tolist()} absent from train split")
    if rng is None:
        rng = np.random.default_rng(split.seed)

    dim = h.shape[1]
    weight = Tensor(rng.normal(0.0, 0.01, size=(dim, n_classes)), requires_grad=True)
    bias = Tensor(np.zeros(n_classes), requires_grad=True)
    onehot = np.zeros((split.train.size, n_classes))
    onehot[np.arange(split.train.size), labels[split.train]] = 1.0
    x_train = Tensor(h[split.train])
    optimizer = Adam([weight, bias], lr=lr)

    best = (-1.0, weight.data.copy(), bias.data.copy())
    for _ in range(epochs):
        optimizer.zero_grad()
        with Tape() as tape:
            logits = ad.add(ad.matmul(x_train, weight), bias)
            # cross-entropy: mean_i [log sum_c exp(l_ic) - l_{i,y_i}]
            lse = ad.reduce_sum(ad.log(ad.rowsum(ad.exp(logits))))
            picked = ad.reduce_sum(ad.mul(logits, Tensor(onehot)))
            loss = ad.scale(ad.sub(lse, picked), 1.0 / split.train.size)
        backward(tape, loss)
        optimizer.step()
        val_pred = np.argmax(h[split.val] @ weight.data + bias.data, axis=1)
        val_f1 = f1_score(labels[split.val], val_pred, average="micro")
        if val_f1 > best[0]:
            best = (val_f1, weight.data.copy(), bias.data.copy())

    w, b = best[1], best[2]
    test_logits = h[split.test] @ w + b
    test_pred = np.argmax(test_logits, axis=1)
    probs = _softmax_probs(test_logits)
    y_test = labels[split.test]
    if n_classes == 2:
        auc = roc_auc_score(y_test, probs[:, 1])
    else:
        auc = roc_auc_score(y_test, probs, multi_class="ovr", average="macro",
                            labels=classes)
    return Metrics(
        macro_f1=float(f1_score(y_test, test_pred, average="macro")),
        micro_f1=float(f1_score(y_test, test_pred, average="micro")),
        auc=float(auc),
    )


def kmeans(points: np.ndarray, n_clusters: int, rng: np.random.Generator,
           n_iter: int = 100, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (labels, centers, inertia history); the history is
    nonincreasing. Empty clusters are reseeded at the farthest point.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if n_clusters < 1 or n_clusters > n:
        raise ValidationError("need 1 <= n_clusters <= n_points")
    centers = _kmeanspp_init(x, n_clusters, rng)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(n_iter):
        dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        inertia = float(dists[np.arange(n), labels].sum())
        history.append(inertia)
        new_centers = centers.copy()
        for c in range(n_clusters):
            members = labels == c
            if members.any():
                new_centers[c] = x[members].mean(axis=0)
            else:
                farthest = dists.min(axis=1).argmax()
                new_centers[c] = x[farthest]
        if np.allclose(new_centers, centers, atol=tol, rtol=0.0):
            centers = new_centers
            break
        centers = new_centers
    return labels, centers, history


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
        else:
            centers[j] = x[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans_cluster(embeddings: np.ndarray, n_clusters: int, restarts: int,
                   labels: np.ndarray, rng: np.random.Generator) -> Metrics:
    """Best-of-restarts k-means scored by NMI and ARI against labels."""
    if n_clusters < 2:
        raise ValidationError("n_clusters must be >= 2")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        pred, _, history = kmeans(embeddings, n_clusters, rng)
        if history[-1] < best_inertia:
            best_inertia = history[-1]
            best_labels = pred
    labels = np.asarray(labels)
    return Metrics(
        nmi=float(normalized_mutual_info_score(labels, best_labels)),
        ari=float(adjusted_rand_score(labels, best_labels)),
    )
