"""Heterogeneous graph encoder: feature projection, per-metapath graph
convolution, and semantic attention fusion.

Target features are projected once by a shared MLP, propagated over each
metapath subgraph with a single symmetric-normalized convolution layer,
and the per-metapath representations are fused with softmax attention
weights learned from a shared query vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .augment import AugmentedView
from .autodiff import Tensor
from .errors import ValidationError
from .hetgraph import MetapathSubgraph

ACTIVATIONS = ("elu", "relu", "tanh", "linear")


def _activate(x: Tensor, name: str) -> Tensor:
    if name == "elu":
        return ad.elu(x)
    if name == "relu":
        return ad.relu(x)
    if name == "tanh":
        return ad.tanh(x)
    if name == "linear":
        return x
    raise ValidationError(f"unknown activation {name!r}")


def xavier_normal(rng: np.random.Generator, fan_in: int, fan_out: int,
                  gain: float = 1.414) -> np.ndarray:
    std = gain * np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


@dataclass
class EncoderParams:
    """Learnable state of the encoder; shared across both augmented views."""

    proj_weights: list[Tensor]
    proj_biases: list[Tensor]
    att_weight: Tensor
    att_bias: Tensor
    att_query: Tensor
    activation: str = "elu"
    attention_dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.attention_dropout <= 0.5:
            raise ValidationError("attention_dropout must be in [0, 0.5]")

    @classmethod
    def init(cls, in_dim: int, dim: int, rng: np.random.Generator,
             depth: int = 1, activation: str = "elu",
             attention_dropout: float = 0.0) -> "EncoderParams":
        if depth < 1:
            raise ValidationError("projection depth must be >= 1")
        weights, biases = [], []
        fan_in = in_dim
        for _ in range(depth):
            weights.append(Tensor(xavier_normal(rng, fan_in, dim), requires_grad=True))
            biases.append(Tensor(np.zeros(dim), requires_grad=True))
            fan_in = dim
        return cls(
            proj_weights=weights,
            proj_biases=biases,
            att_weight=Tensor(xavier_normal(rng, dim, dim), requires_grad=True),
            att_bias=Tensor(np.zeros(dim), requires_grad=True),
            att_query=Tensor(xavier_normal(rng, dim, 1), requires_grad=True),
            activation=activation,
            attention_dropout=attention_dropout,
        )

    @property
    def dim(self) -> int:
        return self.proj_weights[-1].shape[1]

    def parameters(self) -> list[Tensor]:
        return [*self.proj_weights, *self.proj_biases,
                self.att_weight, self.att_bias, self.att_query]


@dataclass
class ViewEmbeddings:
    """Everything the encoder produces for one view."""

    per_metapath: list[Tensor]
    fused: Tensor
    beta: Tensor
    projected: Tensor


def project_features(features, params: EncoderParams) -> Tensor:
    """Project raw features through the shared MLP."""
    x = ad.as_tensor(features)
    for w, b in zip(params.proj_weights, params.proj_biases):
        x = _activate(ad.add(ad.matmul(x, w), b), params.activation)
    return x


def normalized_adjacency(sub: MetapathSubgraph) -> sp.csr_array:
    """Symmetric-normalized binarized adjacency with self loops.

    Multiplicities are binarized first: the convolution treats an edge as
    present or absent, while strengths drive augmentation and positives.
    """
    adj = sp.csr_array(sub.adjacency, dtype=np.float64, copy=True)
    if adj.nnz:
        adj.data[:] = 1.0
    n = adj.shape[0]
    with_self = sp.csr_array(adj + sp.eye_array(n, format="csr", dtype=np.float64))
    deg = np.asarray(with_self.sum(axis=1)).reshape(-1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    normalized = with_self.multiply(inv_sqrt[:, None]).multiply(inv_sqrt[None, :])
    return sp.csr_array(normalized)


def gcn_propagate(projected: Tensor, sub: MetapathSubgraph) -> Tensor:
    """One graph-convolution layer over a metapath subgraph.

    Node i receives its own projection scaled by 1/(d_i + 1) plus each
    neighbor j scaled by 1/sqrt((d_i + 1)(d_j + 1)).
    """
    if projected.shape[0] != sub.n_nodes:
        raise ValidationError("projected features and subgraph disagree on node count")
    return ad.sparse_dense_matmul(normalized_adjacency(sub), projected)


def _dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return ad.mul(x, Tensor(mask))


def semantic_attention(per_metapath: Sequence[Tensor], params: EncoderParams,
                       rng: Optional[np.random.Generator] = None,
                       training: bool = False) -> tuple[Tensor, Tensor]:
    """Fuse per-metapath embeddings with learned softmax weights.

    Each metapath is scored by the mean projection of its tanh-transformed
    embeddings onto the shared query vector; dropout is applied to the
    transformed activations only while training.
    """
    if not per_metapath:
        raise ValidationError("need at least one metapath embedding")
    scores = []
    for h in per_metapath:
        t = ad.tanh(ad.add(ad.matmul(h, params.att_weight), params.att_bias))
        if training and params.attention_dropout > 0.0:
            if rng is None:
                raise ValidationError("training-mode attention needs an RNG stream")
            t = _dropout(t, params.attention_dropout, rng)
        scores.append(ad.reduce_mean(ad.matmul(t, params.att_query)))
    beta = ad.row_softmax(ad.stack_scalars(scores))
    fused = None
    for m, h in enumerate(per_metapath):
        term = ad.mul(ad.index(beta, m), h)
        fused = term if fused is None else ad.add(fused, term)
    return fused, beta


def encode(view: AugmentedView, params: EncoderParams,
           rng: Optional[np.random.Generator] = None,
           training: bool = False) -> ViewEmbeddings:
    """Project, propagate per metapath, and fuse one view."""
    projected = project_features(view.features, params)
    per_metapath = [gcn_propagate(projected, sub) for sub in view.subgraphs]
    fused, beta = semantic_attention(per_metapath, params, rng=rng, training=training)
    return ViewEmbeddings(per_metapath=per_metapath, fused=fused,
                          beta=beta, projected=projected)
