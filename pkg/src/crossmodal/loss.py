"""Joint supervision: summed softmax cross-entropy plus class-center distance.

The center term for a class is the sum of squared distances of its in-batch
features (both modalities pooled) to their arithmetic mean. The joint loss
is xent + (lambda/2) * sum over classes of that distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CENTER_MODES = ("in_batch", "ema")


@dataclass
class ClassifierHead:
    W: np.ndarray   # (embed_dim, n_classes)
    b: np.ndarray   # (n_classes,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[1] < 2:
            raise ValueError("head needs at least 2 classes")
        if self.b.shape != (self.W.shape[1],):
            raise ValueError("bias shape must match n_classes")

    @property
    def n_classes(self) -> int:
        return self.W.shape[1]


def init_head(embed_dim: int, n_classes: int, seed: int) -> ClassifierHead:
    rng = np.random.default_rng(seed)
    a = np.sqrt(6.0 / (embed_dim + n_classes))
    return ClassifierHead(W=rng.uniform(-a, a, size=(embed_dim, n_classes)),
                          b=np.zeros(n_classes))


@dataclass
class MiniBatch:
    embeddings: np.ndarray          # (m, embed_dim)
    labels: np.ndarray              # (m,) ints
    modality_tags: list = field(default_factory=list)  # diagnostic only

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 1:
            raise ValueError("batch must contain at least one embedding")
        if self.labels.shape != (self.embeddings.shape[0],):
            raise ValueError("labels must align with embeddings")

    @property
    def m(self) -> int:
        return self.embeddings.shape[0]

    @property
    def n(self) -> int:
        return len(np.unique(self.labels))


@dataclass
class ClassCenters:
    centers: dict   # class -> (embed_dim,) mean vector
    counts: dict    # class -> member count


@dataclass
class LossConfig:
    lam: float = 1.0
    center_mode: str = "in_batch"
    ema_alpha: float = 0.5

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.center_mode not in CENTER_MODES:
            raise ValueError(f"unknown center_mode {self.center_mode!r}")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must be in (0, 1]")


@dataclass
class JointLossResult:
    total: float
    xent: float
    center_term: float
    grad_embeddings: np.ndarray     # (m, embed_dim)
    grad_head_w: np.ndarray         # (embed_dim, n_classes)
    grad_head_b: np.ndarray         # (n_classes,)


def compute_centers(batch: MiniBatch) -> ClassCenters:
    """Exact per-class arithmetic means over all in-batch features."""
    centers, counts = {}, {}
    for c in np.unique(batch.labels):
        mask = batch.labels == c
        centers[int(c)] = batch.embeddings[mask].mean(axis=0)
        counts[int(c)] = int(mask.sum())
    return ClassCenters(centers=centers, counts=counts)


def center_distance(batch: MiniBatch, centers) -> float:
    """Sum over classes of the squared distances of members to their center.

    ``centers`` may be a ClassCenters or a plain class-to-vector dict (as
    used by the EMA mode).
    """
    mapping = centers.centers if isinstance(centers, ClassCenters) else centers
    total = 0.0
    for c, center in mapping.items():
        diff = batch.embeddings[batch.labels == c] - center
        total += float((diff ** 2).sum())
    return total


def softmax_xent(head: ClassifierHead, batch: MiniBatch) -> tuple:
    """Summed cross-entropy and its gradient w.r.t. the logits.

    Stabilized so that a saturated correct logit yields a loss that decays
    to zero instead of rounding to exactly zero too early: when the true
    logit is the max, the loss is computed as log1p of the off-class mass.
    """
    if np.any(batch.labels < 0) or np.any(batch.labels >= head.n_classes):
        raise ValueError("labels out of range for this head")
    logits = batch.embeddings @ head.W + head.b          # (m, n_classes)
    zmax = logits.max(axis=1, keepdims=True)
    expz = np.exp(logits - zmax)
    sums = expz.sum(axis=1)
    rows = np.arange(batch.m)
    z_true = logits[rows, batch.labels]
    loss = 0.0
    for i in rows:
        shifted = logits[i] - z_true[i]
        if z_true[i] == zmax[i, 0]:
            off = np.exp(shifted)
            off[batch.labels[i]] = 0.0
            loss += float(np.log1p(off.sum()))
        else:
            loss += float((zmax[i, 0] - z_true[i]) + np.log(sums[i]))
    grad_logits = expz / sums[:, None]
    grad_logits[rows, batch.labels] -= 1.0
    return loss, grad_logits


def joint_loss(head: ClassifierHead, batch: MiniBatch, cfg: LossConfig,
               ema_centers: dict | None = None) -> JointLossResult:
    """Joint supervision with analytic gradients.

    With in-batch centers the embedding gradient of the center term is
    exactly lambda * (f_i - center_{y_i}); differentiating through the mean
    adds nothing because per-class residuals sum to zero. With lambda = 0
    the result equals softmax_xent bit-for-bit.
    """
    xent, grad_logits = softmax_xent(head, batch)
    grad_emb = grad_logits @ head.W.T
    grad_w = batch.embeddings.T @ grad_logits
    grad_b = grad_logits.sum(axis=0)
    center_term = 0.0
    if cfg.lam != 0.0:
        if cfg.center_mode == "ema":
            state = ema_centers or {}
            dim = batch.embeddings.shape[1]
            centers = {int(c): state.get(int(c), np.zeros(dim))
                       for c in np.unique(batch.labels)}
        else:
            centers = compute_centers(batch).centers
        residuals = batch.embeddings - np.stack(
            [centers[int(c)] for c in batch.labels])
        center_term = float(0.5 * cfg.lam * (residuals ** 2).sum())
        grad_emb = grad_emb + cfg.lam * residuals
    return JointLossResult(total=xent + center_term, xent=xent,
                           center_term=center_term, grad_embeddings=grad_emb,
                           grad_head_w=grad_w, grad_head_b=grad_b)


def ema_center_update(centers_state: dict, batch: MiniBatch,
                      alpha: float) -> dict:
    """Move each present class center toward its batch mean by ``alpha``.

    Classes absent from the batch are untouched; a class never seen before
    starts from the zero vector. Returns a new dict (the input is not
    mutated).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    state = dict(centers_state)
    dim = batch.embeddings.shape[1]
    for c in np.unique(batch.labels):
        c = int(c)
        mean = batch.embeddings[batch.labels == c].mean(axis=0)
        old = state.get(c, np.zeros(dim))
        state[c] = old - alpha * (old - mean)
    return state
