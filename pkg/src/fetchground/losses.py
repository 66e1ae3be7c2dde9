"""Loss stack: source cross-entropy, ranking hinges for the perception
embedding and for each attention branch, and the weighted total.

All batch losses are summed over the batch then divided by batch size,
so the loss weights do not depend on batch size.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import UsageError
from .tensor import Tensor


@dataclass
class LossWeights:
    context: float = 1.0      # J_c
    target: float = 1.0       # J_t
    linguistic: float = 1.0   # J_l
    perception: float = 1.0   # J_p
    source: float = 0.1       # J_src
    margin: float = 0.1


@dataclass
class LossReport:
    J_c: Tensor
    J_t: Tensor
    J_l: Tensor
    J_p: Tensor
    J_src: Tensor
    J_total: Tensor
    weights: LossWeights

    def values(self) -> dict:
        return {name: float(getattr(self, name).data)
                for name in ("J_c", "J_t", "J_l", "J_p", "J_src", "J_total")}


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean -log p[label] over the batch; probabilities clamped at 1e-12."""
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise UsageError(
            f"cross_entropy expects probs [B,M] and B labels, got "
            f"{probs.shape} and {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise UsageError("label outside [0, M)")
    onehot = np.zeros(probs.shape)
    onehot[np.arange(labels.size), labels] = 1.0
    picked = T.tsum(T.mul(probs, Tensor(onehot)), axis=1)
    return T.mul(T.tmean(T.log(T.clamp_min(picked, 1e-12))), Tensor(-1.0))


def _hinge(margin: float, pos: Tensor, neg: Tensor) -> Tensor:
    return T.relu(T.add(T.sub(neg, pos), Tensor(margin)))


def pair_hinge(sim_pos: Tensor, sim_neg: Tensor, margin: float) -> Tensor:
    """sum(max(0, margin + neg - pos)) / B."""
    if sim_pos.shape != sim_neg.shape or sim_pos.ndim != 1:
        raise UsageError(f"pair_hinge expects matching 1-D similarity "
                         f"batches, got {sim_pos.shape}, {sim_neg.shape}")
    b = sim_pos.shape[0]
    return T.div(T.tsum(_hinge(margin, sim_pos, sim_neg)), Tensor(float(b)))


def triplet_hinge(sim_pos: Tensor, sim_neg_visual: Tensor,
                  sim_neg_linguistic: Tensor, margin: float) -> Tensor:
    """Two hinges sharing the positive pair: a wrong candidate against the
    true sentence, and a wrong sentence against the true candidate."""
    if not (sim_pos.shape == sim_neg_visual.shape == sim_neg_linguistic.shape
            and sim_pos.ndim == 1):
        raise UsageError("triplet_hinge expects three matching 1-D batches")
    b = sim_pos.shape[0]
    total = T.add(T.tsum(_hinge(margin, sim_pos, sim_neg_visual)),
                  T.tsum(_hinge(margin, sim_pos, sim_neg_linguistic)))
    return T.div(total, Tensor(float(b)))


def masked_sum_hinge(margin: float, pos: Tensor, neg: Tensor, mask) -> Tensor:
    """Pair hinge over rows where mask is 1, divided by the mask count.

    Rows excluded by the mask contribute nothing (scenes without a second
    candidate have no negatives).
    """
    mask = np.asarray(mask, dtype=np.float64)
    n = float(mask.sum())
    if n == 0:
        return Tensor(0.0)
    terms = T.mul(_hinge(margin, pos, neg), Tensor(mask))
    return T.div(T.tsum(terms), Tensor(n))


def total_loss(J_c, J_t, J_l, J_p, J_src, weights: LossWeights) -> LossReport:
    w = weights
    total = Tensor(0.0)
    for term, lam in ((J_c, w.context), (J_t, w.target), (J_l, w.linguistic),
                      (J_p, w.perception), (J_src, w.source)):
        if lam != 0.0:
            total = T.add(total, T.mul(Tensor(lam), term))
    return LossReport(J_c=J_c, J_t=J_t, J_l=J_l, J_p=J_p, J_src=J_src,
                      J_total=total, weights=w)


def rank_candidates(zl: Tensor, zv_rows: Tensor):
    """Order candidate rows by cosine similarity to zl, descending;
    ties resolve to the lowest index.  Returns (order, sims)."""
    if zv_rows.ndim != 2 or zv_rows.shape[0] < 1:
        raise UsageError(f"rank_candidates needs [N,D] candidates, got "
                         f"{zv_rows.shape}")
    n = zv_rows.shape[0]
    with T.no_grad():
        anchor = T.concat([T.reshape(zl, (1, -1))] * n, axis=0)
        sims = T.cosine_rows(anchor, zv_rows).data.copy()
    order = np.argsort(-sims, kind="stable")
    return order.tolist(), sims
