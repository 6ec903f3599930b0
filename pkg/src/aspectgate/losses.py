"""Training objective: focal loss, averaged neighbor loss, combined total.

The focal loss is cross-entropy scaled by ``(1 - p)^gamma``, which leaves
hard instances untouched and down-weights well-classified ones; ``gamma=0``
recovers plain cross-entropy exactly.  Probabilities are clamped at 1e-12
before the log so single-precision softmax underflow cannot produce
non-finite losses.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .corpus import CLASSES


def one_hot(class_index, num_classes=len(CLASSES), dtype=np.float64):
    if not 0 <= class_index < num_classes:
        raise ValueError(f"class index {class_index} out of range")
    y = np.zeros(num_classes, dtype=dtype)
    y[class_index] = 1.0
    return y


def _check_one_hot(y):
    y = np.asarray(y)
    if not ((y == 0) | (y == 1)).all() or y.sum() != 1:
        raise ValueError(f"expected a one-hot target, got {y}")
    return y


def focal_loss(p, y, gamma):
    """Scalar focal loss node for one probability vector and one-hot target."""
    p = as_tensor(p)
    return ad.focal_term(p, _check_one_hot(y), gamma)


def neighbor_loss(neighbor_probs, neighbor_targets, gamma, dtype=np.float64):
    """Mean focal loss over the neighbors; zero when there are none."""
    if len(neighbor_probs) != len(neighbor_targets):
        raise ValueError(f"{len(neighbor_probs)} probability vectors vs "
                         f"{len(neighbor_targets)} targets")
    if not neighbor_probs:
        return Tensor(np.zeros((), dtype=dtype))
    terms = [focal_loss(p, y, gamma) for p, y in zip(neighbor_probs, neighbor_targets)]
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return ad.scale(total, 1.0 / len(terms))


def total_objective(target_loss, neighbor_term, weight):
    """Combined objective: target loss plus ``weight`` times the neighbor loss."""
    if not np.isfinite(weight) or weight < 0:
        raise ValueError(f"loss weight must be finite and >= 0, got {weight}")
    return ad.add(target_loss, ad.scale(neighbor_term, float(weight)))


def batch_objective(keyed_losses):
    """Mean of per-instance losses, summed in canonical key order.

    Sorting by the stable keys before folding makes the value bit-identical
    under any reordering of the input list.
    """
    if not keyed_losses:
        raise ValueError("batch_objective: empty batch")
    ordered = [loss for _, loss in sorted(keyed_losses, key=lambda kv: kv[0])]
    total = ordered[0]
    for loss in ordered[1:]:
        total = ad.add(total, loss)
    return ad.scale(total, 1.0 / len(ordered))
