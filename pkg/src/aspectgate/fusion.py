"""Inter-aspect fusion of pooled sentence representations.

The gated (non-temporal) path assigns each surrounding aspect a sigmoid
gate, normalizes the gates per feature position across aspects, and adds
the gated representations onto the target's own.  A plain GRU over the
representations in textual order serves as the temporal baseline.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import gru_step


def compute_gate_logits(w_a, w_cg, target_aspect_emb, reps):
    """One sigmoid gate vector per representation: sigmoid(W_a a + W_cg C_i)."""
    if not reps:
        raise ValueError("compute_gate_logits: need at least one representation")
    base = ad.matvec(w_a, target_aspect_emb)
    return [ad.sigmoid(ad.add(base, ad.matvec(w_cg, c))) for c in reps]


def normalize_gates(gate_logits):
    """Softmax across aspects, independently at every feature position."""
    if not gate_logits:
        raise ValueError("normalize_gates: need at least one gate")
    normalized = ad.softmax(ad.stack(*gate_logits))
    return [ad.row(normalized, i) for i in range(len(gate_logits))]


def fuse(target_rep, reps, gates):
    """Fused representation: target plus the gated sum of the others.

    With no neighbors the target representation is returned unchanged.
    """
    if len(reps) != len(gates):
        raise ValueError(f"fuse: {len(reps)} representations vs {len(gates)} gates")
    out = target_rep
    for c, g in zip(reps, gates):
        out = ad.add(out, ad.mul(g, c))
    return out


def temporal_fuse(cell, reps_in_text_order, target_position):
    """Temporal baseline: GRU over the representations, state read at the target.

    Only aspects preceding the target (and the target itself) influence the
    returned state.
    """
    if not reps_in_text_order:
        raise ValueError("temporal_fuse: empty representation sequence")
    if not 0 <= target_position < len(reps_in_text_order):
        raise ValueError(f"temporal_fuse: target position {target_position} out of "
                         f"range for {len(reps_in_text_order)} representations")
    h = Tensor(np.zeros(cell.hidden_size, dtype=reps_in_text_order[0].dtype))
    for position, rep in enumerate(reps_in_text_order):
        h = gru_step(cell, rep, h)
        if position == target_position:
            break
    return h


def classify(w_out, b_out, rep):
    """Class probabilities: softmax of the affine map of a representation."""
    return ad.softmax(ad.add(ad.matvec(w_out, rep), b_out))
