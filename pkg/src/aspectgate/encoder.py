"""Bidirectional GRU encoder producing one pooled representation per aspect.

Each word embedding is concatenated with the aspect embedding before
encoding, a forward and a backward pass run from zero initial states, the
per-step states are concatenated and max-pooled over time.  The cells
carry no bias vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

GRU_KEYS = ("w_x", "w_h", "w_xr", "w_hr", "w_xz", "w_hz")
INIT_SCALE = 0.08


def uniform_init(rng, shape, dtype, scale=INIT_SCALE):
    return Tensor(rng.uniform(-scale, scale, shape).astype(dtype))


@dataclass
class GruCell:
    """Six weight matrices: candidate, reset and update, each with an
    input-side and a recurrent-side matrix."""

    w_x: Tensor
    w_h: Tensor
    w_xr: Tensor
    w_hr: Tensor
    w_xz: Tensor
    w_hz: Tensor

    @property
    def hidden_size(self):
        return self.w_h.shape[0]

    @property
    def input_size(self):
        return self.w_x.shape[1]

    @classmethod
    def create(cls, input_size, hidden_size, rng, dtype=np.float32):
        def mat(cols):
            return uniform_init(rng, (hidden_size, cols), dtype)

        return cls(w_x=mat(input_size), w_h=mat(hidden_size),
                   w_xr=mat(input_size), w_hr=mat(hidden_size),
                   w_xz=mat(input_size), w_hz=mat(hidden_size))

    def named(self, prefix):
        return {f"{prefix}.{key}": getattr(self, key) for key in GRU_KEYS}


def gru_step(cell, x_t, h_prev):
    """One recurrence step.

    reset   r = sigmoid(W_xr x + W_hr h)
    update  z = sigmoid(W_xz x + W_hz h)
    cand    c = tanh(W_x x + r * (W_h h))
    state   h = (1 - z) * h_prev + z * c
    """
    r = ad.sigmoid(ad.add(ad.matvec(cell.w_xr, x_t), ad.matvec(cell.w_hr, h_prev)))
    z = ad.sigmoid(ad.add(ad.matvec(cell.w_xz, x_t), ad.matvec(cell.w_hz, h_prev)))
    cand = ad.tanh(ad.add(ad.matvec(cell.w_x, x_t), ad.mul(r, ad.matvec(cell.w_h, h_prev))))
    return ad.add(ad.mul(ad.one_minus(z), h_prev), ad.mul(z, cand))


def _run_gru(cell, inputs):
    h = Tensor(np.zeros(cell.hidden_size, dtype=inputs[0].dtype))
    states = []
    for x_t in inputs:
        h = gru_step(cell, x_t, h)
        states.append(h)
    return states


def aspect_aware_representation(fwd_cell, bwd_cell, token_embs, aspect_emb):
    """Pooled bidirectional encoding of a sentence conditioned on one aspect.

    Step input is [word_t ; aspect]; the backward cell consumes the
    reversed sequence and its states are re-aligned to token positions
    before concatenation and element-wise max over time.
    """
    if not token_embs:
        raise ValueError("aspect_aware_representation: empty sentence")
    xs = [ad.concat(tok, aspect_emb) for tok in token_embs]
    fwd_states = _run_gru(fwd_cell, xs)
    bwd_states = _run_gru(bwd_cell, xs[::-1])[::-1]
    steps = [ad.concat(f, b) for f, b in zip(fwd_states, bwd_states)]
    return ad.maxpool(ad.stack(*steps))


def mean_vectors(vectors):
    """Arithmetic mean of same-shaped vector nodes."""
    if not vectors:
        raise ValueError("mean_vectors: empty input")
    if len(vectors) == 1:
        return vectors[0]
    total = vectors[0]
    for v in vectors[1:]:
        total = ad.add(total, v)
    return ad.scale(total, 1.0 / len(vectors))


def embed_aspect(embedding_rows, tok_start, tok_len):
    """Aspect embedding: mean of the embeddings of the aspect's tokens."""
    return mean_vectors(embedding_rows[tok_start:tok_start + tok_len])
