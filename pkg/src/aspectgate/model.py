"""Trainable parameter blocks and the per-variant forward pass.

Three forward variants share the encoder and classifier:

* ``gru``      classifies the target's own pooled representation,
* ``gru_tm``   classifies the temporal-GRU fusion over all aspects,
* ``gru_notm`` classifies the gated (non-temporal) fusion.

In every variant each neighbor is also classified from its own
representation, which the auxiliary loss consumes.  Training presets
``gru_fl`` and ``miad`` reuse the ``gru`` and ``gru_notm`` passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import CLASSES
from .encoder import GruCell, aspect_aware_representation, embed_aspect, uniform_init
from .fusion import classify, compute_gate_logits, fuse, normalize_gates, temporal_fuse

FORWARD_VARIANTS = ("gru", "gru_tm", "gru_notm")

FUSION_BY_VARIANT = {
    "gru": "none",
    "gru_tm": "temporal",
    "gru_notm": "gated",
    "gru_fl": "none",
    "miad": "gated",
}

FORWARD_BY_FUSION = {"none": "gru", "temporal": "gru_tm", "gated": "gru_notm"}


class ModelParams:
    """All trainable blocks for one fusion configuration.

    Blocks are named float arrays wrapped as graph leaves; the embedding
    matrix is a block too (row 0 is the fixed zero padding row, which never
    receives gradient because no training token maps to it).
    """

    def __init__(self, blocks, embed_size, hidden_size, fusion, include_target_gate=False):
        self.blocks = blocks
        self.embed_size = embed_size
        self.hidden_size = hidden_size
        self.fusion = fusion
        self.include_target_gate = include_target_gate
        self.embeddings = blocks["embeddings"]
        self.fwd_cell = GruCell(**{k: blocks[f"enc_fwd.{k}"] for k in GruCell.__dataclass_fields__})
        self.bwd_cell = GruCell(**{k: blocks[f"enc_bwd.{k}"] for k in GruCell.__dataclass_fields__})
        self.clf_w = blocks["clf.w"]
        self.clf_b = blocks["clf.b"]
        self.gate_w_a = blocks.get("gate.w_a")
        self.gate_w_cg = blocks.get("gate.w_cg")
        if fusion == "temporal":
            self.temporal_cell = GruCell(
                **{k: blocks[f"temporal.{k}"] for k in GruCell.__dataclass_fields__})
        else:
            self.temporal_cell = None

    @classmethod
    def create(cls, vocab_rows, embed_size, hidden_size, fusion, seed,
               dtype=np.float32, init_embeddings=None, include_target_gate=False):
        if fusion not in FORWARD_BY_FUSION:
            raise ValueError(f"unknown fusion {fusion!r}")
        rng = np.random.RandomState(seed)
        rep_size = 2 * hidden_size
        blocks = {}
        if init_embeddings is not None:
            emb = np.asarray(init_embeddings, dtype=dtype).copy()
            if emb.shape != (vocab_rows, embed_size):
                raise ValueError(f"embedding init shape {emb.shape} does not match "
                                 f"({vocab_rows}, {embed_size})")
            blocks["embeddings"] = Tensor(emb)
        else:
            blocks["embeddings"] = uniform_init(rng, (vocab_rows, embed_size), dtype, scale=0.1)
        blocks.update(GruCell.create(2 * embed_size, hidden_size, rng, dtype).named("enc_fwd"))
        blocks.update(GruCell.create(2 * embed_size, hidden_size, rng, dtype).named("enc_bwd"))
        if fusion == "gated":
            blocks["gate.w_a"] = uniform_init(rng, (rep_size, embed_size), dtype)
            blocks["gate.w_cg"] = uniform_init(rng, (rep_size, rep_size), dtype)
        blocks["clf.w"] = uniform_init(rng, (len(CLASSES), rep_size), dtype)
        blocks["clf.b"] = Tensor(np.zeros(len(CLASSES), dtype=dtype))
        if fusion == "temporal":
            blocks.update(GruCell.create(rep_size, rep_size, rng, dtype).named("temporal"))
        return cls(blocks, embed_size, hidden_size, fusion,
                   include_target_gate=include_target_gate)

    @property
    def dtype(self):
        return self.embeddings.dtype

    def zero_grad(self):
        for t in self.blocks.values():
            t.zero_grad()

    def copy_values(self):
        return {name: t.values.copy() for name, t in self.blocks.items()}

    def load_values(self, values, error=ValueError):
        for name in sorted(self.blocks):
            if name not in values:
                raise error(f"missing parameter block {name!r}")
            new = values[name]
            if tuple(new.shape) != tuple(self.blocks[name].shape):
                raise error(f"shape mismatch for block {name!r}: checkpoint has "
                            f"{tuple(new.shape)}, model expects {tuple(self.blocks[name].shape)}")
        extra = set(values) - set(self.blocks)
        if extra:
            raise error(f"unexpected parameter block {sorted(extra)[0]!r}")
        for name, t in self.blocks.items():
            t.values[...] = values[name]


def token_ids(record, vocabulary):
    return [vocabulary.get(tok, 0) for tok in record.tokens]


@dataclass
class SentenceForward:
    """Per-aspect nodes for one sentence, shared by all its groups."""

    reps: list        # pooled representation per aspect, textual order
    aspect_embs: list
    probs: list       # classify(C_i) per aspect


def encode_sentence(params, ids, aspect_ranges):
    """Representation, aspect embedding and class probabilities per aspect."""
    rows = [ad.row(params.embeddings, i) for i in ids]
    reps, aspect_embs, probs = [], [], []
    for tok_start, tok_len in aspect_ranges:
        a = embed_aspect(rows, tok_start, tok_len)
        c = aspect_aware_representation(params.fwd_cell, params.bwd_cell, rows, a)
        aspect_embs.append(a)
        reps.append(c)
        probs.append(classify(params.clf_w, params.clf_b, c))
    return SentenceForward(reps=reps, aspect_embs=aspect_embs, probs=probs)


def gated_fusion(params, target_rep, target_aspect_emb, neighbor_reps):
    """Gate, normalize and fuse; optionally gates the target itself too."""
    gated = ([target_rep] if params.include_target_gate else []) + list(neighbor_reps)
    logits = compute_gate_logits(params.gate_w_a, params.gate_w_cg,
                                 target_aspect_emb, gated)
    gates = normalize_gates(logits)
    return fuse(target_rep, gated, gates)


def forward_variant(params, variant, sent, target_index):
    """Target and neighbor probability nodes for one group.

    ``sent`` is the shared SentenceForward of the group's sentence; the
    neighbor probabilities are always taken from each aspect's own
    representation.
    """
    if variant not in FORWARD_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {FORWARD_VARIANTS}")
    k = len(sent.reps)
    neighbors = [i for i in range(k) if i != target_index]
    neighbor_probs = [sent.probs[i] for i in neighbors]

    if variant == "gru" or (variant == "gru_notm" and not neighbors):
        target_prob = sent.probs[target_index]
    elif variant == "gru_notm":
        fused = gated_fusion(params, sent.reps[target_index],
                             sent.aspect_embs[target_index],
                             [sent.reps[i] for i in neighbors])
        target_prob = classify(params.clf_w, params.clf_b, fused)
    else:  # gru_tm
        fused = temporal_fuse(params.temporal_cell, sent.reps, target_index)
        target_prob = classify(params.clf_w, params.clf_b, fused)
    return target_prob, neighbor_probs


def forward_group(params, variant, group, vocabulary):
    """Forward one AspectGroup from scratch (inference path)."""
    record = group.sentence
    ids = token_ids(record, vocabulary)
    ranges = [(a.tok_start, a.tok_len) for a in record.aspects]
    sent = encode_sentence(params, ids, ranges)
    return forward_variant(params, variant, sent, group.target_index)


def iter_group_probs(params, variant, groups, vocabulary):
    """Yield ``(group, target probability vector)`` for many groups.

    Groups of the same sentence are processed together so the sentence is
    encoded once, and its graph is dropped before the next sentence.
    """
    by_sentence = {}
    order = []
    for group in groups:
        key = id(group.sentence)
        if key not in by_sentence:
            by_sentence[key] = []
            order.append(key)
        by_sentence[key].append(group)
    for key in order:
        members = by_sentence[key]
        record = members[0].sentence
        ids = token_ids(record, vocabulary)
        ranges = [(a.tok_start, a.tok_len) for a in record.aspects]
        sent = encode_sentence(params, ids, ranges)
        for group in members:
            target_prob, _ = forward_variant(params, variant, sent, group.target_index)
            yield group, target_prob.values.copy()


def predict_label(prob_node):
    """Argmax class label; ties break to the lowest class index."""
    return CLASSES[int(np.argmax(prob_node.values))]
