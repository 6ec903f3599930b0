"""Adam training loop with sentence batching, dev selection and checkpoints.

Batches are whole sentences so that every group's neighbor representations
exist inside its batch.  A seed-controlled, SA/MA-stratified dev split
drives early stopping and best-epoch restoration; the run is bit-for-bit
deterministic given (seed, config, data).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .corpus import CLASS_INDEX, DataError
from .losses import batch_objective, focal_loss, neighbor_loss, one_hot, total_objective
from .model import (FORWARD_BY_FUSION, FUSION_BY_VARIANT, ModelParams, encode_sentence,
                    forward_variant, iter_group_probs, token_ids)

VARIANTS = tuple(FUSION_BY_VARIANT)
DOMAIN_LOSS_WEIGHT = {"restaurant": 0.4, "laptop": 0.2}

CHECKPOINT_MAGIC = b"AGCP"
CHECKPOINT_VERSION = 1


class DivergenceError(Exception):
    """Loss went non-finite for an entire epoch."""


class CheckpointError(DataError):
    """Unreadable, truncated or incompatible checkpoint file."""


@dataclass
class TrainConfig:
    domain: str = "restaurant"
    variant: str = "miad"
    gamma: float = 2.0
    loss_weight: float | None = None  # None: domain default where the preset uses it
    learning_rate: float = 0.01
    hidden_size: int = 150
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    dev_fraction: float = 0.1
    seed: int = 0
    include_target_gate: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.domain not in DOMAIN_LOSS_WEIGHT:
            raise ValueError(f"unknown domain {self.domain!r}")

    @property
    def fusion(self):
        return FUSION_BY_VARIANT[self.variant]

    @property
    def forward_variant(self):
        return FORWARD_BY_FUSION[self.fusion]

    def effective_gamma(self):
        # presets pair the loss with the variant: only +FL variants focus
        return self.gamma if self.variant in ("gru_fl", "miad") else 0.0

    def effective_loss_weight(self):
        if self.variant in ("gru", "gru_fl"):
            return 0.0
        if self.loss_weight is not None:
            return self.loss_weight
        return DOMAIN_LOSS_WEIGHT[self.domain]


class Adam:
    """Adam with bias-corrected moment estimates over named blocks."""

    def __init__(self, blocks, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.blocks = blocks
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {name: np.zeros_like(t.values) for name, t in blocks.items()}
        self.v = {name: np.zeros_like(t.values) for name, t in blocks.items()}

    def step(self):
        """Apply one update; returns False (and changes nothing) on any
        non-finite gradient."""
        grads = {}
        for name, tensor in self.blocks.items():
            g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.values)
            if not np.isfinite(g).all():
                return False
            grads[name] = g
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for name in sorted(self.blocks):
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / correct1
            v_hat = v / correct2
            self.blocks[name].values -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
        return True


@dataclass
class TrainResult:
    params: ModelParams
    config: TrainConfig
    log_lines: list
    best_epoch: int | None
    best_dev_acc: float | None
    warnings: list = field(default_factory=list)


def _unique_sentences(groups):
    seen = {}
    for group in groups:
        seen.setdefault(id(group.sentence), group.sentence)
    return list(seen.values())


def split_dev(groups, dev_fraction, seed):
    """Hold out a fraction of sentences, stratified by SA/MA membership."""
    if dev_fraction <= 0:
        return groups, []
    sentences = _unique_sentences(groups)
    rng = np.random.RandomState(seed)
    dev_ids = set()
    for stratum in (False, True):
        members = [s for s in sentences if s.is_multi_aspect() == stratum]
        take = int(len(members) * dev_fraction)
        order = rng.permutation(len(members))
        dev_ids.update(id(members[i]) for i in order[:take])
    train = [g for g in groups if id(g.sentence) not in dev_ids]
    dev = [g for g in groups if id(g.sentence) in dev_ids]
    return train, dev


def _group_loss(target_prob, neighbor_probs, group, gamma, weight, dtype):
    y_target = one_hot(CLASS_INDEX[group.target.polarity], dtype=dtype)
    target_loss = focal_loss(target_prob, y_target, gamma)
    if weight == 0.0 or not neighbor_probs:
        return target_loss
    targets = [one_hot(CLASS_INDEX[a.polarity], dtype=dtype) for a in group.neighbors]
    aux = neighbor_loss(neighbor_probs, targets, gamma, dtype=dtype)
    return total_objective(target_loss, aux, weight)


def accuracy(params, variant, groups, vocabulary):
    if not groups:
        return float("nan")
    correct = 0
    for group, probs in iter_group_probs(params, variant, groups, vocabulary):
        correct += int(np.argmax(probs)) == CLASS_INDEX[group.target.polarity]
    return correct / len(groups)


def _forward_cached(params, variant, group, vocabulary, cache):
    key = id(group.sentence)
    sent = cache.get(key)
    if sent is None:
        record = group.sentence
        ids = token_ids(record, vocabulary)
        ranges = [(a.tok_start, a.tok_len) for a in record.aspects]
        sent = encode_sentence(params, ids, ranges)
        cache[key] = sent
    return forward_variant(params, variant, sent, group.target_index)


def train(config, groups, table, epoch_hook=None):
    """Train a model for the configured variant over pre-built groups.

    ``epoch_hook(epoch, params)``, when given, runs after each epoch and
    may return True to stop early (used by capacity checks).
    """
    if not groups:
        raise ValueError("train: empty corpus")
    params = ModelParams.create(
        vocab_rows=table.matrix.shape[0], embed_size=table.dim,
        hidden_size=config.hidden_size, fusion=config.fusion, seed=config.seed,
        init_embeddings=table.matrix, include_target_gate=config.include_target_gate)
    variant = config.forward_variant
    gamma = config.effective_gamma()
    weight = config.effective_loss_weight()
    dtype = params.dtype

    train_groups, dev_groups = split_dev(groups, config.dev_fraction, config.seed)
    if not train_groups:
        raise ValueError("train: the dev split left no training sentences")
    group_key = {id(g): i for i, g in enumerate(groups)}
    by_sentence = {}
    sentence_order = []
    for g in train_groups:
        key = id(g.sentence)
        if key not in by_sentence:
            by_sentence[key] = []
            sentence_order.append(key)
        by_sentence[key].append(g)

    rng = np.random.RandomState(config.seed)
    optimizer = Adam(params.blocks, config.learning_rate)
    vocabulary = table.vocabulary
    log_lines = []
    warnings = []
    best = None  # (acc, epoch, values)
    epochs_since_best = 0

    with ad.gc_paused():  # graphs are acyclic; refcounting reclaims them
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(len(sentence_order))
            epoch_losses = []
            for start in range(0, len(order), config.batch_size):
                batch_keys = [sentence_order[i]
                              for i in order[start:start + config.batch_size]]
                params.zero_grad()
                cache = {}
                keyed = []
                for key in batch_keys:
                    for group in by_sentence[key]:
                        target_prob, neighbor_probs = _forward_cached(
                            params, variant, group, vocabulary, cache)
                        loss = _group_loss(target_prob, neighbor_probs, group,
                                           gamma, weight, dtype)
                        keyed.append((group_key[id(group)], loss))
                batch_loss = batch_objective(keyed)
                value = float(batch_loss.values)
                if not np.isfinite(value):
                    warnings.append(f"epoch {epoch}: skipped batch with non-finite loss")
                    continue
                ad.backward(batch_loss)
                if not optimizer.step():
                    warnings.append(f"epoch {epoch}: skipped batch with non-finite gradient")
                    continue
                epoch_losses.append(value)
            if not epoch_losses:
                raise DivergenceError(f"epoch {epoch}: no batch produced a finite loss")
            train_loss = float(np.mean(epoch_losses))
            dev_acc = (accuracy(params, variant, dev_groups, vocabulary)
                       if dev_groups else float("nan"))
            log_lines.append(f"{epoch}\t{train_loss:.6f}\t{dev_acc:.4f}")

            if dev_groups:
                if best is None or dev_acc > best[0]:
                    best = (dev_acc, epoch, params.copy_values())
                    epochs_since_best = 0
                else:
                    epochs_since_best += 1
                    if epochs_since_best >= config.patience:
                        break
            if epoch_hook is not None and epoch_hook(epoch, params):
                break

    if best is not None:
        params.load_values(best[2])
        best_epoch, best_acc = best[1], best[0]
    else:
        best_epoch, best_acc = None, None
    return TrainResult(params=params, config=config, log_lines=log_lines,
                       best_epoch=best_epoch, best_dev_acc=best_acc, warnings=warnings)


# ---------------------------------------------------------------------------
# Checkpoints: versioned binary, named blocks, little-endian float32
# ---------------------------------------------------------------------------

def atomic_write_bytes(path, data):
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def save_checkpoint(path, params, config, vocabulary):
    """Serialize parameter blocks with their config and vocabulary."""
    names = sorted(params.blocks)
    for name in names:
        if params.blocks[name].dtype != np.float32:
            raise CheckpointError(f"checkpoints store float32 blocks; {name!r} is "
                                  f"{params.blocks[name].dtype}")
    header = {
        "config": asdict(config),
        "vocabulary": vocabulary,
        "embed_size": params.embed_size,
        "blocks": [{"name": n, "shape": list(params.blocks[n].shape)} for n in names],
    }
    header_bytes = json.dumps(header).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC,
              struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)),
              header_bytes]
    for name in names:
        chunks.append(params.blocks[name].values.astype("<f4", copy=False).tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def load_checkpoint(path):
    """Read back (values, config dict, vocabulary); fails on any truncation."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(data) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header: {exc}") from exc
    offset = 12 + header_len
    expected = sum(int(np.prod(b["shape"])) for b in header["blocks"]) * 4
    if len(data) - offset != expected:
        raise CheckpointError(f"{path}: truncated checkpoint payload "
                              f"({len(data) - offset} bytes, expected {expected})")
    values = {}
    for block in header["blocks"]:
        count = int(np.prod(block["shape"]))
        raw = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        values[block["name"]] = np.asarray(raw, dtype=np.float32).reshape(block["shape"]).copy()
        offset += count * 4
    return values, header["config"], header["vocabulary"]


def load_model(path):
    """Rebuild (params, config, vocabulary) from a checkpoint."""
    values, config_dict, vocabulary = load_checkpoint(path)
    config = TrainConfig(**config_dict)
    emb_shape = values["embeddings"].shape
    params = ModelParams.create(
        vocab_rows=emb_shape[0], embed_size=emb_shape[1],
        hidden_size=config.hidden_size, fusion=config.fusion, seed=config.seed,
        include_target_gate=config.include_target_gate)
    params.load_values(values, error=CheckpointError)
    return params, config, vocabulary
