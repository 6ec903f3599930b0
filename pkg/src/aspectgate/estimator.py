"""Scikit-learn style front door for the aspect polarity model.

``AspectPolarityClassifier`` follows the estimator conventions (``fit`` /
``predict`` / ``predict_proba`` / ``score``, ``get_params`` round-trip,
``NotFittedError`` before fit) so the model drops into pipelines and
grid-search tooling.  Instances are :class:`~aspectgate.corpus.AspectGroup`
objects rather than numeric matrices; labels live on the groups, with an
optional ``y`` override for the target aspects.
"""

from __future__ import annotations

import copy

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .corpus import CLASSES, CLASS_INDEX, AspectGroup, EmbeddingTable, build_embeddings, \
    build_random_table
from .model import iter_group_probs
from .training import TrainConfig, TrainResult, train


def check_groups(X):
    """Validate a sequence of AspectGroup instances with legal labels."""
    groups = list(X)
    if not groups:
        raise ValueError("expected a non-empty sequence of AspectGroup instances")
    for i, group in enumerate(groups):
        if not isinstance(group, AspectGroup):
            raise TypeError(f"X[{i}] is {type(group).__name__}, expected AspectGroup")
    return groups


def check_labels(groups, require=True):
    for group in groups:
        labels = [group.target.polarity] + [a.polarity for a in group.neighbors]
        for label in labels:
            if label not in CLASS_INDEX and (require or label is not None):
                raise ValueError(f"unknown polarity label {label!r}; "
                                 f"expected one of {CLASSES}")


def relabel_targets(groups, y):
    """Clone sentences and overwrite each group's target polarity from y."""
    if len(y) != len(groups):
        raise ValueError(f"y has {len(y)} labels for {len(groups)} groups")
    for label in y:
        if label not in CLASS_INDEX:
            raise ValueError(f"unknown polarity label {label!r}")
    clones = {}
    out = []
    for group, label in zip(groups, y):
        key = id(group.sentence)
        if key not in clones:
            clones[key] = copy.deepcopy(group.sentence)
        record = clones[key]
        record.aspects[group.target_index].polarity = label
        out.append(AspectGroup(sentence=record, target_index=group.target_index,
                               neighbor_indices=group.neighbor_indices))
    return out


class AspectPolarityClassifier(ClassifierMixin, BaseEstimator):
    """Aspect polarity classifier with gated inter-aspect fusion.

    Parameters mirror the training configuration; ``embeddings`` may be an
    :class:`EmbeddingTable`, a path to a GloVe-format text file, or None to
    initialize every vector from the seeded unseen-token policy.
    """

    def __init__(self, variant="miad", domain="restaurant", gamma=2.0,
                 loss_weight=None, learning_rate=0.01, hidden_size=150,
                 batch_size=32, max_epochs=30, patience=5, dev_fraction=0.1,
                 seed=0, embeddings=None, include_target_gate=False):
        self.variant = variant
        self.domain = domain
        self.gamma = gamma
        self.loss_weight = loss_weight
        self.learning_rate = learning_rate
        self.hidden_size = hidden_size
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.dev_fraction = dev_fraction
        self.seed = seed
        self.embeddings = embeddings
        self.include_target_gate = include_target_gate

    def _make_config(self):
        return TrainConfig(
            domain=self.domain, variant=self.variant, gamma=self.gamma,
            loss_weight=self.loss_weight, learning_rate=self.learning_rate,
            hidden_size=self.hidden_size, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience,
            dev_fraction=self.dev_fraction, seed=self.seed,
            include_target_gate=self.include_target_gate)

    def _resolve_table(self, groups):
        if isinstance(self.embeddings, EmbeddingTable):
            return self.embeddings
        records = []
        seen = set()
        for group in groups:
            if id(group.sentence) not in seen:
                seen.add(id(group.sentence))
                records.append(group.sentence)
        if self.embeddings is None:
            return build_random_table(records, seed=self.seed)
        return build_embeddings(records, self.embeddings, seed=self.seed)

    def fit(self, X, y=None):
        groups = check_groups(X)
        if y is not None:
            groups = relabel_targets(groups, list(y))
        check_labels(groups)
        table = self._resolve_table(groups)
        result: TrainResult = train(self._make_config(), groups, table)
        self.params_ = result.params
        self.vocabulary_ = table.vocabulary
        self.train_result_ = result
        self.classes_ = np.asarray(CLASSES)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "This AspectPolarityClassifier instance is not fitted yet; "
                "call fit before predicting.")

    def predict_proba(self, X):
        self._check_fitted()
        groups = check_groups(X)
        check_labels(groups, require=False)
        probs = np.zeros((len(groups), len(CLASSES)), dtype=np.float64)
        positions = {}
        for i, group in enumerate(groups):
            positions.setdefault(id(group), []).append(i)
        variant = self._make_config().forward_variant
        for group, p in iter_group_probs(self.params_, variant, groups, self.vocabulary_):
            probs[positions[id(group)].pop(0)] = p
        return probs

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def score(self, X, y=None):
        """Accuracy against y, or against the groups' gold labels."""
        groups = check_groups(X)
        if y is None:
            y = [g.target.polarity for g in groups]
        predicted = self.predict(groups)
        return float(np.mean([p == g for p, g in zip(predicted, y)]))
