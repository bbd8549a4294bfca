"""Scikit-learn style estimator wrapping :class:`ResidualHead` training."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import type_of_target
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import EmptyCorpus, EmptyRateSet
from ..synth import N_KINDS, stratified_indices
from .activations import sigmoid, softmax
from .head import ResidualHead
from .optim import OptimizerState, step


@dataclass
class Hyperparams:
    epochs: int = 35
    batch_size: int = 64
    optimizer: str = "adam"
    learning_rate: float = 0.001
    momentum: float = 0.9
    hidden: int = 64
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainingHistory:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)

    def append(self, epoch, train_loss, val_loss, val_accuracy):
        self.epoch.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.val_accuracy.append(val_accuracy)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for row in zip(self.epoch, self.train_loss, self.val_loss, self.val_accuracy):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def label_accuracy(proba, Y, threshold=0.5) -> float:
    """Argmax accuracy on single-label rows, exact-set match elsewhere."""
    proba = np.asarray(proba)
    Y = np.asarray(Y) > 0.5
    n_labels = Y.sum(axis=1)
    single = n_labels == 1
    correct = np.zeros(len(Y), dtype=bool)
    correct[single] = Y[single, :][np.arange(single.sum()), proba[single].argmax(axis=1)]
    other = ~single
    correct[other] = np.all((proba[other] >= threshold) == Y[other], axis=1)
    return float(correct.mean()) if len(Y) else float("nan")


def _indicator(y, n_outputs):
    if y is None:
        raise ValueError("ResidualHeadClassifier requires y to be passed, but the target y is None")
    y = np.asarray(y)
    if y.ndim == 1:
        if type_of_target(y) == "continuous":
            raise ValueError("Unknown label type: continuous; expected class indices")
        Y = np.zeros((len(y), n_outputs))
        idx = y.astype(int)
        if idx.min(initial=0) < 0 or idx.max(initial=0) >= n_outputs:
            raise ValueError(f"class labels must lie in [0, {n_outputs})")
        Y[np.arange(len(y)), idx] = 1.0
        return Y
    if y.ndim != 2 or y.shape[1] != n_outputs:
        raise ValueError(f"label matrix must have {n_outputs} columns")
    return (y > 0.5).astype(np.float64)


class ResidualHeadClassifier(ClassifierMixin, BaseEstimator):
    """Multi-label degradation classifier: 16 -> hidden -> residual block -> K.

    Parameters
    ----------
    hidden : int
        Width of the hidden layer and residual block.
    mode : {"sigmoid", "softmax"}
        Independent per-class probabilities (multi-label) or one
        distribution over classes.
    optimizer : {"adam", "sgd_momentum"}
    learning_rate : float
    momentum : float
        Only used by ``sgd_momentum`` (damped update).
    epochs, batch_size : int
    validation_fraction : float
        Share of the training rows held out (stratified by label set) to
        track validation loss/accuracy; ``0`` disables the hold-out.
    n_outputs : int
        Number of classes K.
    random_state : int
        Seeds initialization, the validation split and shuffling.

    Attributes
    ----------
    head_ : ResidualHead
    history_ : TrainingHistory
    classes_ : ndarray of shape (n_outputs,)
    """

    def __init__(
        self,
        hidden=64,
        mode="sigmoid",
        optimizer="adam",
        learning_rate=0.001,
        momentum=0.9,
        epochs=35,
        batch_size=64,
        validation_fraction=0.2,
        n_outputs=N_KINDS,
        random_state=0,
    ):
        self.hidden = hidden
        self.mode = mode
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.validation_fraction = validation_fraction
        self.n_outputs = n_outputs
        self.random_state = random_state

    @classmethod
    def from_head(cls, head: ResidualHead, mode="sigmoid", **params) -> "ResidualHeadClassifier":
        clf = cls(hidden=head.hidden, mode=mode, n_outputs=head.n_outputs, **params)
        clf.head_ = head
        clf.classes_ = np.arange(head.n_outputs)
        clf.n_features_in_ = head.n_features
        clf.history_ = TrainingHistory()
        return clf

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        if len(X) == 0:
            raise EmptyCorpus("no training samples")
        Y = _indicator(y, self.n_outputs)
        if len(Y) != len(X):
            raise ValueError("X and y have different lengths")
        if self.mode not in ("sigmoid", "softmax"):
            raise ValueError(f"unknown mode {self.mode!r}")
        seed = int(self.random_state)

        if self.validation_fraction and self.validation_fraction > 0:
            strata = [tuple(np.flatnonzero(row)) for row in Y]
            tr, va = stratified_indices(strata, self.validation_fraction, seed)
        else:
            tr, va = np.arange(len(X)), np.arange(0)
        Xt, Yt, Xv, Yv = X[tr], Y[tr], X[va], Y[va]

        head = ResidualHead.initialize(X.shape[1], self.hidden, self.n_outputs, seed)
        state = OptimizerState(kind=self.optimizer, lr=self.learning_rate, momentum=self.momentum)
        rng = np.random.default_rng([seed, 0x5F])
        history = TrainingHistory()
        params = head.params()
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(len(Xt))
            for start in range(0, len(order), self.batch_size):
                batch = order[start : start + self.batch_size]
                _, grads = head.loss_and_grads(Xt[batch], Yt[batch], self.mode)
                params = step(state, params, grads)
                head = head.with_params(params)
            train_loss = head.loss(Xt, Yt, self.mode)
            if len(Xv):
                val_loss = head.loss(Xv, Yv, self.mode)
                val_acc = label_accuracy(self._proba(head, Xv), Yv)
            else:
                val_loss, val_acc = float("nan"), float("nan")
            history.append(epoch, train_loss, val_loss, val_acc)

        self.head_ = head
        self.history_ = history
        self.optimizer_state_ = state
        self.classes_ = np.arange(self.n_outputs)
        self.n_features_in_ = X.shape[1]
        return self

    def _proba(self, head, X):
        z = head.logits(X)
        return sigmoid(z) if self.mode == "sigmoid" else softmax(z)

    def _check_X(self, X):
        check_is_fitted(self, "head_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} is expecting {self.n_features_in_} features as input"
            )
        return X

    def decision_function(self, X):
        X = self._check_X(X)
        return self.head_.logits(X)

    def predict_proba(self, X):
        X = self._check_X(X)
        return self._proba(self.head_, X)

    def predict(self, X):
        """Single-label view: index of the most probable class."""
        return self.predict_proba(X).argmax(axis=1)

    def predict_labels(self, X, threshold=0.85):
        """Multi-label view: indicator matrix of classes with probability >= threshold."""
        return (self.predict_proba(X) >= threshold).astype(int)

    def label_accuracy(self, X, Y) -> float:
        return label_accuracy(self.predict_proba(X), _indicator(Y, self.n_outputs))


def _xy(data, working_size=(256, 256)):
    from ..features import DegradationFeatures
    from ..synth import Corpus

    if isinstance(data, Corpus):
        if len(data) == 0:
            raise EmptyCorpus("corpus is empty")
        X = DegradationFeatures(working_size).transform([s.image for s in data.samples])
        return X, data.label_matrix()
    X, Y = data
    return np.asarray(X, dtype=np.float64), np.asarray(Y)


def _estimator(hyper: Hyperparams, mode: str) -> ResidualHeadClassifier:
    return ResidualHeadClassifier(
        hidden=hyper.hidden,
        mode=mode,
        optimizer=hyper.optimizer,
        learning_rate=hyper.learning_rate,
        momentum=hyper.momentum,
        epochs=hyper.epochs,
        batch_size=hyper.batch_size,
        validation_fraction=hyper.validation_fraction,
        random_state=hyper.seed,
    )


def train(data, hyper: Hyperparams | None = None, mode: str = "sigmoid"):
    """Train on a :class:`~adaptrestore.synth.Corpus` or an ``(X, Y)`` pair.

    Returns ``(head, history)``.
    """
    hyper = hyper or Hyperparams()
    X, Y = _xy(data)
    if len(X) == 0:
        raise EmptyCorpus("no training samples")
    clf = _estimator(hyper, mode).fit(X, Y)
    return clf.head_, clf.history_


@dataclass
class SweepRow:
    value: float
    val_accuracy: float
    val_loss: float


def _sweep(data, values, hyper, field_name, mode):
    values = sorted(set(float(v) for v in values))
    if not values:
        raise EmptyRateSet(f"no {field_name} values to sweep")
    X, Y = _xy(data)
    rows = []
    for v in values:
        clf = _estimator(replace(hyper, **{field_name: v}), mode).fit(X, Y)
        h = clf.history_
        rows.append(SweepRow(v, h.val_accuracy[-1], h.val_loss[-1]))
    # highest accuracy wins; ties go to the smallest value (list is ascending)
    best = max(rows, key=lambda r: (r.val_accuracy, -r.value))
    return best.value, rows


def lr_sweep(data, rates=(0.001, 0.003, 0.01), hyper: Hyperparams | None = None, mode="sigmoid"):
    """Train once per learning rate with a shared seed; return ``(best_rate, rows)``."""
    hyper = replace(hyper or Hyperparams(), optimizer="adam")
    return _sweep(data, rates, hyper, "learning_rate", mode)


def momentum_sweep(data, momenta=(0.9, 0.95, 0.98), hyper: Hyperparams | None = None, mode="sigmoid"):
    """Same protocol as :func:`lr_sweep` for the damped-momentum SGD optimizer."""
    hyper = replace(hyper or Hyperparams(), optimizer="sgd_momentum")
    return _sweep(data, momenta, hyper, "momentum", mode)
