"""The residual classification head and its binary file format.

Network (row-vector convention, ``f`` has 16 entries)::

    h_in = f @ W_in + b_in
    h    = relu(h_in @ W_res + b_res) + h_in      # residual block, skip around R
    z    = h @ W_out + b_out                       # K logits
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import BadMagic, TruncatedFile, VersionMismatch
from .activations import log_sigmoid_bce, log_softmax, sigmoid, softmax

MAGIC = b"ADRM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")

PARAM_NAMES = ("W_in", "b_in", "W_res", "b_res", "W_out", "b_out")


@dataclass(frozen=True)
class ProbabilityVector:
    """Per-class probabilities plus the logits they came from."""

    p: np.ndarray
    mode: str = "sigmoid"
    logits: np.ndarray | None = None

    def __len__(self):
        return len(self.p)


@dataclass
class ResidualHead:
    W_in: np.ndarray
    b_in: np.ndarray
    W_res: np.ndarray
    b_res: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    @property
    def n_features(self) -> int:
        return self.W_in.shape[0]

    @property
    def hidden(self) -> int:
        return self.W_in.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.W_out.shape[1]

    @classmethod
    def initialize(cls, n_features=16, hidden=32, n_outputs=7, seed=0) -> "ResidualHead":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-a, a, (fan_in, fan_out))

        return cls(
            glorot(n_features, hidden),
            np.zeros(hidden),
            glorot(hidden, hidden),
            np.zeros(hidden),
            glorot(hidden, n_outputs),
            np.zeros(n_outputs),
        )

    @classmethod
    def zeros(cls, n_features=16, hidden=32, n_outputs=7) -> "ResidualHead":
        return cls(
            np.zeros((n_features, hidden)),
            np.zeros(hidden),
            np.zeros((hidden, hidden)),
            np.zeros(hidden),
            np.zeros((hidden, n_outputs)),
            np.zeros(n_outputs),
        )

    def params(self) -> list:
        return [getattr(self, n) for n in PARAM_NAMES]

    def with_params(self, params) -> "ResidualHead":
        return ResidualHead(*[np.asarray(p, dtype=np.float64) for p in params])

    def copy(self) -> "ResidualHead":
        return self.with_params([p.copy() for p in self.params()])

    # -- forward / backward ---------------------------------------------------

    def _hidden(self, X):
        h_in = X @ self.W_in + self.b_in
        pre = h_in @ self.W_res + self.b_res
        h = np.maximum(pre, 0.0) + h_in
        return h_in, pre, h

    def logits(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self._hidden(X)[2] @ self.W_out + self.b_out

    def loss_and_grads(self, X, Y, mode="sigmoid"):
        """Mean loss over the batch and exact gradients for every parameter.

        ``sigmoid``: binary cross-entropy averaged over samples and classes.
        ``softmax``: categorical cross-entropy averaged over samples; rows of
        ``Y`` are normalized to sum to one (empty rows become uniform).
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        n, k = Y.shape
        h_in, pre, h = self._hidden(X)
        z = h @ self.W_out + self.b_out
        if mode == "sigmoid":
            loss = float(np.mean(log_sigmoid_bce(z, Y)))
            dz = (sigmoid(z) - Y) / (n * k)
        elif mode == "softmax":
            T = _soft_targets(Y)
            loss = float(-np.mean(np.sum(T * log_softmax(z), axis=1)))
            dz = (softmax(z) - T) / n
        else:
            raise ValueError(f"unknown mode {mode!r}")
        dW_out = h.T @ dz
        db_out = dz.sum(axis=0)
        dh = dz @ self.W_out.T
        dpre = dh * (pre > 0.0)
        dW_res = h_in.T @ dpre
        db_res = dpre.sum(axis=0)
        dh_in = dh + dpre @ self.W_res.T
        dW_in = X.T @ dh_in
        db_in = dh_in.sum(axis=0)
        return loss, [dW_in, db_in, dW_res, db_res, dW_out, db_out]

    def loss(self, X, Y, mode="sigmoid") -> float:
        z = self.logits(X)
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if mode == "sigmoid":
            return float(np.mean(log_sigmoid_bce(z, Y)))
        return float(-np.mean(np.sum(_soft_targets(Y) * log_softmax(z), axis=1)))


def _soft_targets(Y):
    s = Y.sum(axis=1, keepdims=True)
    uniform = np.full_like(Y, 1.0 / Y.shape[1])
    return np.where(s > 0, Y / np.where(s > 0, s, 1.0), uniform)


def forward(model: ResidualHead, features, mode="sigmoid"):
    """Logits and probabilities for one 16-slot descriptor."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape != (model.n_features,):
        raise ValueError(f"expected {model.n_features} features, got shape {f.shape}")
    z = model.logits(f)[0]
    if mode == "sigmoid":
        p = sigmoid(z)
    elif mode == "softmax":
        p = softmax(z)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return z, ProbabilityVector(p, mode, z)


# -- persistence ---------------------------------------------------------------


def save_model(model: ResidualHead, path) -> None:
    """Write ``ADRM`` | version | H | K (little-endian uint32) then float64 weights."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, model.hidden, model.n_outputs)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params())
    Path(path).write_bytes(header + body)


def load_model(path, n_features: int = 16) -> ResidualHead:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"{path}: not a model file (magic {data[:4]!r})")
    if len(data) < _HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, version, hidden, n_out = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    shapes = [(n_features, hidden), (hidden,), (hidden, hidden), (hidden,), (hidden, n_out), (n_out,)]
    sizes = [int(np.prod(s)) for s in shapes]
    need = _HEADER.size + 8 * sum(sizes)
    if len(data) < need:
        raise TruncatedFile(f"{path}: {len(data)} bytes, expected {need}")
    flat = np.frombuffer(data, dtype="<f8", count=sum(sizes), offset=_HEADER.size).astype(np.float64)
    params, pos = [], 0
    for shape, size in zip(shapes, sizes):
        params.append(flat[pos : pos + size].reshape(shape).copy())
        pos += size
    return ResidualHead(*params)
