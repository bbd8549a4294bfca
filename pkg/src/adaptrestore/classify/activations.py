"""Output activations."""

import numpy as np

# largest double below 1.0; keeps sigmoid outputs inside the open interval
_ONE_MINUS = np.nextafter(1.0, 0.0)


def sigmoid(z):
    """Logistic function, overflow-free for any finite input.

    Returns a float for scalar input, an array otherwise.  Outputs stay in
    the open interval ``(0, 1)``.
    """
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = np.minimum(out, _ONE_MINUS)
    out = np.maximum(out, np.finfo(np.float64).tiny)
    return float(out) if out.ndim == 0 else out


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_sigmoid_bce(z, y):
    """Elementwise binary cross-entropy computed from logits."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def log_softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
