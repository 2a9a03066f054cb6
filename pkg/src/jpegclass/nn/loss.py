"""Softmax and the cross-entropy loss used by every method."""

from __future__ import annotations

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_cross_entropy(logits: np.ndarray, label: int):
    """Returns (loss, grad wrt logits).

    Max-subtraction stabilized; grad is softmax(logits) - onehot(label),
    computed in f64 and cast back to the logits dtype.
    """
    p = softmax(logits)
    loss = -float(np.log(max(p[label], 1e-300)))
    grad = p.copy()
    grad[label] -= 1.0
    return loss, grad.astype(logits.dtype)
