"""Pinball (quantile) loss for the upper-quantile threshold predictor."""

from __future__ import annotations

import numpy as np


def pinball_loss(pred, label, alpha):
    """Mean asymmetric loss for the (1 - alpha) quantile.

    Overprediction costs alpha per unit, underprediction 1 - alpha, so the
    minimizer of the mean is the empirical (1 - alpha) quantile.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    pred = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=float)
    diff = pred - label
    loss = np.where(diff >= 0, alpha * diff, (alpha - 1.0) * diff)
    return float(loss.mean())


def pinball_grad(pred, label, alpha):
    """Gradient of the mean pinball loss with respect to the predictions."""
    pred = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=float)
    g = np.where(pred >= label, alpha, alpha - 1.0)
    return g / pred.size
