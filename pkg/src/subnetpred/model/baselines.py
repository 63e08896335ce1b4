"""Reference predictors: two-tap moving average and the Yule-Walker
(Wiener) one-step linear predictor with a Levinson-Durbin solve."""

from __future__ import annotations

import numpy as np


def moving_average_predict(series, t_indices, weights=(0.5, 0.5)):
    """Weighted two-tap prediction of series[t] from t-1 and t-2.

    series is 1-D; t_indices must all be >= 2.  Weights are normalized to
    sum to one.
    """
    s = np.asarray(series, dtype=float).ravel()
    t = np.asarray(t_indices, dtype=int)
    if np.any(t < 2):
        raise ValueError("need two history samples before every prediction point")
    w1, w2 = weights
    total = w1 + w2
    w1, w2 = w1 / total, w2 / total
    return w1 * s[t - 1] + w2 * s[t - 2]


def autocorrelation(x, max_lag, demean=True):
    """Unbiased sample (auto)correlation r_0..r_max_lag of a window.

    With demean=False this is the raw second-moment sequence -- the
    "sample interference correlation" convention, where the mean level
    stays inside the normal equations instead of being removed first.
    The biased (1/n) normalization tapers the sequence, keeping it a valid
    autocorrelation for the Levinson-Durbin recursion.
    """
    x = np.asarray(x, dtype=float)
    if demean:
        x = x - x.mean()
    n = x.size
    r = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        r[k] = (x[:n - k] * x[k:]).sum() / n
    return r


def levinson_durbin(r, order, ridge=1e-8):
    """Solve the Yule-Walker normal equations by Levinson-Durbin recursion.

    Returns the forward prediction coefficients a (length order) with
    prediction x[t] ~= sum a_k x[t-k].  A relative ridge on r[0] keeps the
    recursion stable for (near-)degenerate autocorrelations.
    """
    r = np.asarray(r, dtype=float).copy()
    if r.size < order + 1:
        raise ValueError("need order+1 autocorrelation lags")
    r[0] += ridge * max(r[0], 1.0)
    a = np.zeros(order)
    err = r[0]
    for i in range(order):
        acc = r[i + 1] - np.dot(a[:i], r[i:0:-1])
        k = acc / err
        # |k| >= 1 means the sequence is no longer a valid autocorrelation
        # (possible for unbiased estimates); keep the stable partial model
        if not np.isfinite(k) or abs(k) >= 1.0:
            break
        a_new = a.copy()
        a_new[i] = k
        a_new[:i] = a[:i] - k * a[:i][::-1]
        a = a_new
        err *= (1.0 - k * k)
        if err <= 0:
            break
    return a


def wiener_predict(series, t_indices, order, history=None):
    """One-step linear prediction with coefficients refit per target point.

    For each t the coefficients solve the Yule-Walker normal equations on
    the raw sample correlation (no mean removal, the sample interference
    correlation convention) of the trailing history window; the prediction
    is the plain linear combination of the last `order` samples.  The
    default history spans a few stationarity intervals (4*(order+1)
    samples): beyond the interval that sets the order, sample correlations
    mix regimes and stop being trustworthy.

    Because the mean is not removed, the solution is sensitive to the
    series' reference level (the coefficients sum to slightly less than
    one on a near-degenerate correlation sequence) -- the known weakness
    of this predictor.
    """
    s = np.asarray(series, dtype=float).ravel()
    t_indices = np.asarray(t_indices, dtype=int)
    hist = history if history is not None else 4 * (order + 1)
    if np.any(t_indices < order + 1):
        raise ValueError("need order+1 history samples before every prediction point")
    preds = np.empty(t_indices.size)
    for j, t in enumerate(t_indices):
        lo = max(t - hist, 0)
        window = s[lo:t]
        if window.var() == 0.0:
            preds[j] = window[-1]      # degenerate history: hold the constant
            continue
        r = autocorrelation(window, order, demean=False)
        a = levinson_durbin(r, order)
        lags = s[t - 1:t - order - 1:-1]
        preds[j] = float(np.dot(a, lags))
    return preds
