"""Parameter partitioning for the U-shaped split: per-client head (embedding
block) and tail (quantile-head block), shared body (encoders + LSTM)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model.network import param_names

BODY_PREFIXES = ("enc", "lstm")


@dataclass
class SplitPartition:
    """Disjoint parameter ownership across the split participants."""

    heads: list          # per client: {"w": [S x D], "b": [D]}
    body: dict           # encoder layers + LSTM tensors, centralized names
    tails: list          # per client: {"w": [H], "b": scalar array}
    cfg: object

    @property
    def n_clients(self):
        return len(self.heads)


def partition(params, cfg):
    """Split a centralized parameter dict; arrays are copied, not aliased."""
    heads = [{"w": params["embed.w"][m].copy(), "b": params["embed.b"][m].copy()}
             for m in range(cfg.n_series)]
    tails = [{"w": params["head.w"][m].copy(),
              "b": np.array(params["head.b"][m])}
             for m in range(cfg.n_series)]
    body = {k: v.copy() for k, v in params.items()
            if k.startswith(BODY_PREFIXES)}
    return SplitPartition(heads=heads, body=body, tails=tails, cfg=cfg)


def merge(part):
    """Reassemble the centralized parameter dict from a partition."""
    cfg = part.cfg
    params = {
        "embed.w": np.stack([h["w"] for h in part.heads]),
        "embed.b": np.stack([h["b"] for h in part.heads]),
        "head.w": np.stack([t["w"] for t in part.tails]),
        "head.b": np.array([float(t["b"]) for t in part.tails]),
    }
    params.update({k: v.copy() for k, v in part.body.items()})
    return {k: params[k] for k in param_names(cfg)}


def partition_param_counts(part):
    """(head, body, tail) parameter counts summed over clients."""
    head = sum(v.size for h in part.heads for v in h.values())
    body = sum(v.size for v in part.body.values())
    tail = sum(v.size for t in part.tails for v in t.values())
    return head, body, tail
