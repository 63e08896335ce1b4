"""Analytic training-latency model for the split execution.

Total per-window latency decomposes into computation (head forward on the
clients, body on the controller scaled by the client count, tail forward on
the clients) and communication (cut activations up, hidden states down,
over the shared uplink).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..model.network import forward_flops

FLOAT_BITS = 64


@dataclass(frozen=True)
class LatencyModel:
    """Compute capabilities, workloads, and link rate of the participants."""

    client_flops: float = 1e9        # per SA-pair device, FLOP/s
    server_flops: float = 1e10       # controller, FLOP/s
    computing_intensity: float = 1.0
    uplink_bps: float = 1e8
    n_clients: int = 4
    head_flops: float = 1e6          # per sample at the cut
    body_flops: float = 1e7          # per concatenated client sample
    tail_flops: float = 1e3
    up_bits: float = 64 * 64         # cut activation size per sample
    down_bits: float = 64 * 64

    def __post_init__(self):
        for name in ("client_flops", "server_flops", "computing_intensity",
                     "uplink_bps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")


def partition_workloads(cfg):
    """Per-sample FLOPs of head/body/tail and the cut sizes in bits.

    The body share is expressed per client sample so the server term
    n_clients * window * kappa * body_flops / server_flops reproduces the
    full stacked-batch workload.
    """
    m, s, d, h = cfg.n_series, cfg.window, cfg.d_embed, cfg.lstm_hidden
    head = 2 * s * d + d
    tail = 2 * h
    total = forward_flops(cfg)
    body = (total - m * (head + tail)) / m
    return {"head_flops": float(head), "body_flops": float(body),
            "tail_flops": float(tail), "up_bits": float(d * FLOAT_BITS),
            "down_bits": float(h * FLOAT_BITS)}


def latency_model_for(cfg, client_flops=1e9, server_flops=1e10,
                      computing_intensity=1.0, uplink_bps=1e8):
    w = partition_workloads(cfg)
    return LatencyModel(client_flops=client_flops, server_flops=server_flops,
                        computing_intensity=computing_intensity,
                        uplink_bps=uplink_bps, n_clients=cfg.n_series, **w)


def estimate_latency(model, window):
    """Per-phase and total split training latency for one length-window pass.

    Compute phases follow window * kappa * flops / rate (the body term is
    additionally scaled by the client count); transfer phases follow
    n_clients * window * bits / uplink_rate on the shared medium.
    """
    kappa = model.computing_intensity
    head = window * kappa * model.head_flops / model.client_flops
    body = model.n_clients * window * kappa * model.body_flops / model.server_flops
    tail = window * kappa * model.tail_flops / model.client_flops
    up = model.n_clients * window * model.up_bits / model.uplink_bps
    down = model.n_clients * window * model.down_bits / model.uplink_bps
    report = {
        "head_compute_s": head,
        "server_compute_s": body,
        "tail_compute_s": tail,
        "uplink_s": up,
        "downlink_s": down,
        "computation_s": head + body + tail,
        "communication_s": up + down,
    }
    report["total_s"] = report["computation_s"] + report["communication_s"]
    return report
