"""Bulk-synchronous U-shaped split execution.

Every forward/backward step evaluates exactly the operations of the
centralized network (the clients call the same per-series kernels, the
server the same body kernels), so split training from a partitioned
checkpoint reproduces centralized training bit-for-bit given the same seed
and data order.  Labels and raw windows never leave their client; only cut
activations and cut gradients cross the channel.
"""

from __future__ import annotations

import numpy as np

from ..model import layers
from ..model.losses import pinball_loss
from ..model.network import body_backward, body_forward
from ..model.optim import Adam, DropoutMasks
from ..model.train import batch_schedule
from .messages import KIND_ACTIVATION, KIND_GRADIENT, SplitMessage

SERVER = "server"


def client_name(index):
    return f"sa{index}"


class SplitClient:
    """One SA pair: embedding head, quantile tail, and the private data."""

    def __init__(self, index, head, tail, x_col, y_col, lr, n_total_series,
                 center_windows=True):
        self.index = index
        self.name = client_name(index)
        self.params = {"embed.w": head["w"], "embed.b": head["b"],
                       "head.w": tail["w"], "head.b": tail["b"]}
        self.x = x_col
        self.y = y_col
        self.n_total = n_total_series
        self.center_windows = center_windows
        self.opt = Adam(self.params, lr=lr)
        self._cache = None
        self._grads = None

    def head_forward(self, idx, masks):
        x_b = self.x[idx]
        level = None
        if self.center_windows:
            level = x_b.mean(axis=1)
            x_b = x_b - level[:, None]
        token = layers.embed_series(x_b, self.params["embed.w"],
                                    self.params["embed.b"])
        mask = masks.mask(f"embed/{self.index}", token.shape) if masks else None
        sent = token if mask is None else token * mask
        self._cache = {"x": x_b, "token": token, "mask": mask, "idx": idx,
                       "level": level}
        return sent

    def tail_step(self, h_m, alpha):
        """Forward the tail, evaluate the local pinball loss contribution,
        and return the gradient w.r.t. the received hidden state."""
        idx = self._cache["idx"]
        y_b = self.y[idx]
        pred = layers.head_series(h_m, self.params["head.w"],
                                  self.params["head.b"])
        if self._cache["level"] is not None:
            pred = pred + self._cache["level"]
        scale = pred.size * self.n_total
        dpred = np.where(pred >= y_b, alpha, alpha - 1.0) / scale
        self._grads = {
            "head.w": h_m.T @ dpred,
            "head.b": np.array(dpred.sum()),
        }
        loss = pinball_loss(pred, y_b, alpha) * pred.size / scale
        dh = np.outer(dpred, self.params["head.w"])
        return loss, dh

    def tail_predict(self, h_m, level=None):
        pred = layers.head_series(h_m, self.params["head.w"],
                                  self.params["head.b"])
        return pred if level is None else pred + level

    def head_backward(self, dtoken):
        token = self._cache["token"]
        mask = self._cache["mask"]
        if mask is not None:
            dtoken = dtoken * mask
        dpre = dtoken * (1.0 - token**2)
        self._grads["embed.w"] = self._cache["x"].T @ dpre
        self._grads["embed.b"] = dpre.sum(axis=0)

    def apply_update(self):
        self.opt.step(self.params, self._grads)
        self._grads = None


class SplitServer:
    """The sub-network controller: encoder stack and LSTM."""

    def __init__(self, body, cfg, lr):
        self.params = body
        self.cfg = cfg
        self.opt = Adam(self.params, lr=lr)
        self._cache = None
        self._grads = None

    def body_forward(self, tokens, masks):
        hs, cache = body_forward(self.params, self.cfg, tokens, masks)
        self._cache = cache
        return hs

    def body_backward(self, dhs):
        dtokens, self._grads = body_backward(self.params, self.cfg,
                                             self._cache, dhs)
        return dtokens

    def apply_update(self):
        self.opt.step(self.params, self._grads)
        self._grads = None


def build_participants(part, x, y, lr):
    """Instantiate clients (one per series, owning its data column) and the
    server from a SplitPartition plus the training tensors."""
    cfg = part.cfg
    clients = [SplitClient(m, part.heads[m], part.tails[m],
                           np.ascontiguousarray(x[:, :, m]), y[:, m].copy(),
                           lr, cfg.n_series,
                           center_windows=getattr(cfg, "center_windows", False))
               for m in range(cfg.n_series)]
    server = SplitServer(part.body, cfg, lr)
    return clients, server


def _gather(channel, dest, sources, kind):
    return [channel.recv(dest, src, kind).payload for src in sources]


def split_forward_batch(clients, server, channel, idx, masks, epoch, batch):
    """One forward sweep: head activations up, body, hidden states down.

    Returns the per-client hidden states (each client keeps its own copy)."""
    for cl in clients:
        token = cl.head_forward(idx, masks)
        channel.send(SplitMessage(KIND_ACTIVATION, cl.name, SERVER,
                                  epoch, batch, token))
    tokens = np.stack(_gather(channel, SERVER, [c.name for c in clients],
                              KIND_ACTIVATION), axis=1)
    hs = server.body_forward(tokens, masks)
    for m, cl in enumerate(clients):
        channel.send(SplitMessage(KIND_ACTIVATION, SERVER, cl.name,
                                  epoch, batch, hs[:, m]))
    return [channel.recv(cl.name, SERVER, KIND_ACTIVATION).payload
            for cl in clients]


def split_train_epoch(clients, server, channel, alpha, dropout, seed, epoch,
                      batch_size, n_instances=None):
    """One synchronous epoch of U-shaped split training.

    Per batch: M head activations up, one body pass, M hidden states down,
    M cut gradients up, one body backward, M cut gradients down, then every
    participant applies its local Adam step.  Returns the mean batch loss.
    """
    n = n_instances if n_instances is not None else clients[0].x.shape[0]
    losses = []
    for bi, idx in enumerate(batch_schedule(n, batch_size, seed, epoch)):
        masks = DropoutMasks(dropout, seed, epoch, bi)
        hidden = split_forward_batch(clients, server, channel, idx, masks,
                                     epoch, bi)
        batch_loss = 0.0
        for cl, h_m in zip(clients, hidden):
            loss_m, dh = cl.tail_step(h_m, alpha)
            batch_loss += loss_m
            channel.send(SplitMessage(KIND_GRADIENT, cl.name, SERVER,
                                      epoch, bi, dh))
        dhs = np.stack(_gather(channel, SERVER, [c.name for c in clients],
                               KIND_GRADIENT), axis=1)
        dtokens = server.body_backward(dhs)
        for m, cl in enumerate(clients):
            channel.send(SplitMessage(KIND_GRADIENT, SERVER, cl.name,
                                      epoch, bi, dtokens[:, m]))
        for cl in clients:
            cl.head_backward(channel.recv(cl.name, SERVER, KIND_GRADIENT).payload)
        server.apply_update()
        for cl in clients:
            cl.apply_update()
        losses.append(batch_loss)
    return float(np.mean(losses))


def split_train(part, x, y, train_cfg, alpha, dropout, channel):
    """Full split training run; returns (clients, server, loss_curve).

    Applies the same geometric learning-rate schedule as centralized
    training so the two stay step-for-step identical.
    """
    clients, server = build_participants(part, x, y, train_cfg.lr)
    decay = getattr(train_cfg, "lr_decay", 1.0)
    curve = []
    for epoch in range(train_cfg.epochs):
        if decay != 1.0 and train_cfg.epochs > 1:
            lr = train_cfg.lr * decay ** (epoch / (train_cfg.epochs - 1))
            server.opt.lr = lr
            for cl in clients:
                cl.opt.lr = lr
        curve.append(split_train_epoch(clients, server, channel, alpha,
                                       dropout, train_cfg.seed, epoch,
                                       train_cfg.batch_size))
    return clients, server, curve


def split_predict(clients, server, channel, x, batch_size=1024):
    """Inference through the split pipeline; x is [n x S x M] and every
    client reads only its own series column."""
    n = x.shape[0]
    out = np.empty((n, len(clients)))
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        levels = {}
        for cl in clients:
            x_b = np.ascontiguousarray(x[idx][:, :, cl.index])
            level = None
            if cl.center_windows:
                level = x_b.mean(axis=1)
                x_b = x_b - level[:, None]
            levels[cl.index] = level
            token = layers.embed_series(x_b, cl.params["embed.w"],
                                        cl.params["embed.b"])
            channel.send(SplitMessage(KIND_ACTIVATION, cl.name, SERVER,
                                      0, start, token))
        tokens = np.stack(_gather(channel, SERVER, [c.name for c in clients],
                                  KIND_ACTIVATION), axis=1)
        hs = server.body_forward(tokens, None)
        for m, cl in enumerate(clients):
            channel.send(SplitMessage(KIND_ACTIVATION, SERVER, cl.name,
                                      0, start, hs[:, m]))
        for m, cl in enumerate(clients):
            h_m = channel.recv(cl.name, SERVER, KIND_ACTIVATION).payload
            out[idx, m] = cl.tail_predict(h_m, levels[cl.index])
    return out
