"""Symmetric CSI-pair distance regressor.

The subnetwork ``f`` sees an ``N x 2`` image whose columns are the two nodes'
normalized CSI. The predicted distance is ``max(0, (f(a, b) + f(b, a)) / 2)``,
so swapping the nodes cannot change the answer and training only needs the
``i < j`` pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .network import Architecture, ConvNet, Normalization, backward, forward, init_params
from .propagation import CsiDataset
from .train import TrainConfig, fit

EVAL_CHUNK = 1024


@dataclass(frozen=True)
class PairDataset:
    """All ``i < j`` pairs of a CSI dataset with their ground-truth distances."""

    csi: CsiDataset

    @property
    def n_nodes(self) -> int:
        return len(self.csi)

    @property
    def n_pairs(self) -> int:
        m = self.n_nodes
        return m * (m - 1) // 2

    def pair_index(self):
        return np.triu_indices(self.n_nodes, k=1)

    def targets(self, i=None, j=None) -> np.ndarray:
        if i is None:
            i, j = self.pair_index()
        return np.linalg.norm(self.csi.positions[i] - self.csi.positions[j], axis=1)


def new_regressor(n_waypoints: int, rng, n_filters: int = 64, hidden: int = 64,
                  norm: Normalization | None = None, **arch_kw) -> ConvNet:
    arch = Architecture(n_waypoints, in_channels=2, n_filters=n_filters, hidden=hidden, n_out=1, **arch_kw)
    return ConvNet(arch, init_params(arch, rng), norm or Normalization(), kind="iccl")


def fit_normalization(dataset: CsiDataset, db_floor: float = -150.0) -> Normalization:
    """dB standardization from the CSI; output scale = mean pair distance."""
    pairs = PairDataset(dataset)
    scale = float(pairs.targets().mean()) if pairs.n_pairs else 1.0
    return Normalization.fit(dataset.gains, target_scale=scale, db_floor=db_floor)


def _check_len(net: ConvNet, csi) -> np.ndarray:
    csi = np.atleast_2d(np.asarray(csi, dtype=float))
    if csi.shape[-1] != net.arch.n_waypoints:
        raise InvalidArgument(f"CSI of length {csi.shape[-1]}, network expects {net.arch.n_waypoints}")
    return csi


def _canonical_order(fa, fb):
    """Per row, put the lexicographically smaller vector first.

    Makes ``pair(a, b)`` and ``pair(b, a)`` feed the network the identical
    batch, so symmetric outputs are bit-identical, not just equal in exact
    arithmetic.
    """
    diff = fa - fb
    nz = diff != 0
    first = nz.argmax(axis=1)
    swap = nz.any(axis=1) & (diff[np.arange(len(diff)), first] > 0)
    lo = np.where(swap[:, None], fb, fa)
    hi = np.where(swap[:, None], fa, fb)
    return lo, hi


def _both_orders(fa, fb):
    lo, hi = _canonical_order(fa, fb)
    return np.concatenate([np.stack([lo, hi], axis=-1), np.stack([hi, lo], axis=-1)])


def subnetwork_forward(net: ConvNet, csi_a, csi_b, dtype=np.float32) -> float:
    """``f(a, b)`` in meters for one ordered pair of raw CSI vectors."""
    fa = net.norm.features(_check_len(net, csi_a))
    fb = net.norm.features(_check_len(net, csi_b))
    x = np.stack([fa, fb], axis=-1)
    return float(forward(net.arch, net.params, x, dtype=dtype)[0, 0]) * net.norm.target_scale


def _pair_raw(net: ConvNet, fa, fb, dtype):
    """Unclamped symmetric prediction in meters for feature rows ``fa``, ``fb``."""
    b = len(fa)
    out = forward(net.arch, net.params, _both_orders(fa, fb), dtype=dtype)[:, 0].astype(float)
    return 0.5 * (out[:b] + out[b:]) * net.norm.target_scale


def predict_features(net: ConvNet, fa, fb, dtype=np.float32) -> np.ndarray:
    res = np.empty(len(fa))
    for s in range(0, len(fa), EVAL_CHUNK):
        res[s:s + EVAL_CHUNK] = _pair_raw(net, fa[s:s + EVAL_CHUNK], fb[s:s + EVAL_CHUNK], dtype)
    return np.maximum(res, 0.0)


def predict_pairs(net: ConvNet, csi_a, csi_b, dtype=np.float32) -> np.ndarray:
    """Distances (meters) for row-aligned batches of raw CSI vectors."""
    fa = net.norm.features(_check_len(net, csi_a))
    fb = net.norm.features(_check_len(net, csi_b))
    if fa.shape != fb.shape:
        raise InvalidArgument("CSI batches differ in shape")
    return predict_features(net, fa, fb, dtype)


def predict_distance(net: ConvNet, csi_a, csi_b, dtype=np.float32) -> float:
    return float(predict_pairs(net, csi_a, csi_b, dtype)[0])


def predict_cross(net: ConvNet, csi_rows, csi_cols, dtype=np.float32) -> np.ndarray:
    """Distance matrix ``D[r, c]`` between every row node and every column node."""
    fr = net.norm.features(_check_len(net, csi_rows))
    fc = net.norm.features(_check_len(net, csi_cols))
    r, c = np.meshgrid(np.arange(len(fr)), np.arange(len(fc)), indexing="ij")
    d = predict_features(net, fr[r.ravel()], fc[c.ravel()], dtype)
    return d.reshape(len(fr), len(fc))


def loss(net: ConvNet, dataset: PairDataset, dtype=np.float32) -> float:
    """Mean squared distance error over all ``i < j`` pairs, in m^2."""
    if dataset.n_pairs == 0:
        raise InvalidArgument("loss needs at least two nodes")
    i, j = dataset.pair_index()
    feats = net.norm.features(_check_len(net, dataset.csi.gains))
    pred = predict_features(net, feats[i], feats[j], dtype)
    return float(np.mean((pred - dataset.targets(i, j)) ** 2))


def batch_loss_and_grad(net: ConvNet, fa, fb, targets, dtype=np.float32, clamp: bool = True):
    """MSE on a batch of feature pairs and its gradient.

    ``clamp=False`` scores the symmetric output before the clamp at zero.
    Training uses that: once every output of a batch goes negative the
    clamped loss has zero gradient and the network never recovers.
    """
    b = len(fa)
    out, state = forward(net.arch, net.params, _both_orders(fa, fb), keep=True, dtype=dtype)
    out = out[:, 0].astype(float)
    s = net.norm.target_scale
    pre = 0.5 * (out[:b] + out[b:]) * s
    pred = np.maximum(pre, 0.0) if clamp else pre
    err = pred - targets
    d_pre = (2.0 / b) * err * (pre > 0) if clamp else (2.0 / b) * err
    d_raw = 0.5 * s * d_pre
    dout = np.concatenate([d_raw, d_raw])[:, None]
    grads = backward(net.arch, state, dout)
    return float(np.mean(err * err)), [g.astype(float) for g in grads]


def gradient(net: ConvNet, csi_a, csi_b, targets, dtype=np.float64, clamp: bool = True) -> list[np.ndarray]:
    """Exact gradient of the batch MSE for raw CSI pairs and target distances."""
    fa = net.norm.features(_check_len(net, csi_a))
    fb = net.norm.features(_check_len(net, csi_b))
    targets = np.asarray(targets, dtype=float)
    if len(fa) == 0:
        raise InvalidArgument("empty batch")
    return batch_loss_and_grad(net, fa, fb, targets, dtype, clamp)[1]


def train(net: ConvNet, dataset: PairDataset, config: TrainConfig, label: str = "iccl"):
    """Train ``net`` in place on all pairs; returns ``(net, per-epoch loss)``."""
    _check_len(net, dataset.csi.gains[:1])
    feats = net.norm.features(dataset.csi.gains)
    i_all, j_all = dataset.pair_index()
    t_all = dataset.targets(i_all, j_all)
    dtype = np.dtype(config.dtype)

    def loss_and_grad(idx):
        return batch_loss_and_grad(net, feats[i_all[idx]], feats[j_all[idx]], t_all[idx], dtype, clamp=False)

    trace = fit(net.params, dataset.n_pairs, loss_and_grad, config, label)
    return net, trace


def pretrain_then_finetune(pretrain: CsiDataset, finetune: CsiDataset, config: TrainConfig,
                           n_filters: int = 64, hidden: int = 64):
    """Random init, train on ``pretrain``, then continue on ``finetune`` at the finetune rate.

    Normalization constants come from the pretraining data and stay fixed.
    Returns ``(net, pretrain_trace, finetune_trace)``.
    """
    if pretrain.n_waypoints != finetune.n_waypoints:
        raise InvalidArgument(
            f"pretraining CSI has {pretrain.n_waypoints} waypoints, finetuning CSI {finetune.n_waypoints}"
        )
    norm = fit_normalization(pretrain, config.db_floor)
    net = new_regressor(pretrain.n_waypoints, config.seed, n_filters=n_filters, hidden=hidden, norm=norm)
    net.params[-1][:] = 1.0  # start at the mean-distance predictor
    _, pre_trace = train(net, PairDataset(pretrain), config, "iccl-pretrain")
    _, fine_trace = train(net, PairDataset(finetune), config.finetune(), "iccl-finetune")
    return net, pre_trace, fine_trace
