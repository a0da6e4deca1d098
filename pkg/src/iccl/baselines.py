"""Fingerprinting baselines.

DFPL returns the position of the stored CSI vector closest to the query.
NFPL regresses a position straight from one CSI vector with the same conv
stack as the distance regressor, fed an ``N x 1`` image and ending in two
output units.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .network import Architecture, ConvNet, Normalization, backward, forward, init_params
from .propagation import CsiDataset
from .train import TrainConfig, fit


@dataclass(frozen=True)
class FingerprintStore:
    positions: np.ndarray
    features: np.ndarray
    norm: Normalization | None  # None: compare plain linear gains

    @classmethod
    def build(cls, dataset: CsiDataset, raw: bool = False, db_floor: float = -150.0) -> FingerprintStore:
        if len(dataset) == 0:
            raise InvalidArgument("fingerprint store needs at least one record")
        norm = None if raw else Normalization.fit(dataset.gains, db_floor=db_floor)
        feats = dataset.gains.copy() if raw else norm.features(dataset.gains)
        return cls(dataset.positions.copy(), feats, norm)

    @property
    def n_waypoints(self) -> int:
        return self.features.shape[1]

    def represent(self, csi) -> np.ndarray:
        csi = np.atleast_2d(np.asarray(csi, dtype=float))
        if csi.shape[1] != self.n_waypoints:
            raise InvalidArgument(f"query CSI of length {csi.shape[1]}, store holds length {self.n_waypoints}")
        return csi.copy() if self.norm is None else self.norm.features(csi)


def dfpl_locate_many(store: FingerprintStore, queries) -> np.ndarray:
    """Nearest stored record per query (ties go to the lowest index)."""
    idx = kernels.nearest_rows(store.features, store.represent(queries))
    return store.positions[idx]


def dfpl_locate(store: FingerprintStore, query) -> np.ndarray:
    return dfpl_locate_many(store, query)[0]


# --- NFPL ---------------------------------------------------------------------

def new_nfpl(n_waypoints: int, rng, norm: Normalization | None = None, n_filters: int = 64, hidden: int = 64,
             **arch_kw) -> ConvNet:
    arch = Architecture(n_waypoints, in_channels=1, n_filters=n_filters, hidden=hidden, n_out=2, **arch_kw)
    return ConvNet(arch, init_params(arch, rng), norm or Normalization(), kind="nfpl")


def fit_nfpl_normalization(dataset: CsiDataset, db_floor: float = -150.0) -> Normalization:
    scale = float(np.abs(dataset.positions).max()) or 1.0
    return Normalization.fit(dataset.gains, target_scale=scale, db_floor=db_floor)


def _features(net: ConvNet, csi) -> np.ndarray:
    csi = np.atleast_2d(np.asarray(csi, dtype=float))
    if csi.shape[1] != net.arch.n_waypoints:
        raise InvalidArgument(f"CSI of length {csi.shape[1]}, network expects {net.arch.n_waypoints}")
    return net.norm.features(csi)[:, :, None]


def nfpl_locate_many(net: ConvNet, queries, dtype=np.float32) -> np.ndarray:
    x = _features(net, queries)
    return forward(net.arch, net.params, x, dtype=dtype).astype(float) * net.norm.target_scale


def nfpl_locate(net: ConvNet, query, dtype=np.float32) -> np.ndarray:
    return nfpl_locate_many(net, query, dtype)[0]


def nfpl_batch_loss_and_grad(net: ConvNet, x, positions, dtype=np.float32):
    """Mean squared position error ``||p_hat - p||^2`` and its gradient."""
    out, state = forward(net.arch, net.params, x, keep=True, dtype=dtype)
    s = net.norm.target_scale
    err = out.astype(float) * s - positions
    dout = (2.0 / len(x)) * s * err
    grads = backward(net.arch, state, dout)
    return float(np.mean(np.sum(err * err, axis=1))), [g.astype(float) for g in grads]


def nfpl_train(dataset: CsiDataset, config: TrainConfig, net: ConvNet | None = None, label: str = "nfpl"):
    """Train NFPL on ``dataset`` (fresh network unless ``net`` is given).

    Returns ``(net, per-epoch loss)``.
    """
    if len(dataset) == 0:
        raise InvalidArgument("NFPL needs a non-empty dataset")
    if net is None:
        net = new_nfpl(dataset.n_waypoints, config.seed, fit_nfpl_normalization(dataset, config.db_floor))
        net.params[-1][:] = dataset.positions.mean(axis=0) / net.norm.target_scale
    x = _features(net, dataset.gains)
    pos = dataset.positions
    dtype = np.dtype(config.dtype)
    trace = fit(net.params, len(dataset), lambda idx: nfpl_batch_loss_and_grad(net, x[idx], pos[idx], dtype),
                config, label)
    return net, trace


def nfpl_pretrain_then_finetune(pretrain: CsiDataset, finetune: CsiDataset, config: TrainConfig):
    if pretrain.n_waypoints != finetune.n_waypoints:
        raise InvalidArgument("pretraining and finetuning CSI differ in length")
    net, pre = nfpl_train(pretrain, config, label="nfpl-pretrain")
    _, fine = nfpl_train(finetune, config.finetune(), net=net, label="nfpl-finetune")
    return net, pre, fine
