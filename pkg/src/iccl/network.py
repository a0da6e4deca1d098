"""Small 1-D convolutional stack with hand-written backprop.

Inputs are ``(batch, N, in_channels)`` arrays: N waypoints, one channel per
CSI column. A ``3 x C`` kernel sliding over an ``N x C`` image with valid
padding is exactly a kernel-3 convolution over N with C input channels, and
after that first layer the image width is 1, so every later ``3 x 2`` or
``3 x 1`` kernel is a kernel-3 convolution as well.

Layer order: (conv, relu, maxpool) * (n_conv - 1), conv, relu, flatten,
dense, relu, dense. Parameters are a flat list
``[W1, b1, W2, b2, ..., Wd, bd, Wo, bo]`` where conv weights have shape
``(kernel * C_in, filters)`` and dense weights ``(fan_in, fan_out)``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidArgument


@dataclass(frozen=True)
class Architecture:
    n_waypoints: int
    in_channels: int = 2
    n_filters: int = 64
    kernel: int = 3
    pool: int = 2
    hidden: int = 64
    n_out: int = 1
    n_conv: int = 3

    def conv_lengths(self) -> list[int]:
        """Sequence length after each conv layer (before its pooling)."""
        lengths = []
        length = self.n_waypoints
        for c in range(self.n_conv):
            length = length - self.kernel + 1
            if length < 1:
                raise InvalidArgument(f"{self.n_waypoints} waypoints are too few for this stack")
            lengths.append(length)
            if c < self.n_conv - 1:
                length //= self.pool
        return lengths

    @property
    def flat_size(self) -> int:
        return self.conv_lengths()[-1] * self.n_filters

    def shape_trace(self) -> list[tuple[str, tuple[int, ...]]]:
        """Per-layer output shapes in image terms (height, width, channels)."""
        trace = [("input", (self.n_waypoints, self.in_channels, 1))]
        for c, length in enumerate(self.conv_lengths()):
            trace.append((f"conv{c + 1}", (length, 1, self.n_filters)))
            if c < self.n_conv - 1:
                trace.append((f"pool{c + 1}", (length // self.pool, 1, self.n_filters)))
        trace += [("flatten", (self.flat_size,)), ("dense", (self.hidden,)), ("output", (self.n_out,))]
        return trace

    def param_shapes(self) -> list[tuple[int, ...]]:
        shapes = []
        c_in = self.in_channels
        for _ in range(self.n_conv):
            shapes += [(self.kernel * c_in, self.n_filters), (self.n_filters,)]
            c_in = self.n_filters
        shapes += [(self.flat_size, self.hidden), (self.hidden,), (self.hidden, self.n_out), (self.n_out,)]
        return shapes

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes())


@dataclass
class Normalization:
    """CSI and target scaling baked into a trained network.

    Gains go to dB, are floored at ``db_floor`` and standardized with the
    scalar ``mean_db`` / ``std_db`` of the data the network was first
    trained on. Network outputs are multiplied by ``target_scale`` to get
    meters.
    """

    mean_db: float = 0.0
    std_db: float = 1.0
    db_floor: float = -150.0
    target_scale: float = 1.0

    def to_db(self, gains) -> np.ndarray:
        g = np.asarray(gains, dtype=float)
        floor = 10.0 ** (self.db_floor / 10.0)
        return 10.0 * np.log10(np.maximum(g, floor))

    def features(self, gains) -> np.ndarray:
        return (self.to_db(gains) - self.mean_db) / self.std_db

    @classmethod
    def fit(cls, gains, target_scale: float = 1.0, db_floor: float = -150.0) -> Normalization:
        tmp = cls(db_floor=db_floor)
        db = tmp.to_db(gains)
        std = float(db.std())
        return cls(float(db.mean()), std if std > 0 else 1.0, db_floor, float(target_scale))


def init_params(arch: Architecture, rng, zero: bool = False) -> list[np.ndarray]:
    """He-uniform weights for ReLU layers, LeCun-uniform for the output, zero biases."""
    rng = np.random.default_rng(rng)
    params = []
    shapes = arch.param_shapes()
    for k, shape in enumerate(shapes):
        if len(shape) == 1 or zero:
            params.append(np.zeros(shape))
            continue
        fan_in = shape[0]
        gain = 3.0 if k == len(shapes) - 2 else 6.0
        limit = np.sqrt(gain / fan_in)
        params.append(rng.uniform(-limit, limit, size=shape))
    return params


@dataclass
class ConvNet:
    arch: Architecture
    params: list[np.ndarray]
    norm: Normalization = field(default_factory=Normalization)
    kind: str = "iccl"

    def __post_init__(self):
        expected = self.arch.param_shapes()
        if len(self.params) != len(expected):
            raise InvalidArgument(f"expected {len(expected)} parameter blocks, got {len(self.params)}")
        for p, s in zip(self.params, expected):
            if p.shape != s:
                raise InvalidArgument(f"parameter block of shape {p.shape}, expected {s}")

    def copy(self) -> ConvNet:
        return ConvNet(self.arch, [p.copy() for p in self.params], Normalization(**asdict(self.norm)), self.kind)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.arch.n_params:
            raise InvalidArgument(f"expected {self.arch.n_params} parameters, got {flat.size}")
        offset = 0
        for k, s in enumerate(self.arch.param_shapes()):
            size = int(np.prod(s))
            self.params[k] = flat[offset:offset + size].reshape(s).copy()
            offset += size


# --- forward / backward ----------------------------------------------------------

def forward(arch: Architecture, params, x, keep: bool = False, dtype=np.float32):
    """Raw network output ``(batch, n_out)``; with ``keep`` also the backprop cache."""
    x = np.ascontiguousarray(x, dtype=dtype)
    if x.ndim != 3 or x.shape[1] != arch.n_waypoints or x.shape[2] != arch.in_channels:
        raise InvalidArgument(
            f"input of shape {x.shape}, expected (batch, {arch.n_waypoints}, {arch.in_channels})"
        )
    w = [np.asarray(p, dtype=dtype) for p in params]
    k, pool = arch.kernel, arch.pool
    cache = []
    h = x
    for c in range(arch.n_conv):
        cols = kernels.im2col(h, k)
        z = cols @ w[2 * c] + w[2 * c + 1]
        a = np.maximum(z, 0)
        arg = None
        if c < arch.n_conv - 1 and pool > 1:
            h_next, arg = kernels.maxpool_forward(a, pool)
        else:
            h_next = a
        if keep:
            cache.append((h.shape[1], cols, a, arg))
        h = h_next
    flat = h.reshape(len(h), -1)
    zd = flat @ w[-4] + w[-3]
    ad = np.maximum(zd, 0)
    out = ad @ w[-2] + w[-1]
    if keep:
        return out, (w, cache, flat, ad)
    return out


def backward(arch: Architecture, state, dout) -> list[np.ndarray]:
    """Gradients of ``sum(out * dout)`` with respect to every parameter block."""
    w, cache, flat, ad = state
    dout = np.asarray(dout, dtype=flat.dtype)
    k, pool, n_f = arch.kernel, arch.pool, arch.n_filters
    grads = [None] * len(w)
    grads[-2] = ad.T @ dout
    grads[-1] = dout.sum(axis=0)
    dzd = (dout @ w[-2].T) * (ad > 0)
    grads[-4] = flat.T @ dzd
    grads[-3] = dzd.sum(axis=0)
    dh = (dzd @ w[-4].T).reshape(len(flat), -1, n_f)
    for c in range(arch.n_conv - 1, -1, -1):
        in_len, cols, a, arg = cache[c]
        if arg is not None:
            dh = kernels.maxpool_backward(dh, arg, a.shape[1], pool)
        dz = dh * (a > 0)
        dz2 = dz.reshape(-1, dz.shape[-1])
        grads[2 * c] = cols.reshape(-1, cols.shape[-1]).T @ dz2
        grads[2 * c + 1] = dz2.sum(axis=0)
        if c > 0:
            dcols = dz @ w[2 * c].T
            dh = kernels.col2im(np.ascontiguousarray(dcols), k, in_len)
    return grads


# --- checkpoint file -----------------------------------------------------------
#
# Layout, all little-endian:
#   8 bytes   magic b"ICCLNET\0"
#   uint32    format version (1)
#   uint32    header length H in bytes
#   H bytes   UTF-8 JSON: {"kind", "architecture": {...}, "normalization": {...}, "n_params"}
#   n_params  float64 parameters, blocks in Architecture.param_shapes() order, C order

CKPT_MAGIC = b"ICCLNET\0"
CKPT_VERSION = 1
_CKPT_HEAD = struct.Struct("<8sII")


def save_checkpoint(path, net: ConvNet) -> None:
    header = json.dumps(
        {
            "kind": net.kind,
            "architecture": asdict(net.arch),
            "normalization": asdict(net.norm),
            "n_params": net.arch.n_params,
        },
        sort_keys=True,
    ).encode()
    blob = net.flat_params().astype("<f8").tobytes()
    Path(path).write_bytes(_CKPT_HEAD.pack(CKPT_MAGIC, CKPT_VERSION, len(header)) + header + blob)


def load_checkpoint(path) -> ConvNet:
    raw = Path(path).read_bytes()
    magic, version, h_len = _CKPT_HEAD.unpack_from(raw)
    if magic != CKPT_MAGIC:
        raise InvalidArgument(f"{path}: not an iccl checkpoint")
    if version != CKPT_VERSION:
        raise InvalidArgument(f"{path}: unsupported checkpoint version {version}")
    start = _CKPT_HEAD.size
    header = json.loads(raw[start:start + h_len].decode())
    arch = Architecture(**header["architecture"])
    flat = np.frombuffer(raw, dtype="<f8", offset=start + h_len)
    if flat.size != header["n_params"] or flat.size != arch.n_params:
        raise InvalidArgument(f"{path}: parameter blob size mismatch")
    net = ConvNet(arch, init_params(arch, 0, zero=True), Normalization(**header["normalization"]), header["kind"])
    net.set_flat_params(flat.astype(float))
    return net
