"""Tomographic power gains and noisy CSI measurements.

True gains follow a log-distance law plus a dB line integral through every
building the node-to-waypoint segment crosses::

    g = 10 ** ((G0 - 10 * k * log10(d) - sum_b a_b * len_b) / 10)

CSI is the squared magnitude of the least-squares channel estimate, which
for circularly symmetric noise can be drawn directly as
``|sqrt(g) + z|**2`` with ``z ~ CN(0, noise_power / pilot_energy)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .scene import Building, Scene, Trajectory, ground_to_3d, sample_ground_points


@dataclass(frozen=True)
class ChannelModel:
    reference_gain_db: float = -40.0
    pathloss_exponent: float = 2.0
    noise_power: float = 0.0  # sigma^2, linear watts
    tx_power_dbm: float = 30.0  # per pilot symbol
    n_pilot_symbols: int = 10

    def __post_init__(self):
        if not self.pathloss_exponent > 0:
            raise InvalidArgument("pathloss exponent must be positive")
        if not self.noise_power >= 0:
            raise InvalidArgument("noise power must be non-negative")
        if self.n_pilot_symbols < 1:
            raise InvalidArgument("need at least one pilot symbol")

    @property
    def pilot_energy(self) -> float:
        """``||x_n||^2`` in joule-equivalent linear units."""
        return self.n_pilot_symbols * 10.0 ** ((self.tx_power_dbm - 30.0) / 10.0)

    @property
    def estimate_noise_var(self) -> float:
        """Variance of the LS channel estimate error, ``sigma^2 / ||x||^2``."""
        return self.noise_power / self.pilot_energy

    def with_noise(self, noise_power: float) -> ChannelModel:
        return replace(self, noise_power=float(noise_power))

    def free_space_gain(self, distance) -> np.ndarray:
        d = np.asarray(distance, dtype=float)
        return 10.0 ** ((self.reference_gain_db - 10.0 * self.pathloss_exponent * np.log10(d)) / 10.0)


def watts_to_dbm(p):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p) + 30.0


def dbm_to_watts(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def noise_power_for_snr(model: ChannelModel, snr_db: float, reference_distance: float) -> float:
    """Noise power giving ``snr_db`` per CSI sample for an unobstructed link of ``reference_distance``.

    The harness uses the UAV altitude as the reference, i.e. the strongest
    gain any ground node can see.
    """
    g_ref = float(model.free_space_gain(reference_distance))
    return g_ref * model.pilot_energy / 10.0 ** (snr_db / 10.0)


def ray_box_interior_length(p0, p1, building: Building) -> float:
    """Length of the segment ``p0 -> p1`` inside the open box (faces excluded)."""
    lo = np.asarray([building.min_corner], dtype=float)
    hi = np.asarray([building.max_corner], dtype=float)
    p0 = np.asarray(p0, dtype=float).reshape(1, 3)
    p1 = np.asarray(p1, dtype=float).reshape(1, 3)
    return float(kernels.segment_box_lengths(p0, p1, lo, hi)[0, 0])


def gain_matrix(scene: Scene, model: ChannelModel, nodes, waypoints) -> np.ndarray:
    """True linear gains, shape (M, N), for nodes (M, 2|3) and waypoints (N, 3)."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if nodes.shape[1] == 2:
        nodes = ground_to_3d(nodes)
    waypoints = np.atleast_2d(np.asarray(waypoints, dtype=float))
    dist = np.linalg.norm(nodes[:, None, :] - waypoints[None, :, :], axis=2)
    if np.any(dist == 0):
        raise InvalidArgument("node coincides with a waypoint; gain is singular")
    lo, hi, att = scene.box_arrays()
    shadow_db = kernels.shadowing_loss_db(nodes, waypoints, lo, hi, att)
    gain_db = model.reference_gain_db - 10.0 * model.pathloss_exponent * np.log10(dist) - shadow_db
    return 10.0 ** (gain_db / 10.0)


def true_gain(scene: Scene, model: ChannelModel, node_pos, waypoint) -> float:
    return float(gain_matrix(scene, model, np.reshape(node_pos, (1, -1)), np.reshape(waypoint, (1, 3)))[0, 0])


def draw_measurement_noise(rng, shape) -> np.ndarray:
    """Standard normal pairs, shape ``(2, *shape)``, for the real and imaginary parts.

    Kept separate from :func:`apply_measurement_noise` so a sweep can reuse
    one draw across noise levels.
    """
    return np.random.default_rng(rng).standard_normal((2, *shape))


def apply_measurement_noise(gains, noise_var: float, normals) -> np.ndarray:
    """``|sqrt(g) + z|**2`` with ``z = sqrt(noise_var / 2) * (re + 1j * im)``."""
    gains = np.asarray(gains, dtype=float)
    if noise_var == 0:
        return gains.copy()
    s = np.sqrt(noise_var / 2.0)
    re = np.sqrt(gains) + s * normals[0]
    im = s * normals[1]
    return re * re + im * im


def measure_csi(scene: Scene, model: ChannelModel, trajectory: Trajectory, node_pos, rng) -> np.ndarray:
    """Noisy CSI vector (length N) of one node."""
    g = gain_matrix(scene, model, np.reshape(node_pos, (1, -1)), trajectory.waypoints)[0]
    return apply_measurement_noise(g, model.estimate_noise_var, draw_measurement_noise(rng, g.shape))


def measure_csi_matrix(gains, model: ChannelModel, rng) -> np.ndarray:
    gains = np.asarray(gains, dtype=float)
    return apply_measurement_noise(gains, model.estimate_noise_var, draw_measurement_noise(rng, gains.shape))


# --- explicit pilot path -------------------------------------------------------

def ls_channel_estimate(pilot, received) -> complex:
    """Least-squares channel coefficient ``x^H y / x^H x``."""
    x = np.asarray(pilot, dtype=complex)
    y = np.asarray(received, dtype=complex)
    energy = np.vdot(x, x).real
    if energy == 0:
        raise InvalidArgument("pilot sequence is all zeros")
    return complex(np.vdot(x, y) / energy)


def qpsk_pilot(model: ChannelModel, rng) -> np.ndarray:
    """Unit-modulus QPSK sequence scaled to the model's per-symbol power."""
    rng = np.random.default_rng(rng)
    amp = np.sqrt(model.pilot_energy / model.n_pilot_symbols)
    phase = rng.integers(0, 4, model.n_pilot_symbols) * (np.pi / 2) + np.pi / 4
    return amp * np.exp(1j * phase)


def simulate_pilot_csi(gain: float, model: ChannelModel, n_samples: int, rng) -> np.ndarray:
    """Power gain estimates obtained by transmitting pilots through the channel.

    Each sample draws a random channel phase and a fresh noise vector, forms
    ``y = h x + w`` and returns ``|x^H y / x^H x|**2``.
    """
    rng = np.random.default_rng(rng)
    x = qpsk_pilot(model, rng)
    phase = rng.uniform(-np.pi, np.pi, n_samples)
    h = np.sqrt(gain) * np.exp(1j * phase)
    s = np.sqrt(model.noise_power / 2.0)
    w = s * (rng.standard_normal((n_samples, x.size)) + 1j * rng.standard_normal((n_samples, x.size)))
    y = h[:, None] * x[None, :] + w
    h_hat = (y @ x.conj()) / np.vdot(x, x).real
    return np.abs(h_hat) ** 2


# --- datasets ------------------------------------------------------------------

@dataclass(frozen=True)
class CsiDataset:
    """CSI vectors (M, N) measured at known ground positions (M, 2)."""

    positions: np.ndarray
    gains: np.ndarray
    noise_power: float = 0.0
    scene_hash: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        g = np.asarray(self.gains, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise InvalidArgument("positions must be (M, 2)")
        if g.ndim != 2 or g.shape[0] != pos.shape[0]:
            raise InvalidArgument("gains must be (M, N) with one row per position")
        if np.any(g < 0):
            raise InvalidArgument("CSI gains must be non-negative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "gains", g)

    def __len__(self):
        return len(self.positions)

    @property
    def n_waypoints(self) -> int:
        return self.gains.shape[1]


def generate_dataset(scene: Scene, model: ChannelModel, trajectory: Trajectory, m: int, seed) -> CsiDataset:
    """Measure CSI at ``m`` uniformly drawn ground positions.

    ``seed`` is an int or a :class:`numpy.random.SeedSequence`.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    pos_seed, noise_seed = ss.spawn(2)
    pos = sample_ground_points(scene, m, np.random.default_rng(pos_seed))
    g = gain_matrix(scene, model, pos, trajectory.waypoints)
    csi = measure_csi_matrix(g, model, np.random.default_rng(noise_seed))
    return CsiDataset(pos, csi, model.noise_power, scene.digest())


CSV_TAG = "# iccl csi dataset v1"
BIN_MAGIC = b"ICCLCSI1"
_BIN_HEADER = struct.Struct("<8sII32sd")


def write_dataset_csv(path, ds: CsiDataset) -> None:
    n = ds.n_waypoints
    lines = [
        CSV_TAG,
        f"# n_waypoints = {n}",
        f"# n_nodes = {len(ds)}",
        f"# scene_sha256 = {ds.scene_hash}",
        f"# noise_power = {float(ds.noise_power)!r}",
        ",".join(["x", "y"] + [f"g{k}" for k in range(n)]),
    ]
    for p, g in zip(ds.positions, ds.gains):
        lines.append(",".join(repr(float(v)) for v in (*p, *g)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset_csv(path) -> CsiDataset:
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            if "=" in line:
                key, value = (s.strip() for s in line[1:].split("=", 1))
                header[key] = value
        elif line.startswith("x,"):
            continue
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    n = int(header.get("n_waypoints", 0))
    arr = np.array(rows, dtype=float).reshape(-1, 2 + n)
    if "n_nodes" in header and int(header["n_nodes"]) != len(arr):
        raise InvalidArgument(f"{path}: header promises {header['n_nodes']} rows, found {len(arr)}")
    return CsiDataset(arr[:, :2], arr[:, 2:], float(header.get("noise_power", 0.0)), header.get("scene_sha256", ""))


def write_dataset_bin(path, ds: CsiDataset) -> None:
    digest = bytes.fromhex(ds.scene_hash) if ds.scene_hash else b""
    head = _BIN_HEADER.pack(BIN_MAGIC, ds.n_waypoints, len(ds), digest.ljust(32, b"\0"), float(ds.noise_power))
    body = np.column_stack([ds.positions, ds.gains]).astype("<f8").tobytes()
    Path(path).write_bytes(head + body)


def read_dataset_bin(path) -> CsiDataset:
    raw = Path(path).read_bytes()
    magic, n, m, digest, noise = _BIN_HEADER.unpack_from(raw)
    if magic != BIN_MAGIC:
        raise InvalidArgument(f"{path}: not an iccl binary dataset")
    arr = np.frombuffer(raw, dtype="<f8", offset=_BIN_HEADER.size).reshape(m, 2 + n)
    scene_hash = digest.hex() if digest.strip(b"\0") else ""
    return CsiDataset(arr[:, :2].copy(), arr[:, 2:].copy(), noise, scene_hash)


def write_dataset(path, ds: CsiDataset) -> None:
    if str(path).endswith(".csv"):
        write_dataset_csv(path, ds)
    else:
        write_dataset_bin(path, ds)


def read_dataset(path) -> CsiDataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(BIN_MAGIC))
    return read_dataset_bin(path) if magic == BIN_MAGIC else read_dataset_csv(path)
