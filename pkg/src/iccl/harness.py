"""Monte-Carlo evaluation of ICCL against the fingerprinting baselines.

Every realization draws fresh test nodes and fresh measurement noise from a
stream derived from the master seed and the realization index, so all
algorithms, anchor counts and noise levels see paired draws. The noise
normals are drawn once per realization and rescaled per noise level.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from . import baselines, multilateration, propagation, regressor
from .errors import DegenerateGeometry, InvalidArgument
from .network import ConvNet
from .propagation import ChannelModel, CsiDataset
from .scene import (
    DEFAULT_TRAJECTORY_CENTER,
    DEFAULT_TRAJECTORY_RADIUS,
    Scene,
    Trajectory,
    build_circular_trajectory,
    generate_random_scene,
    load_scene,
    load_trajectory,
    sample_ground_points,
)
from .train import TrainConfig

log = logging.getLogger(__name__)

# "iccl-ls" is ICCL without the Gauss-Newton polish (linearized solve only);
# "dfpl-raw" matches fingerprints on plain linear gains instead of standardized dB
ALGORITHMS = ("iccl", "iccl-ls", "dfpl", "dfpl-raw", "nfpl")
MODEL_OF = {"iccl": "iccl", "iccl-ls": "iccl", "dfpl": "store", "dfpl-raw": "store_raw", "nfpl": "nfpl"}
CSV_COLUMNS = ("algorithm", "m_a", "noise_power_dbm", "rmse_m", "stderr_m", "n_realizations", "failure_rate")
DEFAULT_SNR_DB = tuple(float(v) for v in range(40, -1, -5))


@dataclass(frozen=True)
class ExperimentConfig:
    scene_seed: int = 1
    pretrain_scene_seed: int = 2
    scene_file: str | None = None
    trajectory_file: str | None = None
    trajectory_center: tuple[float, float, float] = DEFAULT_TRAJECTORY_CENTER
    trajectory_radius: float = DEFAULT_TRAJECTORY_RADIUS
    n_waypoints: int = 128
    train_positions: int = 200
    pretrain_positions: int = 1000
    n_nodes: int = 100
    anchor_counts: tuple[int, ...] = (3, 5, 7, 10, 20)
    noise_anchor_count: int = 20
    # test noise levels as per-sample SNR (dB) of an unobstructed link at the UAV altitude
    snr_db: tuple[float, ...] = DEFAULT_SNR_DB
    n_realizations: int = 100
    seed: int = 0
    data_seed: int = 10
    algorithms: tuple[str, ...] = ("iccl", "iccl-ls", "dfpl", "dfpl-raw", "nfpl")
    channel: ChannelModel = field(default_factory=ChannelModel)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.n_realizations < 1:
            raise InvalidArgument("need at least one Monte-Carlo realization")
        if not self.anchor_counts or not self.snr_db:
            raise InvalidArgument("anchor and noise sweeps must be non-empty")
        if min(self.anchor_counts) < 3 or self.noise_anchor_count < 3:
            raise InvalidArgument("every anchor count must be >= 3")
        if self.n_nodes <= max(max(self.anchor_counts), self.noise_anchor_count):
            raise InvalidArgument("n_nodes must exceed the largest anchor count")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise InvalidArgument(f"unknown algorithms {sorted(unknown)}")

    def trajectory(self) -> Trajectory:
        if self.trajectory_file:
            return load_trajectory(self.trajectory_file)
        return build_circular_trajectory(self.trajectory_center, self.trajectory_radius, self.n_waypoints)

    def scene(self) -> Scene:
        if self.scene_file:
            return load_scene(self.scene_file)
        return generate_random_scene(seed=self.scene_seed)

    def pretrain_scene(self) -> Scene:
        return generate_random_scene(seed=self.pretrain_scene_seed)

    def noise_power(self, snr_db: float) -> float:
        altitude = float(self.trajectory().waypoints[:, 2].min())
        return propagation.noise_power_for_snr(self.channel, snr_db, altitude)


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    m_a: int
    noise_power_dbm: float
    rmse_m: float
    stderr_m: float
    n_realizations: int
    failure_rate: float


@dataclass
class Models:
    """Everything evaluation needs: the fitted learners and the DFPL store."""

    iccl: ConvNet | None = None
    nfpl: ConvNet | None = None
    store: baselines.FingerprintStore | None = None
    store_raw: baselines.FingerprintStore | None = None
    traces: dict = field(default_factory=dict)


def make_datasets(config: ExperimentConfig):
    """Noise-free training data in the test scene and pretraining data in a second scene."""
    traj = config.trajectory()
    clean = config.channel.with_noise(0.0)
    ss = np.random.SeedSequence(config.data_seed)
    s_train, s_pre = ss.spawn(2)
    train = propagation.generate_dataset(config.scene(), clean, traj, config.train_positions, s_train)
    pre = propagation.generate_dataset(config.pretrain_scene(), clean, traj, config.pretrain_positions, s_pre)
    return train, pre


def prepare_models(config: ExperimentConfig, train: CsiDataset | None = None,
                   pretrain: CsiDataset | None = None) -> Models:
    if train is None or pretrain is None:
        train, pretrain = make_datasets(config)
    models = Models()
    add_fingerprints(models, train, config.algorithms, config.train.db_floor)
    if {"iccl", "iccl-ls"} & set(config.algorithms):
        net, pre, fine = regressor.pretrain_then_finetune(pretrain, train, config.train)
        models.iccl = net
        models.traces["iccl"] = (pre, fine)
    if "nfpl" in config.algorithms:
        net, pre, fine = baselines.nfpl_pretrain_then_finetune(pretrain, train, config.train)
        models.nfpl = net
        models.traces["nfpl"] = (pre, fine)
    return models


def add_fingerprints(models: Models, dataset: CsiDataset, algorithms, db_floor: float = -150.0) -> None:
    if "dfpl" in algorithms:
        models.store = baselines.FingerprintStore.build(dataset, db_floor=db_floor)
    if "dfpl-raw" in algorithms:
        models.store_raw = baselines.FingerprintStore.build(dataset, raw=True)


def rmse(estimates, truths) -> float:
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tru = np.asarray(truths, dtype=float).reshape(-1, 2)
    if len(est) != len(tru):
        raise InvalidArgument(f"{len(est)} estimates for {len(tru)} true positions")
    if len(est) == 0:
        raise InvalidArgument("rmse of an empty set")
    return float(np.sqrt(np.mean(np.sum((est - tru) ** 2, axis=1))))


def realization_seeds(master_seed: int, n: int):
    """Per-realization ``(node_seed, noise_seed)`` pairs derived from the master seed."""
    return [tuple(child.spawn(2)) for child in np.random.SeedSequence(master_seed).spawn(n)]


def _summarize(algorithm, m_a, noise_dbm, mses, failures, total) -> SweepRow:
    mses = np.asarray(mses, dtype=float)
    n_ok = len(mses)
    if n_ok == 0:
        value, err = math.nan, math.nan
    else:
        mean = float(mses.mean())
        value = math.sqrt(mean)
        if n_ok > 1 and value > 0:
            # delta method on sqrt of the mean per-realization MSE
            err = float(mses.std(ddof=1) / math.sqrt(n_ok) / (2.0 * value))
        else:
            err = 0.0
    return SweepRow(algorithm, int(m_a), float(noise_dbm), value, err, n_ok, failures / total)


def _one_realization(config: ExperimentConfig, models: Models, algorithms, anchor_counts, snr_db, seeds):
    """Per-(algorithm, m_a, noise index) MSE for one realization; None marks a failure."""
    node_seed, noise_seed = seeds
    scene = config.scene()
    traj = config.trajectory()
    cm = config.channel
    max_a = max(anchor_counts)
    pos = sample_ground_points(scene, config.n_nodes, np.random.default_rng(node_seed))
    gains = propagation.gain_matrix(scene, cm, pos, traj.waypoints)
    normals = propagation.draw_measurement_noise(np.random.default_rng(noise_seed), gains.shape)
    out = {}
    for k, snr in enumerate(snr_db):
        csi = propagation.apply_measurement_noise(gains, config.noise_power(snr) / cm.pilot_energy, normals)
        dist = None
        for alg in algorithms:
            if alg in ("iccl", "iccl-ls"):
                if dist is None:
                    dist = regressor.predict_cross(models.iccl, csi[:max_a], csi)
                for m in anchor_counts:
                    try:
                        est = multilateration.locate(pos[:m], dist[:m, m:], iterative=alg == "iccl")
                    except DegenerateGeometry:
                        out[(alg, m, k)] = None
                        continue
                    out[(alg, m, k)] = float(np.mean(np.sum((est - pos[m:]) ** 2, axis=1)))
                continue
            if alg in ("dfpl", "dfpl-raw"):
                est = baselines.dfpl_locate_many(getattr(models, MODEL_OF[alg]), csi)
            else:
                est = baselines.nfpl_locate_many(models.nfpl, csi)
            sq = np.sum((est - pos) ** 2, axis=1)
            for m in anchor_counts:
                out[(alg, m, k)] = float(np.mean(sq[m:]))
    return out


def evaluate(config: ExperimentConfig, models: Models, algorithms, anchor_counts, snr_db,
             workers: int = 1) -> list[SweepRow]:
    """RMSE for every (algorithm, anchor count, noise level) on the shared realization schedule.

    Anchors are the first ``m_a`` test nodes; the rest are the unknowns
    every algorithm is scored on. A realization whose anchors are
    collinear is dropped and counted in ``failure_rate``. With
    ``workers > 1`` realizations run in separate processes; the result
    does not depend on the worker count.
    """
    anchor_counts = tuple(anchor_counts)
    snr_db = tuple(snr_db)
    algorithms = tuple(algorithms)
    for alg in algorithms:
        if alg not in ALGORITHMS:
            raise InvalidArgument(f"unknown algorithm {alg!r}")
        if getattr(models, MODEL_OF[alg]) is None:
            raise InvalidArgument(f"no trained model for {alg}")

    seeds = realization_seeds(config.seed, config.n_realizations)
    job = partial(_one_realization, config, models, algorithms, anchor_counts, snr_db)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            per_real = list(pool.map(job, seeds))
    else:
        per_real = []
        for r, s in enumerate(seeds):
            per_real.append(job(s))
            if (r + 1) % 10 == 0:
                log.info("realization %d/%d", r + 1, config.n_realizations)

    noise_dbm = [float(propagation.watts_to_dbm(config.noise_power(s))) for s in snr_db]
    rows = []
    for alg in algorithms:
        for m in anchor_counts:
            for k in range(len(snr_db)):
                vals = [res[(alg, m, k)] for res in per_real]
                ok = [v for v in vals if v is not None]
                rows.append(_summarize(alg, m, noise_dbm[k], ok, len(vals) - len(ok), len(vals)))
    return rows


def run_iccl_pipeline(config: ExperimentConfig, models: Models) -> list[SweepRow]:
    return evaluate(config, models, ("iccl",), config.anchor_counts, config.snr_db)


def run_baseline_pipeline(config: ExperimentConfig, models: Models, algorithm: str) -> list[SweepRow]:
    if algorithm not in ("dfpl", "dfpl-raw", "nfpl"):
        raise InvalidArgument(f"{algorithm!r} is not a baseline")
    return evaluate(config, models, (algorithm,), config.anchor_counts, config.snr_db)


def sweep_anchors(config: ExperimentConfig, models: Models, workers: int = 1,
                  variants=("iccl", "iccl-ls")) -> list[SweepRow]:
    """ICCL over the (anchor count, noise level) grid, refined and linear-only."""
    return evaluate(config, models, variants, config.anchor_counts, config.snr_db, workers)


def sweep_noise(config: ExperimentConfig, models: Models, workers: int = 1) -> list[SweepRow]:
    """Every configured algorithm over the noise grid at ``noise_anchor_count`` anchors."""
    return evaluate(config, models, config.algorithms, (config.noise_anchor_count,), config.snr_db, workers)


# --- output --------------------------------------------------------------------

def _fmt_row(row: SweepRow) -> list[str]:
    return [
        row.algorithm,
        str(row.m_a),
        f"{row.noise_power_dbm:.4f}",
        f"{row.rmse_m:.6f}",
        f"{row.stderr_m:.6f}",
        str(row.n_realizations),
        f"{row.failure_rate:.4f}",
    ]


def format_results(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(_fmt_row(row))
    return buf.getvalue()


def emit_results(rows, path) -> Path:
    """Write the results CSV; output is a pure function of ``rows``."""
    path = Path(path)
    path.write_text(format_results(rows))
    return path


def read_results(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise InvalidArgument(f"{path}: unexpected columns {reader.fieldnames}")
        return [
            SweepRow(r["algorithm"], int(r["m_a"]), float(r["noise_power_dbm"]), float(r["rmse_m"]),
                     float(r["stderr_m"]), int(r["n_realizations"]), float(r["failure_rate"]))
            for r in reader
        ]


def plot_data(rows, x: str = "noise") -> str:
    """Whitespace table, one block per curve, blocks split by two blank lines.

    ``x="noise"`` gives one curve per (algorithm, m_a) against noise power;
    ``x="anchors"`` one curve per (algorithm, noise level) against m_a.
    Loads as-is with gnuplot (``index``) or ``numpy.loadtxt`` per block.
    """
    if x not in ("noise", "anchors"):
        raise InvalidArgument("x must be 'noise' or 'anchors'")
    curves: dict = {}
    for row in rows:
        key = (row.algorithm, row.m_a) if x == "noise" else (row.algorithm, row.noise_power_dbm)
        curves.setdefault(key, []).append(row)
    blocks = []
    for (alg, tag), pts in curves.items():
        label = f"m_a={tag}" if x == "noise" else f"noise_power_dbm={tag:.4f}"
        xcol = "noise_power_dbm" if x == "noise" else "m_a"
        lines = [f"# {alg} {label}", f"# {xcol} rmse_m stderr_m"]
        pts = sorted(pts, key=lambda p: p.noise_power_dbm if x == "noise" else p.m_a)
        for p in pts:
            xv = f"{p.noise_power_dbm:.4f}" if x == "noise" else str(p.m_a)
            lines.append(f"{xv} {p.rmse_m:.6f} {p.stderr_m:.6f}")
        blocks.append("\n".join(lines))
    return "\n\n\n".join(blocks) + "\n"


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    train_kw = {k[len("train_"):]: v for k, v in kw.items() if k.startswith("train_")}
    rest = {k: v for k, v in kw.items() if not k.startswith("train_")}
    if train_kw:
        rest["train"] = replace(config.train, **train_kw)
    return replace(config, **rest)
