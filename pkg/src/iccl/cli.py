"""Command-line entry point.

Every option can also come from a plain-text ``key = value`` file passed
with ``--config``; keys are option names without the leading dashes
(``n-realizations = 20``). Options given on the command line win.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import baselines, harness, propagation, regressor
from .errors import ICCLError
from .network import load_checkpoint, save_checkpoint
from .propagation import ChannelModel
from .scene import (
    DEFAULT_TRAJECTORY_CENTER,
    DEFAULT_TRAJECTORY_RADIUS,
    DEFAULT_N_WAYPOINTS,
    build_circular_trajectory,
    generate_random_scene,
    load_scene,
    load_trajectory,
    parse_keyvalues,
    save_scene,
)
from .train import TrainConfig

log = logging.getLogger("iccl")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _add_train_options(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--learning-rate", type=float, default=d.learning_rate)
    g.add_argument("--batch-size", type=int, default=d.batch_size)
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--examples-per-epoch", type=int, default=d.examples_per_epoch)
    g.add_argument("--lr-decay", type=float, default=d.lr_decay)
    g.add_argument("--finetune-learning-rate", type=float, default=d.finetune_learning_rate)
    g.add_argument("--finetune-epochs", type=int, default=d.finetune_epochs)
    g.add_argument("--train-seed", type=int, default=d.seed)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        examples_per_epoch=args.examples_per_epoch,
        lr_decay=args.lr_decay,
        finetune_learning_rate=args.finetune_learning_rate,
        finetune_epochs=args.finetune_epochs,
        seed=args.train_seed,
    )


def _add_trajectory_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trajectory", help="trajectory file (waypoint lines or trajectory.* keys)")
    p.add_argument("--center", type=_floats, default=DEFAULT_TRAJECTORY_CENTER, help="circle center x y z")
    p.add_argument("--radius", type=float, default=DEFAULT_TRAJECTORY_RADIUS)
    p.add_argument("--waypoints", type=int, default=DEFAULT_N_WAYPOINTS)


def _trajectory(args):
    if args.trajectory:
        return load_trajectory(args.trajectory)
    return build_circular_trajectory(args.center, args.radius, args.waypoints)


def _channel(args) -> ChannelModel:
    return ChannelModel(reference_gain_db=args.reference_gain_db, pathloss_exponent=args.pathloss_exponent)


def _add_channel_options(p: argparse.ArgumentParser) -> None:
    d = ChannelModel()
    p.add_argument("--reference-gain-db", type=float, default=d.reference_gain_db)
    p.add_argument("--pathloss-exponent", type=float, default=d.pathloss_exponent)


# --- subcommands ---------------------------------------------------------------

def cmd_scene_gen(args) -> int:
    scene = generate_random_scene(
        extent=args.extent, n_buildings=args.buildings, size_range=args.size_range,
        attenuation_range=args.attenuation_range, seed=args.seed,
    )
    save_scene(args.out, scene, _trajectory(args) if args.with_trajectory else None)
    print(f"wrote {args.out} ({len(scene.buildings)} buildings, sha256 {scene.digest()[:12]})")
    return 0


def cmd_dataset_gen(args) -> int:
    scene = load_scene(args.scene)
    cm = _channel(args).with_noise(args.noise_power)
    ds = propagation.generate_dataset(scene, cm, _trajectory(args), args.nodes, args.seed)
    propagation.write_dataset(args.out, ds)
    print(f"wrote {args.out} ({len(ds)} nodes x {ds.n_waypoints} waypoints)")
    return 0


def _load_checked(args):
    ds = propagation.read_dataset(args.dataset)
    traj = _trajectory(args)
    if ds.n_waypoints != len(traj.waypoints):
        raise ICCLError(f"dataset has {ds.n_waypoints} waypoints, trajectory {len(traj.waypoints)}")
    if args.scene:
        digest = load_scene(args.scene).digest()
        if ds.scene_hash and ds.scene_hash != digest:
            raise ICCLError(f"{args.dataset} was generated in a different scene than {args.scene}")
    return ds


def cmd_train(args, pretraining: bool = False) -> int:
    ds = _load_checked(args)
    cfg = _train_config(args)
    if args.init and not pretraining:
        net = load_checkpoint(args.init)
        if net.kind != args.model:
            raise ICCLError(f"{args.init} holds a {net.kind} model, not {args.model}")
        cfg = cfg.finetune()
    else:
        net = None
    if args.model == "iccl":
        if net is None:
            norm = regressor.fit_normalization(ds, cfg.db_floor)
            net = regressor.new_regressor(ds.n_waypoints, cfg.seed, norm=norm)
            net.params[-1][:] = 1.0
        _, trace = regressor.train(net, regressor.PairDataset(ds), cfg, args.model)
    else:
        net, trace = baselines.nfpl_train(ds, cfg, net=net, label=args.model)
    save_checkpoint(args.out, net)
    final = f"{trace[-1]:.4g}" if trace else "n/a"
    print(f"wrote {args.out} ({args.model}, {len(trace)} epochs, final loss {final})")
    return 0


def _experiment(args) -> harness.ExperimentConfig:
    known = {f.name for f in fields(harness.ExperimentConfig)}
    kw = {k: v for k, v in vars(args).items() if k in known and v is not None}
    kw["train"] = _train_config(args)
    kw["channel"] = _channel(args)
    if args.trajectory:
        kw["trajectory_file"] = args.trajectory
    kw["trajectory_center"] = tuple(args.center)
    kw["trajectory_radius"] = args.radius
    kw["n_waypoints"] = args.waypoints
    if args.scene:
        kw["scene_file"] = args.scene
    return harness.ExperimentConfig(**kw)


def _models(args, config: harness.ExperimentConfig, algorithms) -> harness.Models:
    need_train = ({"iccl", "iccl-ls"} & set(algorithms) and not args.iccl_model) \
        or ("nfpl" in algorithms and not args.nfpl_model) \
        or ({"dfpl", "dfpl-raw"} & set(algorithms) and not args.fingerprints)
    train = pre = None
    if need_train:
        train, pre = harness.make_datasets(config)
    models = harness.Models()
    if {"dfpl", "dfpl-raw"} & set(algorithms):
        fp = propagation.read_dataset(args.fingerprints) if args.fingerprints else train
        harness.add_fingerprints(models, fp, algorithms, config.train.db_floor)
    if {"iccl", "iccl-ls"} & set(algorithms):
        if args.iccl_model:
            models.iccl = load_checkpoint(args.iccl_model)
        else:
            models.iccl, _, _ = regressor.pretrain_then_finetune(pre, train, config.train)
    if "nfpl" in algorithms:
        if args.nfpl_model:
            models.nfpl = load_checkpoint(args.nfpl_model)
        else:
            models.nfpl, _, _ = baselines.nfpl_pretrain_then_finetune(pre, train, config.train)
    return models


def cmd_eval(args) -> int:
    config = _experiment(args)
    algorithms = ("iccl", "iccl-ls") if args.sweep == "anchors" else config.algorithms
    if args.dfpl_raw:
        algorithms = tuple(a for a in algorithms if a != "dfpl")
        config = replace(config, algorithms=algorithms)
    models = _models(args, config, algorithms)
    if args.sweep == "anchors":
        rows = harness.sweep_anchors(config, models, args.workers)
    else:
        rows = harness.sweep_noise(config, models, args.workers)
    harness.emit_results(rows, args.out)
    if args.plot_data:
        Path(args.plot_data).write_text(harness.plot_data(rows, "anchors" if args.sweep == "anchors" else "noise"))
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def cmd_report(args) -> int:
    rows = harness.read_results(args.results)
    if args.plot_data:
        sys.stdout.write(harness.plot_data(rows, args.x))
        return 0
    print(f"{'algorithm':<9} {'m_a':>4} {'noise dBm':>10} {'rmse m':>9} {'+-':>7} {'n':>4} {'fail':>6}")
    for r in rows:
        print(f"{r.algorithm:<9} {r.m_a:>4} {r.noise_power_dbm:>10.2f} {r.rmse_m:>9.3f} {r.stderr_m:>7.3f} "
              f"{r.n_realizations:>4} {r.failure_rate:>6.3f}")
    return 0


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="plain-text key = value file with option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="iccl", description="UAV-aided CSI localization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="scene files").add_subparsers(dest="action", required=True)
    p = scene.add_parser("gen", parents=[common], help="write a random building scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extent", type=_floats, default=(100.0, 80.0))
    p.add_argument("--buildings", type=int, default=8)
    p.add_argument("--size-range", type=_floats, default=(10.0, 25.0))
    p.add_argument("--attenuation-range", type=_floats, default=(0.5, 2.0))
    p.add_argument("--with-trajectory", action="store_true", help="append the trajectory waypoints")
    _add_trajectory_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scene_gen)

    dataset = sub.add_parser("dataset", help="CSI datasets").add_subparsers(dest="action", required=True)
    p = dataset.add_parser("gen", parents=[common], help="measure CSI at random ground positions")
    p.add_argument("--scene", required=True)
    _add_trajectory_options(p)
    _add_channel_options(p)
    p.add_argument("--nodes", type=int, default=200)
    p.add_argument("--noise-power", type=float, default=0.0, help="receiver noise power in watts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help=".csv for text, anything else for binary")
    p.set_defaults(func=cmd_dataset_gen)

    for name, pretraining in (("train", False), ("pretrain", True)):
        p = sub.add_parser(name, parents=[common],
                           help="pretrain from scratch" if pretraining else "train or finetune (--init) a model")
        p.add_argument("--scene", help="scene the dataset was generated in; checked against its digest")
        _add_trajectory_options(p)
        p.add_argument("--dataset", required=True)
        p.add_argument("--model", choices=("iccl", "nfpl"), default="iccl")
        if not pretraining:
            p.add_argument("--init", help="checkpoint to finetune (uses the finetune rate and epochs)")
        _add_train_options(p)
        p.add_argument("--out", required=True)
        p.set_defaults(func=lambda a, _pt=pretraining: cmd_train(a, _pt), init=None)

    p = sub.add_parser("eval", parents=[common], help="Monte-Carlo RMSE sweep")
    p.add_argument("--sweep", choices=("anchors", "noise"), required=True)
    p.add_argument("--seed", type=int, required=True, help="master seed of the realization schedule")
    p.add_argument("--scene", help="test scene file (default: random scene with --scene-seed)")
    p.add_argument("--scene-seed", type=int)
    p.add_argument("--pretrain-scene-seed", type=int)
    _add_trajectory_options(p)
    _add_channel_options(p)
    p.add_argument("--n-realizations", type=int)
    p.add_argument("--n-nodes", type=int)
    p.add_argument("--anchor-counts", type=_ints)
    p.add_argument("--noise-anchor-count", type=int)
    p.add_argument("--snr-db", type=_floats, help="test SNR grid in dB")
    p.add_argument("--algorithms", type=lambda s: tuple(s.replace(",", " ").split()))
    p.add_argument("--train-positions", type=int)
    p.add_argument("--pretrain-positions", type=int)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--dfpl-raw", action="store_true",
                   help="report DFPL on plain linear gains only (drops the standardized-dB variant)")
    p.add_argument("--iccl-model", help="trained ICCL checkpoint (trained in-run if absent)")
    p.add_argument("--nfpl-model", help="trained NFPL checkpoint (trained in-run if absent)")
    p.add_argument("--fingerprints", help="DFPL database (default: the generated training set)")
    p.add_argument("--workers", type=int, default=1)
    _add_train_options(p)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-data", help="also write whitespace plot blocks here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="summarize a results CSV")
    p.add_argument("results")
    p.add_argument("--plot-data", action="store_true", help="print plot blocks instead of a table")
    p.add_argument("--x", choices=("noise", "anchors"), default="noise")
    p.set_defaults(func=cmd_report)
    return parser


def _subparser(parser: argparse.ArgumentParser, argv) -> argparse.ArgumentParser:
    """The parser that will handle ``argv`` (descends through nested subcommands)."""
    current = parser
    for tok in argv:
        if tok.startswith("-"):
            break
        actions = [a for a in current._actions if isinstance(a, argparse._SubParsersAction)]
        if not actions or tok not in actions[0].choices:
            break
        current = actions[0].choices[tok]
    return current


def _apply_config_file(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    target = _subparser(parser, argv)
    by_dest = {a.dest: a for a in target._actions}
    defaults = {}
    for key, value in parse_keyvalues(Path(known.config).read_text()):
        dest = key.lstrip("-").replace("-", "_")
        action = by_dest.get(dest)
        if action is None:
            raise ICCLError(f"{known.config}: unknown option {key!r} for this command")
        if action.nargs == 0:  # flags
            defaults[dest] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[dest] = action.type(value) if action.type else value
        if action.required:
            action.required = False
    target.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s")
        return args.func(args)
    except (ICCLError, OSError) as exc:
        print(f"iccl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
