"""Command-line entry point: train-pose, train-gan, predict, evaluate,
interpolate.

Every run writes a manifest (config snapshot, seeds, input hashes) before
touching any weights, so a run is reproducible from the manifest alone.
Exit codes: 0 success, 2 usage/config, 3 checkpoint incompatibility,
4 data error, 1 internal.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import DataError, MotionSequence, load_sequence, load_sequences, synth_dataset
from .evaluation import (RBank, classifier_accuracy, classifier_score, critic_accuracy,
                         holdout_windows, mean_reports, min_err_metric, model_critic,
                         r_prime_metric, run_ablation, train_action_classifier,
                         export_sequence, write_report)
from .motion import GanModel, predict_motion
from .params import ParameterStore, RandomSource
from .plots import save_horizon_figure, save_loss_curves, save_pose_loss_curves
from .pose import PoseModel, interpolate_poses, train_pose_embedding
from .training import TrainConfig, load_into, train

logger = logging.getLogger("motionforge.cli")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CHECKPOINT = 3
EXIT_DATA = 4

METRIC_NAMES = ("euler_r_prime", "min_err", "critic", "classifier", "ablation")


class UsageError(Exception):
    pass


class CheckpointError(Exception):
    pass


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _hash_inputs(paths: list[Path]) -> dict[str, str]:
    out = {}
    for p in paths:
        if p.is_dir():
            for f in sorted(p.glob("*.csv")):
                out[str(f)] = _hash_file(f)
        elif p.exists():
            out[str(p)] = _hash_file(p)
    return out


def write_manifest(out_dir: Path, command: str, config: TrainConfig,
                   inputs: list[Path], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": dataclasses.asdict(config),
        "seed": config.seed,
        "inputs": _hash_inputs(inputs),
        "outputs": outputs,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(TrainConfig):
        if f.type == "bool":
            parser.add_argument(f"--{f.name}", action="store_true", default=None)
        elif f.type == "int":
            parser.add_argument(f"--{f.name}", type=int, default=None)
        else:
            parser.add_argument(f"--{f.name}", type=float, default=None)
    parser.add_argument("--ablation", action="append", default=None,
                        choices=["no_pose_embedding", "no_encoder_chaining", "no_recursive"],
                        help="enable an ablation flag end to end")


def resolve_config(args, config_path=None) -> TrainConfig:
    """Precedence: CLI flag > config file > dataclass default."""
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            cfg = TrainConfig.from_file(path)
        except ValueError as e:
            raise UsageError(str(e)) from e
    else:
        cfg = TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    for flag in getattr(args, "ablation", None) or []:
        setattr(cfg, flag, True)
    try:
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    return cfg


def _load_dataset(args, cfg: TrainConfig, rng: RandomSource) -> tuple[list[MotionSequence], list[Path]]:
    if args.synthetic:
        seqs = synth_dataset(args.synth_categories, args.synth_per_category,
                             max(4 * cfg.window_len, 200), args.synth_noise,
                             rng.child("synth"), channels=cfg.pose_dim)
        return seqs, []
    if not args.data:
        raise UsageError("either --data or --synthetic is required")
    path = Path(args.data)
    if not path.exists():
        raise DataError(f"data path not found: {path}")
    return load_sequences(path, min_length=cfg.window_len), [path]


def build_models(cfg: TrainConfig) -> tuple[PoseModel, GanModel]:
    """Fresh models with the configured shapes (weights to be overwritten)."""
    rng = RandomSource(cfg.seed).child("rebuild")
    if cfg.no_pose_embedding:
        pose = PoseModel.identity(cfg.pose_dim)
    else:
        pose = PoseModel.build(rng, cfg.pose_dim, cfg.embed_dim, cfg.pose_hidden)
    gan = GanModel.build(rng, cfg.gan_dims())
    return pose, gan


def load_models(checkpoint: Path, cfg: TrainConfig) -> tuple[PoseModel, GanModel]:
    if not checkpoint.exists():
        raise CheckpointError(f"checkpoint not found: {checkpoint}")
    try:
        loaded = ParameterStore.load(checkpoint)
    except ValueError as e:
        raise CheckpointError(str(e)) from e
    pose, gan = build_models(cfg)
    try:
        load_into(pose.store, loaded)
        load_into(gan.store, loaded)
    except ValueError as e:
        raise CheckpointError(f"{checkpoint}: {e}") from e
    return pose, gan


def _sibling_config(args) -> TrainConfig:
    """Config from --config, or config.txt next to the checkpoint."""
    if args.config:
        return resolve_config(args, args.config)
    sibling = Path(args.checkpoint).parent / "config.txt"
    if not sibling.exists():
        raise UsageError(f"no --config given and {sibling} not found")
    return resolve_config(args, sibling)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train_pose(args) -> int:
    cfg = resolve_config(args, args.config_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = RandomSource(cfg.seed)
    dataset, inputs = _load_dataset(args, cfg, rng)
    cfg.to_file(out / "config.txt")
    write_manifest(out, "train-pose", cfg, inputs,
                   ["pose.ckpt", "pose_losses.tsv", "pose_losses.png", "config.txt"])
    pool = np.concatenate([s.frames for s in dataset])
    model, log = train_pose_embedding(
        pool, rng.child("pose"), pose_dim=cfg.pose_dim, embed_dim=cfg.embed_dim,
        hidden=cfg.pose_hidden, iters=cfg.pose_iters, batch_size=cfg.batch_size,
        lr=cfg.pose_lr, lam=cfg.lambda_adv)
    model.store.save(out / "pose.ckpt")
    lines = ["iter\tl_cyc\tl_adv_de\tl_adv_disc"]
    lines += [f"{i + 1}\t{e.l_cyc:.10g}\t{e.l_adv_de:.10g}\t{e.l_adv_disc:.10g}"
              for i, e in enumerate(log)]
    (out / "pose_losses.tsv").write_text("\n".join(lines) + "\n")
    save_pose_loss_curves(log, out / "pose_losses.png")
    print(f"pose checkpoint written to {out / 'pose.ckpt'} "
          f"(l_cyc {log[0].l_cyc:.4f} -> {log[-1].l_cyc:.4f})")
    return EXIT_OK


def cmd_train_gan(args) -> int:
    cfg = resolve_config(args, args.config_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = RandomSource(cfg.seed)
    dataset, inputs = _load_dataset(args, cfg, rng)

    if cfg.no_pose_embedding:
        pose_model = PoseModel.identity(cfg.pose_dim)
    else:
        if not args.pose_checkpoint:
            raise UsageError("--pose_checkpoint is required unless no_pose_embedding is set")
        ckpt = Path(args.pose_checkpoint)
        if not ckpt.exists():
            raise CheckpointError(f"pose checkpoint not found: {ckpt}")
        try:
            loaded = ParameterStore.load(ckpt)
            pose_model = PoseModel.build(RandomSource(cfg.seed).child("rebuild"),
                                         cfg.pose_dim, cfg.embed_dim, cfg.pose_hidden)
            load_into(pose_model.store, loaded)
        except ValueError as e:
            raise CheckpointError(f"{ckpt}: {e}") from e
        inputs = inputs + [ckpt]

    cfg.to_file(out / "config.txt")
    write_manifest(out, "train-gan", cfg, inputs,
                   ["gan.ckpt", "losses.tsv", "losses.png", "config.txt"])
    _, log_lines = train(dataset, cfg, rng.child("gan"), pose_model, out_dir=out)
    save_loss_curves(log_lines, out / "losses.png")
    print(f"gan checkpoint written to {out / 'gan.ckpt'} ({cfg.k} iterations logged)")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _sibling_config(args)
    pose_model, gan = load_models(Path(args.checkpoint), cfg)
    seed_seq = load_sequence(args.seed_file)
    if len(seed_seq) < cfg.T:
        raise DataError(f"seed sequence has {len(seed_seq)} frames; need at least T={cfg.T}")
    if seed_seq.channels != cfg.pose_dim:
        raise DataError(f"seed sequence has {seed_seq.channels} channels, expected {cfg.pose_dim}")
    past = MotionSequence(seed_seq.frames[-cfg.T:], seed_seq.label, seed_seq.fps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = RandomSource(cfg.seed).child("predict-r")
    for i in range(args.n_samples):
        if args.r == "zeros":
            r = np.zeros(cfg.r_dim)
        elif args.r == "sample":
            r = rng.normal((cfg.r_dim,))
        else:
            r_path = Path(args.r)
            if not r_path.exists():
                raise DataError(f"r file not found: {r_path}")
            r = np.array(r_path.read_text().strip().split(","), dtype=np.float64)
        pred = predict_motion(gan, pose_model, past, r, cfg.pred_len)
        export_sequence(pred, out / f"pred_{i:03d}.csv")
        with open(out / f"pred_{i:03d}_r.csv", "w") as f:
            f.write(",".join(f"{v:.17g}" for v in r) + "\n")
    print(f"{args.n_samples} prediction(s) of {cfg.pred_len} frames written to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",")] if args.metrics else list(METRIC_NAMES)
    unknown = [m for m in metrics if m not in METRIC_NAMES]
    if unknown:
        raise UsageError(f"unknown metric(s) {unknown}; valid: {', '.join(METRIC_NAMES)}")
    cfg = _sibling_config(args)
    pose_model, gan = load_models(Path(args.checkpoint), cfg)
    rng = RandomSource(cfg.seed).child("evaluate")
    dataset, _ = _load_dataset(args, cfg, rng)
    holdout = holdout_windows(dataset, cfg, rng.child("holdout"), args.test_count)
    horizons = tuple(h for h in (80, 160, 320, 400, 1000)
                     if h * 25 // 1000 <= cfg.pred_len) or ((cfg.pred_len * 1000) // 25,)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[tuple] = []

    by_cat: dict[int, list[MotionSequence]] = {}
    for w in holdout:
        by_cat.setdefault(w.label if w.label is not None else -1, []).append(w)

    if "euler_r_prime" in metrics:
        for cat, tests in sorted(by_cat.items()):
            rep = mean_reports([r_prime_metric(gan, pose_model, t, cfg.T, cfg.pred_len,
                                               cfg.tau, horizons) for t in tests])
            rows += [(cat, ms, "euler_r_prime", v) for ms, v in rep.errors.items()]
    if "min_err" in metrics:
        bank = RBank.make(cfg.seed + 1, cfg.r_dim, args.bank_size)
        for cat, tests in sorted(by_cat.items()):
            rep = mean_reports([min_err_metric(gan, pose_model, bank, t, cfg.T,
                                               cfg.pred_len, horizons) for t in tests])
            rows += [(cat, ms, "min_err", v) for ms, v in rep.errors.items()]
    if "critic" in metrics:
        gen_rng = rng.child("critic-gen")
        generated = []
        for t in holdout:
            past = MotionSequence(t.frames[:cfg.T], t.label, t.fps)
            pred = predict_motion(gan, pose_model, past, gen_rng.normal((cfg.r_dim,)), cfg.pred_len)
            generated.append(MotionSequence(np.concatenate([past.frames, pred.frames]),
                                            t.label, t.fps))
        acc = critic_accuracy(model_critic(gan, pose_model, cfg.T, cfg.tau), holdout, generated)
        rows.append(("all", "-", "critic_accuracy", acc))
    if "classifier" in metrics:
        clf = train_action_classifier(dataset, cfg, rng.child("clf"))
        real_items = [(w.frames, w.label) for w in holdout if w.label is not None]
        rows.append(("all", "-", "classifier_real_accuracy",
                     classifier_accuracy(clf, real_items)))
        rows.append(("all", "-", "classifier_generated_accuracy",
                     classifier_score(clf, holdout, gan, pose_model,
                                      rng.child("clf-gen"), cfg.T, cfg.pred_len, cfg.r_dim)))
    if "ablation" in metrics:
        for row in run_ablation(dataset, holdout, cfg, rng.child("ablation"),
                                bank_size=args.bank_size):
            rows.append((row.variant, "-", "ablation_r_prime", row.r_prime_err))
            rows.append((row.variant, "-", "ablation_min_err", row.min_err))

    write_report(out / "report.tsv", rows)
    save_horizon_figure(rows, out / "report.png")
    for cat, horizon, metric, value in rows:
        print(f"{cat}\t{horizon}\t{metric}\t{value:.6g}")
    print(f"report written to {out / 'report.tsv'}")
    return EXIT_OK


def cmd_interpolate(args) -> int:
    if args.steps < 2:
        raise UsageError("--steps must be >= 2")
    ckpt = Path(args.pose_checkpoint)
    if not ckpt.exists():
        raise CheckpointError(f"pose checkpoint not found: {ckpt}")
    cfg = resolve_config(args, args.config)
    pose_model = PoseModel.build(RandomSource(cfg.seed).child("rebuild"),
                                 cfg.pose_dim, cfg.embed_dim, cfg.pose_hidden)
    try:
        load_into(pose_model.store, ParameterStore.load(ckpt))
    except ValueError as e:
        raise CheckpointError(f"{ckpt}: {e}") from e
    pose_a = load_sequence(args.pose_a).frames[0]
    pose_b = load_sequence(args.pose_b).frames[0]
    frames = interpolate_poses(pose_model, pose_a, pose_b, args.steps)
    export_sequence(MotionSequence(frames), args.out)
    print(f"{args.steps}-step interpolation written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------

def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="directory of CSV sequences (or a single file)")
    p.add_argument("--synthetic", action="store_true", help="use the synthetic generator")
    p.add_argument("--synth-categories", type=int, default=5)
    p.add_argument("--synth-per-category", type=int, default=8)
    p.add_argument("--synth-noise", type=float, default=0.02)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-pose", help="train the pose embedding")
    p.add_argument("config_path", help="flat key=value config file")
    p.add_argument("out", help="output directory")
    _add_data_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_pose)

    p = sub.add_parser("train-gan", help="train the motion GAN")
    p.add_argument("config_path")
    p.add_argument("out")
    p.add_argument("--pose_checkpoint", help="pose checkpoint from train-pose")
    _add_data_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("predict", help="predict futures for a seed sequence")
    p.add_argument("checkpoint")
    p.add_argument("seed_file")
    p.add_argument("out")
    p.add_argument("--r", default="sample", help="'sample', 'zeros', or a csv file of r values")
    p.add_argument("--n-samples", type=int, default=1)
    p.add_argument("--config", help="config file (default: config.txt next to checkpoint)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run evaluation metrics")
    p.add_argument("checkpoint")
    p.add_argument("out")
    p.add_argument("--metrics", help=f"comma-separated subset of {','.join(METRIC_NAMES)}")
    p.add_argument("--bank-size", type=int, default=1000)
    p.add_argument("--test-count", type=int, default=64)
    p.add_argument("--config")
    _add_data_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("interpolate", help="interpolate between two poses")
    p.add_argument("pose_checkpoint")
    p.add_argument("pose_a")
    p.add_argument("pose_b")
    p.add_argument("out")
    p.add_argument("--steps", type=int, default=11)
    p.add_argument("--config")
    _add_config_flags(p)
    p.set_defaults(func=cmd_interpolate)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("MOTIONFORGE_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # internal
        logger.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
