"""Quantitative evaluation: horizon errors, the inferred-r and min-over-bank
metrics, critic accuracy, an action classifier trained on real motion, the
ablation harness, and sequence export.

All metrics are read-only over checkpointed parameters and deterministic
given seeds.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import FRAME_RATE, DataError, MotionSequence, make_windows
from .motion import GanModel, infer_r, predict_motion
from .nets import LstmSpec, MlpSpec, init_lstm, init_mlp, mlp_forward, run_bidirectional, uniform_init
from .params import Adam, ParameterStore, RandomSource
from .pose import PoseModel, train_pose_embedding
from .training import GanTrainState, TrainConfig, train

logger = logging.getLogger("motionforge.evaluation")

DEFAULT_HORIZONS_MS = (80, 160, 320, 400, 1000)


def horizon_to_frame(ms: int, fps: int = FRAME_RATE) -> int:
    """1-based frame index reached after ``ms`` milliseconds."""
    frame = ms * fps / 1000.0
    if abs(frame - round(frame)) > 1e-9 or round(frame) < 1:
        raise ValueError(f"horizon {ms} ms is not a whole positive frame at {fps} fps")
    return int(round(frame))


@dataclass
class HorizonReport:
    """Euler-angle error at each requested prediction horizon."""

    errors: dict[int, float]  # ms -> error

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.errors.values())))

    def last(self) -> float:
        return self.errors[max(self.errors)]


def mean_reports(reports: list[HorizonReport]) -> HorizonReport:
    if not reports:
        raise ValueError("mean_reports: empty list")
    keys = reports[0].errors.keys()
    return HorizonReport({ms: float(np.mean([r.errors[ms] for r in reports])) for ms in keys})


def euler_error(pred: MotionSequence, gt: MotionSequence,
                horizons_ms=DEFAULT_HORIZONS_MS) -> HorizonReport:
    """Euclidean norm of the per-frame angle difference at each horizon."""
    if len(pred) != len(gt):
        raise ValueError(f"euler_error: length mismatch {len(pred)} vs {len(gt)}")
    errors = {}
    for ms in horizons_ms:
        f = horizon_to_frame(ms, gt.fps)
        if f > len(pred):
            raise ValueError(f"horizon {ms} ms needs frame {f} but only {len(pred)} predicted")
        errors[ms] = float(np.linalg.norm(pred.frames[f - 1] - gt.frames[f - 1]))
    return HorizonReport(errors)


@dataclass
class RBank:
    """Fixed bank of extrinsic factors for the min-error sweep."""

    vectors: np.ndarray  # [n, r_dim]
    seed: int

    @classmethod
    def make(cls, seed: int, r_dim: int, size: int = 1000) -> "RBank":
        rng = RandomSource(seed)
        return cls(rng.normal((size, r_dim)), seed)


def _split_test(test: MotionSequence, past_len: int, pred_len: int) -> tuple[MotionSequence, MotionSequence]:
    if len(test) != past_len + pred_len:
        raise ValueError(f"test sequence has {len(test)} frames, expected {past_len + pred_len}")
    return (MotionSequence(test.frames[:past_len], test.label, test.fps),
            MotionSequence(test.frames[past_len:], test.label, test.fps))


def r_prime_metric(gan: GanModel, pose_model: PoseModel, test: MotionSequence,
                   past_len: int, pred_len: int, tau: int,
                   horizons_ms=DEFAULT_HORIZONS_MS) -> HorizonReport:
    """Prediction error when the extrinsic factor is inferred from the real
    full sequence through the discriminator's regression head."""
    past, gt = _split_test(test, past_len, pred_len)
    r_prime = infer_r(gan, pose_model, test.frames, past_len, tau)
    pred = predict_motion(gan, pose_model, past, r_prime, pred_len)
    return euler_error(pred, gt, horizons_ms)


def min_err_metric(gan: GanModel, pose_model: PoseModel, bank: RBank,
                   test: MotionSequence, past_len: int, pred_len: int,
                   horizons_ms=DEFAULT_HORIZONS_MS) -> HorizonReport:
    """Per-horizon minimum error over the whole bank of extrinsic factors."""
    if bank.vectors.shape[0] == 0:
        raise ValueError("min_err_metric: empty bank")
    past, gt = _split_test(test, past_len, pred_len)
    best: dict[int, float] = {}
    for r in bank.vectors:
        report = euler_error(predict_motion(gan, pose_model, past, r, pred_len), gt, horizons_ms)
        for ms, v in report.errors.items():
            best[ms] = v if ms not in best else min(best[ms], v)
    return HorizonReport(best)


def critic_accuracy(critic, real_set: list[MotionSequence],
                    generated_set: list[MotionSequence]) -> float:
    """Fraction classified correctly at threshold 0.5; ties count as real.

    ``critic`` maps a MotionSequence to a probability of being real.
    """
    if not real_set or not generated_set:
        raise ValueError("critic_accuracy: empty set")
    correct = 0
    for s in real_set:
        correct += critic(s) >= 0.5
    for s in generated_set:
        correct += critic(s) < 0.5
    return correct / (len(real_set) + len(generated_set))


def model_critic(gan: GanModel, pose_model: PoseModel, past_len: int, tau: int):
    """The trained critic network as a sequence -> probability callable."""
    from .motion import critic_forward
    return lambda seq: critic_forward(gan, pose_model, seq, past_len, tau)


# ---------------------------------------------------------------------------
# action classifier
# ---------------------------------------------------------------------------

@dataclass
class ClassifierModel:
    """Bidirectional recurrent classifier over raw pose frames; same
    readout structure as the discriminator, softmax head over categories."""

    store: ParameterStore
    fwd: LstmSpec
    bwd: LstmSpec
    head: MlpSpec
    labels: tuple[int, ...]
    past_len: int
    tau: int

    @classmethod
    def build(cls, rng: RandomSource, pose_dim: int, hidden_dim: int, head_hidden: int,
              labels: tuple[int, ...], past_len: int, tau: int) -> "ClassifierModel":
        store = ParameterStore()
        fwd = LstmSpec(pose_dim, hidden_dim, "clf.fwd")
        bwd = LstmSpec(pose_dim, hidden_dim, "clf.bwd")
        head = MlpSpec((4 * hidden_dim, head_hidden), prefix="clf.head")
        init_lstm(store, fwd, rng)
        init_lstm(store, bwd, rng)
        init_mlp(store, head, rng)
        store.add("clf.out.w", uniform_init(rng, (head_hidden, len(labels)), head_hidden))
        store.add("clf.out.b", np.zeros(len(labels)))
        return cls(store, fwd, bwd, head, labels, past_len, tau)

    def logits(self, frames: list[Tensor]) -> Tensor:
        f, b = run_bidirectional(frames, self.fwd, self.bwd, self.store)
        picked = ad.concat([f[-1], b[0], f[self.past_len + self.tau - 1],
                            b[self.past_len - 2 - self.tau]], axis=1)
        hidden = ad.tanh(mlp_forward(picked, self.head, self.store))
        return ad.matmul(hidden, self.store["clf.out.w"]) + self.store["clf.out.b"]

    def predict(self, frames: np.ndarray) -> int:
        from .motion import frames_to_tensors
        with ad.no_grad():
            logits = self.logits(frames_to_tensors(frames))
        return self.labels[int(np.argmax(logits.data[0]))]


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean softmax cross entropy; the max-shift is detached, which leaves
    the gradient exact."""
    shift = Tensor(logits.data.max(axis=1, keepdims=True))
    z = logits - shift
    lse = ad.log(ad.sum_axis(ad.exp(z), 1, keepdims=True))
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(targets)), targets] = 1.0
    picked = ad.sum_axis(ad.mul(z, Tensor(onehot)), 1, keepdims=True)
    return ad.mean(lse - picked)


def train_action_classifier(dataset: list[MotionSequence], config: TrainConfig,
                            rng: RandomSource, iters: int = 150,
                            lr: float = 0.002) -> ClassifierModel:
    """Cross-entropy training on real (seed || continuation) windows only."""
    from .motion import frames_to_tensors
    labels = tuple(sorted({s.label for s in dataset if s.label is not None}))
    if len(labels) < 2:
        raise DataError("train_action_classifier: need at least 2 categories")
    label_pos = {lab: i for i, lab in enumerate(labels)}
    model = ClassifierModel.build(rng.child("clf-init"), config.pose_dim,
                                  config.hidden_dim, config.head_hidden,
                                  labels, config.T, config.tau)
    windows = make_windows(dataset, config.T, config.pred_len, config.batch_size,
                           rng.child("clf-windows"))
    opt = Adam(lr=lr)
    names = model.store.names()
    for it in range(iters):
        batch = next(windows)
        frames = np.stack([np.concatenate([w.past, w.future[:config.pred_len]]) for w in batch])
        targets = np.array([label_pos[w.label] for w in batch])
        loss = cross_entropy(model.logits(frames_to_tensors(frames)), targets)
        grads = ad.grad(loss, [model.store[n] for n in names])
        opt.step(model.store, {n: g.data for n, g in zip(names, grads)})
        if (it + 1) % 50 == 0:
            logger.info("classifier iter %d loss %.4f", it + 1, loss.item())
    return model


def classifier_accuracy(model: ClassifierModel, sequences: list[tuple[np.ndarray, int]]) -> float:
    correct = sum(model.predict(frames) == label for frames, label in sequences)
    return correct / len(sequences)


def classifier_score(model: ClassifierModel, seeds: list[MotionSequence],
                     gan: GanModel, pose_model: PoseModel, rng: RandomSource,
                     past_len: int, pred_len: int, r_dim: int) -> float:
    """Classifier accuracy on (seed || generated continuation) pairs."""
    items = []
    for seed in seeds:
        past = MotionSequence(seed.frames[-past_len:], seed.label, seed.fps)
        r = rng.normal((r_dim,))
        pred = predict_motion(gan, pose_model, past, r, pred_len)
        items.append((np.concatenate([past.frames, pred.frames]), seed.label))
    return classifier_accuracy(model, items)


# ---------------------------------------------------------------------------
# export and reports
# ---------------------------------------------------------------------------

def export_sequence(seq: MotionSequence, path, fmt: str = "csv") -> None:
    """Lossless export; the csv form round-trips through load_sequences."""
    if fmt == "csv":
        lines = [f"# label={seq.label if seq.label is not None else 'none'} fps={seq.fps}"]
        if seq.label is None:
            lines = [f"# fps={seq.fps}"]
        for row in seq.frames:
            lines.append(",".join(f"{v:.17g}" for v in row))
        text = "\n".join(lines) + "\n"
    elif fmt == "json-lines":
        records = [json.dumps({"frame": i, "values": list(map(float, row))})
                   for i, row in enumerate(seq.frames)]
        text = "\n".join(records) + "\n"
    else:
        raise ValueError(f"export_sequence: unknown format {fmt!r}")
    with open(path, "w") as f:
        f.write(text)


def write_report(path, rows: list[tuple]) -> None:
    """Tab-separated rows of (category, horizon, metric, value)."""
    with open(path, "w") as f:
        f.write("category\thorizon\tmetric\tvalue\n")
        for cat, horizon, metric, value in rows:
            f.write(f"{cat}\t{horizon}\t{metric}\t{value:.10g}\n")


# ---------------------------------------------------------------------------
# ablation harness
# ---------------------------------------------------------------------------

ABLATION_VARIANTS = ("full", "no_pose_embedding", "no_encoder_chaining", "no_recursive")


def train_variant(dataset: list[MotionSequence], config: TrainConfig,
                  rng: RandomSource) -> GanTrainState:
    """Pose-embedding pretraining (unless ablated) followed by GAN training."""
    if config.no_pose_embedding:
        pose_model = PoseModel.identity(config.pose_dim)
    else:
        pool = np.concatenate([s.frames for s in dataset])
        pose_model, _ = train_pose_embedding(
            pool, rng.child("pose"), pose_dim=config.pose_dim, embed_dim=config.embed_dim,
            hidden=config.pose_hidden, iters=config.pose_iters, batch_size=config.batch_size,
            lr=config.pose_lr, lam=config.lambda_adv)
    state, _ = train(dataset, config, rng.child("gan"), pose_model)
    return state


def holdout_windows(dataset: list[MotionSequence], config: TrainConfig,
                    rng: RandomSource, count: int) -> list[MotionSequence]:
    """Fixed test windows of exactly T + pred_len frames."""
    stream = make_windows(dataset, config.T, config.pred_len, 1, rng)
    out = []
    for _ in range(count):
        w = next(stream)[0]
        out.append(MotionSequence(np.concatenate([w.past, w.future[:config.pred_len]]),
                                  label=w.label))
    return out


@dataclass
class AblationRow:
    variant: str
    r_prime_err: float
    min_err: float


def run_ablation(train_set: list[MotionSequence], holdout: list[MotionSequence],
                 base_config: TrainConfig, rng: RandomSource,
                 bank_size: int = 100) -> list[AblationRow]:
    """Train each variant and report mean last-horizon errors on the holdout."""
    horizon = (base_config.pred_len * 1000) // FRAME_RATE
    rows = []
    for variant in ABLATION_VARIANTS:
        cfg = replace(base_config)
        if variant != "full":
            cfg = replace(base_config, **{variant: True})
        state = train_variant(train_set, cfg, rng.child(f"ablation-{variant}"))
        bank = RBank.make(rng.child("bank").seed, cfg.r_dim, bank_size)
        rp, me = [], []
        for test in holdout:
            rp.append(r_prime_metric(state.gan, state.pose_model, test,
                                     cfg.T, cfg.pred_len, cfg.tau, (horizon,)).last())
            me.append(min_err_metric(state.gan, state.pose_model, bank, test,
                                     cfg.T, cfg.pred_len, (horizon,)).last())
        rows.append(AblationRow(variant, float(np.mean(rp)), float(np.mean(me))))
        logger.info("ablation %s: r'=%.4f min_err=%.4f", variant, rows[-1].r_prime_err,
                    rows[-1].min_err)
    return rows
