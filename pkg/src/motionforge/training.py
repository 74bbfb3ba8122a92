"""Adversarial training: interleaved discriminator/generator updates, the
r'-mediated direct content loss, recursive-prediction regularization, and
the gradient penalty.

Parameter partition is structural: each update requests gradients only for
the names it owns, so a discriminator step cannot touch generator weights
and vice versa, and pose parameters are frozen throughout. The content and
recursive objectives get their own Adam instances (separate moment stores
over the shared weights), applied sequentially after the adversarial
update.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import DataError, DatasetWindow, MotionSequence, make_windows
from .motion import (GanDims, GanModel, critic_logit, decode_sequence, disc_heads,
                     embed_frames, encode_sequence, frames_to_tensors)
from .params import Adam, ParameterStore, RandomSource
from .pose import PoseModel, TrainingDiverged, bce_with_logits

logger = logging.getLogger("motionforge.training")

LOSS_LOG_COLUMNS = ("iter", "l_adv_disc", "l_r_rec", "l_adv_gen", "l_content", "l_gp")


@dataclass
class TrainConfig:
    """Flat run configuration; field names double as config-file keys."""

    batch_size: int = 32
    lr: float = 0.00005
    T: int = 50
    pred_len: int = 25
    tau: int = 1
    alpha: int = 2
    m: int = 5
    k: int = 300
    lambda_r: float = 1.0
    lambda_c: float = 10.0
    gp_weight: float = 10.0
    lambda_adv: float = 0.01
    no_pose_embedding: bool = False
    no_encoder_chaining: bool = False
    no_recursive: bool = False
    seed: int = 0
    pose_dim: int = 54
    embed_dim: int = 32
    r_dim: int = 8
    hidden_dim: int = 512
    head_hidden: int = 256
    pose_hidden: int = 64
    pose_iters: int = 200
    pose_lr: float = 0.001
    checkpoint_every: int = 100

    def validate(self) -> None:
        for name in ("batch_size", "T", "pred_len", "alpha", "m", "k", "pose_dim",
                     "embed_dim", "r_dim", "hidden_dim", "head_hidden", "pose_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"config: {name} must be positive")
        if self.tau < 0 or self.tau >= self.pred_len:
            raise ValueError("config: need 0 <= tau < pred_len")
        if self.tau > self.T - 2:
            raise ValueError("config: need tau <= T - 2 for the boundary readout")

    @property
    def window_len(self) -> int:
        return self.T + self.alpha * self.pred_len

    def gan_dims(self) -> GanDims:
        embed = self.pose_dim if self.no_pose_embedding else self.embed_dim
        return GanDims(embed_dim=embed, r_dim=self.r_dim, hidden_dim=self.hidden_dim,
                       head_hidden=self.head_hidden,
                       encoder_chaining=not self.no_encoder_chaining)

    def to_file(self, path) -> None:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={str(v).lower() if isinstance(v, bool) else v}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            t = types[key]
            if t == "bool":
                if raw.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(f"{path}:{lineno}: bad boolean {raw!r}")
                kwargs[key] = raw.lower() in ("true", "1")
            elif t == "int":
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass
class StepLosses:
    l_adv_disc: float = 0.0
    l_r_rec: float = 0.0
    l_adv_gen: float = 0.0
    l_content: float = 0.0
    l_gp: float = 0.0


@dataclass
class GanTrainState:
    """Models, per-objective optimizers, and instrumentation counters."""

    config: TrainConfig
    pose_model: PoseModel
    gan: GanModel
    opt_disc: Adam
    opt_critic: Adam
    opt_adv: Adam
    opt_content: Adam
    opt_recursive: Adam
    rng_r: RandomSource
    rng_gp: RandomSource
    counters: dict[str, int]

    @classmethod
    def create(cls, config: TrainConfig, pose_model: PoseModel,
               rng: RandomSource) -> "GanTrainState":
        config.validate()
        if pose_model.embed_dim != config.gan_dims().embed_dim:
            raise ValueError(
                f"pose model embedding dim {pose_model.embed_dim} does not match "
                f"config embed_dim {config.gan_dims().embed_dim}")
        gan = GanModel.build(rng.child("gan-init"), config.gan_dims())
        lr = config.lr
        return cls(config=config, pose_model=pose_model, gan=gan,
                   opt_disc=Adam(lr=lr), opt_critic=Adam(lr=lr), opt_adv=Adam(lr=lr),
                   opt_content=Adam(lr=lr), opt_recursive=Adam(lr=lr),
                   rng_r=rng.child("r-sampling"), rng_gp=rng.child("gp-blend"),
                   counters={"disc_steps": 0, "gen_steps": 0, "recursive_steps": 0})


def _batch_arrays(batch: list[DatasetWindow], config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    past = np.stack([w.past for w in batch])
    future = np.stack([w.future for w in batch])
    if past.shape[1] != config.T or future.shape[1] < config.pred_len:
        raise DataError(
            f"window shape past={past.shape} future={future.shape} does not fit "
            f"T={config.T}, pred_len={config.pred_len}")
    return past, future


def _generate(state: GanTrainState, past: np.ndarray, r: Tensor) -> list[Tensor]:
    """Pose-space future rollout with gradients through encoder/decoder."""
    with ad.no_grad():
        z_past = embed_frames(state.pose_model, frames_to_tensors(past))
    h = encode_sequence(state.gan, z_past)
    z_hat = decode_sequence(state.gan, h, r, z_past[-1], state.config.pred_len)
    return [state.pose_model.decode(z) for z in z_hat]


def _disc_embeds(state: GanTrainState, past: np.ndarray,
                 future_frames: list[Tensor]) -> list[Tensor]:
    """Embeddings the discriminator consumes: past frames plus a future."""
    with ad.no_grad():
        past_embeds = embed_frames(state.pose_model, frames_to_tensors(past))
    return past_embeds + [state.pose_model.encode(x) for x in future_frames]


def gradient_penalty(state: GanTrainState, real_embeds: list[Tensor],
                     fake_embeds: list[Tensor], blend: np.ndarray | None = None,
                     score_fn=None) -> Tensor:
    """Mean squared distance of the score's input-gradient norm from 1,
    evaluated at per-item random convex combinations of real and fake."""
    cfg = state.config
    batch = real_embeds[0].shape[0]
    if blend is None:
        blend = state.rng_gp.uniform((batch, 1))
    with ad.no_grad():
        mixed = [Tensor(blend * r.data + (1.0 - blend) * f.data)
                 for r, f in zip(real_embeds, fake_embeds)]
    if score_fn is None:
        score = disc_heads(state.gan, mixed, cfg.T, cfg.tau)[0]
    else:
        score = score_fn(mixed)
    grads = ad.grad(ad.sum_all(score), mixed, create_graph=True)
    sq = None
    for g in grads:
        s = ad.sum_axis(ad.square(g), 1)
        sq = s if sq is None else sq + s
    norm = ad.sqrt(sq + 1e-16)
    return ad.mean(ad.square(norm - 1.0))


def disc_step(state: GanTrainState, batch: list[DatasetWindow]) -> StepLosses:
    """One discriminator (and critic) update; generator params untouched."""
    cfg = state.config
    past, future = _batch_arrays(batch, cfg)
    future = future[:, :cfg.pred_len]
    r = Tensor(state.rng_r.normal((past.shape[0], cfg.r_dim)))

    with ad.no_grad():
        fake_frames = _generate(state, past, r)  # constants: no gradient to the generator
    fake_embeds = _disc_embeds(state, past, fake_frames)
    real_embeds = _disc_embeds(state, past, frames_to_tensors(future))

    wgan_fake, r_hat = disc_heads(state.gan, fake_embeds, cfg.T, cfg.tau)
    wgan_real, _ = disc_heads(state.gan, real_embeds, cfg.T, cfg.tau)
    l_adv = ad.mean(wgan_fake) - ad.mean(wgan_real)
    l_rec = ad.mean_abs(r - r_hat)
    gp = gradient_penalty(state, real_embeds, fake_embeds)
    loss = l_adv + l_rec * cfg.lambda_r + gp * cfg.gp_weight

    names = state.gan.discriminator_names()
    grads = ad.grad(loss, [state.gan.store[n] for n in names])
    state.opt_disc.step(state.gan.store, {n: g.data for n, g in zip(names, grads)})

    # the critic trains on the same schedule but never feeds the generator
    c_real = critic_logit(state.gan, real_embeds, cfg.T, cfg.tau)
    c_fake = critic_logit(state.gan, fake_embeds, cfg.T, cfg.tau)
    l_critic = bce_with_logits(c_real, 1.0) + bce_with_logits(c_fake, 0.0)
    c_names = state.gan.critic_names()
    c_grads = ad.grad(l_critic, [state.gan.store[n] for n in c_names])
    state.opt_critic.step(state.gan.store, {n: g.data for n, g in zip(c_names, c_grads)})

    state.counters["disc_steps"] += 1
    return StepLosses(l_adv_disc=l_adv.item(), l_r_rec=l_rec.item(), l_gp=gp.item())


def gen_step(state: GanTrainState, batch: list[DatasetWindow]) -> StepLosses:
    """One generator iteration: both objectives' gradients are taken at the
    iteration's starting weights, then the adversarial and content Adam
    instances are applied in turn. The decoder's adversarial objective also
    carries the r-reconstruction term; the encoder's explicitly does not."""
    cfg = state.config
    past, future = _batch_arrays(batch, cfg)
    future = future[:, :cfg.pred_len]
    enc_names = state.gan.encoder_names()
    dec_names = state.gan.decoder_names()
    gen_names = dec_names + enc_names

    r = Tensor(state.rng_r.normal((past.shape[0], cfg.r_dim)))
    fake_frames = _generate(state, past, r)
    fake_embeds = _disc_embeds(state, past, fake_frames)
    wgan_fake, r_hat = disc_heads(state.gan, fake_embeds, cfg.T, cfg.tau)
    l_adv_gen = -ad.mean(wgan_fake)
    l_rec = ad.mean_abs(r - r_hat)
    obj_dec = l_adv_gen + l_rec * cfg.lambda_r
    g_dec = ad.grad(obj_dec, [state.gan.store[n] for n in dec_names])
    g_enc = ad.grad(l_adv_gen, [state.gan.store[n] for n in enc_names])
    adv_grads = {n: g.data for n, g in zip(dec_names, g_dec)}
    adv_grads.update({n: g.data for n, g in zip(enc_names, g_enc)})

    # direct content loss through r' inferred from the real full sequence
    with ad.no_grad():
        real_embeds = _disc_embeds(state, past, frames_to_tensors(future))
        _, r_prime = disc_heads(state.gan, real_embeds, cfg.T, cfg.tau)
    fake_prime = _generate(state, past, Tensor(r_prime.data))
    diffs = [x - Tensor(future[:, t]) for t, x in enumerate(fake_prime)]
    l_content = ad.mean_abs(ad.concat(diffs, axis=1))
    g_content = ad.grad(l_content * cfg.lambda_c, [state.gan.store[n] for n in gen_names])

    state.opt_adv.step(state.gan.store, adv_grads)
    state.opt_content.step(state.gan.store, {n: g.data for n, g in zip(gen_names, g_content)})

    state.counters["gen_steps"] += 1
    return StepLosses(l_adv_gen=l_adv_gen.item(), l_r_rec=l_rec.item(),
                      l_content=l_content.item())


def recursive_step(state: GanTrainState, batch: list[DatasetWindow]) -> StepLosses:
    """Chained multi-chunk prediction: chunk a conditions on the previously
    predicted embeddings; each chunk's r comes from the discriminator run on
    the corresponding real window."""
    cfg = state.config
    past, future = _batch_arrays(batch, cfg)
    frames = np.concatenate([past, future], axis=1)
    if frames.shape[1] < cfg.T + cfg.alpha * cfg.pred_len:
        raise DataError(f"recursive_step: window of {frames.shape[1]} frames too short "
                        f"for T + alpha*pred_len = {cfg.T + cfg.alpha * cfg.pred_len}")

    with ad.no_grad():
        z_stream = embed_frames(state.pose_model, frames_to_tensors(past))
    total = None
    for a in range(cfg.alpha):
        start = cfg.T + a * cfg.pred_len
        real_window = frames[:, start - cfg.T:start + cfg.pred_len]
        with ad.no_grad():
            w_embeds = embed_frames(state.pose_model, frames_to_tensors(real_window))
            _, r_a = disc_heads(state.gan, w_embeds, cfg.T, cfg.tau)
        h = encode_sequence(state.gan, z_stream[-cfg.T:])
        z_hat = decode_sequence(state.gan, h, Tensor(r_a.data), z_stream[-1], cfg.pred_len)
        diffs = [state.pose_model.decode(z) - Tensor(frames[:, start + t])
                 for t, z in enumerate(z_hat)]
        l_a = ad.mean_abs(ad.concat(diffs, axis=1))
        total = l_a if total is None else total + l_a
        z_stream = z_stream + z_hat

    gen_names = state.gan.decoder_names() + state.gan.encoder_names()
    grads = ad.grad(total * cfg.lambda_c, [state.gan.store[n] for n in gen_names])
    state.opt_recursive.step(state.gan.store, {n: g.data for n, g in zip(gen_names, grads)})

    state.counters["recursive_steps"] += 1
    return StepLosses(l_content=total.item())


def save_checkpoint(path, *stores: ParameterStore) -> None:
    merged = ParameterStore()
    for store in stores:
        for name in store.names():
            merged.add(name, store[name].data)
    merged.save(path)


def load_into(store: ParameterStore, loaded: ParameterStore, prefix: str = "") -> None:
    """Copy checkpoint values into an existing store, validating shapes."""
    for name in store.names(prefix):
        if name not in loaded:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        src = loaded[name].data
        dst = store[name].data
        if src.shape != dst.shape:
            raise ValueError(f"checkpoint parameter {name!r} has shape {src.shape}, "
                             f"expected {dst.shape}")
        dst[...] = src


def train(dataset: list[MotionSequence], config: TrainConfig, rng: RandomSource,
          pose_model: PoseModel, out_dir=None) -> tuple[GanTrainState, list[str]]:
    """Run the full adversarial schedule: per outer iteration, m discriminator
    steps, one generator step, and (unless disabled) one recursive step.

    Returns the final state plus the loss-log lines (tab-separated, one per
    outer iteration). With ``out_dir`` set, writes ``losses.tsv`` and periodic
    ``gan.ckpt`` checkpoints there.
    """
    state = GanTrainState.create(config, pose_model, rng)
    windows = make_windows(dataset, config.T, config.alpha * config.pred_len,
                           config.batch_size, rng.child("windows"))
    out_dir = Path(out_dir) if out_dir is not None else None
    log_lines = ["\t".join(LOSS_LOG_COLUMNS)]
    ckpt_path = out_dir / "gan.ckpt" if out_dir else None

    def write_ckpt():
        if ckpt_path is not None:
            save_checkpoint(ckpt_path, state.pose_model.store, state.gan.store)

    write_ckpt()  # iteration-0 weights; the on-disk file is always last-good
    for it in range(1, config.k + 1):
        disc_losses = [disc_step(state, next(windows)) for _ in range(config.m)]
        gen_losses = gen_step(state, next(windows))
        if not config.no_recursive:
            recursive_step(state, next(windows))
        line = "\t".join([str(it)] + [
            f"{v:.10g}" for v in (
                float(np.mean([s.l_adv_disc for s in disc_losses])),
                float(np.mean([s.l_r_rec for s in disc_losses])),
                gen_losses.l_adv_gen,
                gen_losses.l_content,
                float(np.mean([s.l_gp for s in disc_losses])),
            )])
        values = [gen_losses.l_adv_gen, gen_losses.l_content] + [s.l_adv_disc for s in disc_losses]
        if not np.all(np.isfinite(values)):
            # leave the previously written checkpoint in place as last-good
            raise TrainingDiverged(f"gan training diverged at iteration {it}")
        log_lines.append(line)
        if out_dir and (it % config.checkpoint_every == 0 or it == config.k):
            write_ckpt()
            (out_dir / "losses.tsv").write_text("\n".join(log_lines) + "\n")
        if it % 50 == 0:
            logger.info("iter %d: %s", it, line)

    if out_dir:
        (out_dir / "losses.tsv").write_text("\n".join(log_lines) + "\n")
    return state, log_lines
