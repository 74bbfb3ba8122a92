"""Adversarial pose autoencoder: a per-frame embedding whose prior is N(0,1).

The encoder is trained with the cyclic reconstruction loss only; the
decoder additionally chases an adversarial term from a small pose
discriminator, keeping decoded samples of the prior on the data manifold
so that straight lines in embedding space decode to plausible poses.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import wrap_angles
from .nets import MlpSpec, init_mlp, mlp_forward
from .params import Adam, ParameterStore, RandomSource

logger = logging.getLogger("motionforge.pose")

POSE_DIM = 54
EMBED_DIM = 32


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; training aborted."""


def bce_with_logits(logits: Tensor, target: float) -> Tensor:
    """Numerically stable binary cross entropy, mean over the batch."""
    # max(s,0) - s*y + log(1 + exp(-|s|)), with max(s,0) = (s + |s|)/2
    s, a = logits, ad.abs_(logits)
    per = (s + a) * 0.5 - s * target + ad.log(ad.exp(-a) + 1.0)
    return ad.mean(per)


@dataclass
class PoseModel:
    """Encoder/decoder/discriminator triple over one parameter store."""

    pose_dim: int
    embed_dim: int
    store: ParameterStore
    en: MlpSpec | None
    de: MlpSpec | None
    disc: MlpSpec | None

    @classmethod
    def build(cls, rng: RandomSource, pose_dim: int = POSE_DIM,
              embed_dim: int = EMBED_DIM, hidden: int = 64) -> "PoseModel":
        store = ParameterStore()
        en = MlpSpec((pose_dim, hidden, hidden, embed_dim), prefix="pose.en")
        de = MlpSpec((embed_dim, hidden, hidden, pose_dim), prefix="pose.de")
        disc = MlpSpec((pose_dim, hidden, 1), prefix="pose.disc")
        for spec in (en, de, disc):
            init_mlp(store, spec, rng)
        return cls(pose_dim, embed_dim, store, en, de, disc)

    @classmethod
    def identity(cls, pose_dim: int) -> "PoseModel":
        """Pass-through model for the no-pose-embedding ablation."""
        return cls(pose_dim, pose_dim, ParameterStore(), None, None, None)

    @property
    def is_identity(self) -> bool:
        return self.en is None

    def encode(self, x: Tensor) -> Tensor:
        return x if self.is_identity else mlp_forward(x, self.en, self.store)

    def decode(self, z: Tensor) -> Tensor:
        return z if self.is_identity else mlp_forward(z, self.de, self.store)

    def disc_logits(self, x: Tensor) -> Tensor:
        return mlp_forward(x, self.disc, self.store)


def encode_pose(model: PoseModel, pose: np.ndarray) -> np.ndarray:
    with ad.no_grad():
        return model.encode(Tensor(np.asarray(pose)[None, :])).data[0]


def decode_pose(model: PoseModel, code: np.ndarray) -> np.ndarray:
    with ad.no_grad():
        return model.decode(Tensor(np.asarray(code)[None, :])).data[0]


@dataclass
class PoseAaeLosses:
    l_cyc: float
    l_adv_de: float
    l_adv_disc: float
    lam: float


def _cycle_loss(model: PoseModel, x: Tensor, z: Tensor) -> Tensor:
    x_hat = model.decode(model.encode(x))
    z_hat = model.encode(model.decode(z))
    return ad.mean_abs(x - x_hat) + ad.mean_abs(z - z_hat)


def pose_cycle_losses(model: PoseModel, batch_x: np.ndarray, batch_z: np.ndarray,
                      lam: float = 0.01) -> PoseAaeLosses:
    """Cyclic reconstruction plus both sides of the adversarial game."""
    if batch_x.shape[0] == 0 or batch_z.shape[0] == 0:
        raise ValueError("pose_cycle_losses: empty batch")
    with ad.no_grad():
        x, z = Tensor(batch_x), Tensor(batch_z)
        l_cyc = _cycle_loss(model, x, z)
        fake = model.decode(z)
        real_logits = model.disc_logits(x)
        fake_logits = model.disc_logits(fake)
        l_adv_disc = bce_with_logits(real_logits, 1.0) + bce_with_logits(fake_logits, 0.0)
        l_adv_de = bce_with_logits(fake_logits, 1.0)
    return PoseAaeLosses(l_cyc.item(), l_adv_de.item(), l_adv_disc.item(), lam)


def train_pose_embedding(poses: np.ndarray, rng: RandomSource, *,
                         pose_dim: int | None = None, embed_dim: int = EMBED_DIM,
                         hidden: int = 64, iters: int = 200, batch_size: int = 32,
                         lr: float = 0.001, lam: float = 0.01,
                         log_every: int = 0) -> tuple[PoseModel, list[PoseAaeLosses]]:
    """Adversarial autoencoder training over a pool of pose vectors.

    Encoder updates see only the cyclic loss; decoder updates see the cyclic
    loss plus ``lam`` times its adversarial term; the pose discriminator is
    trained in the same iteration.
    """
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 2 or poses.shape[0] == 0:
        raise ValueError("train_pose_embedding: need a nonempty [n, pose_dim] array")
    if pose_dim is None:
        pose_dim = poses.shape[1]
    model = PoseModel.build(rng.child("init"), pose_dim, embed_dim, hidden)
    opt_en = Adam(lr=lr)
    opt_de = Adam(lr=lr)
    opt_disc = Adam(lr=lr)
    data_rng = rng.child("batches")
    prior_rng = rng.child("prior")
    log: list[PoseAaeLosses] = []
    en_names = model.store.names("pose.en")
    de_names = model.store.names("pose.de")
    disc_names = model.store.names("pose.disc")
    for it in range(iters):
        idx = data_rng.integers(0, poses.shape[0], batch_size)
        x = Tensor(poses[idx])
        z = Tensor(prior_rng.normal((batch_size, embed_dim)))

        l_cyc = _cycle_loss(model, x, z)
        fake = model.decode(z)
        fake_logits = model.disc_logits(fake)
        l_adv_de = bce_with_logits(fake_logits, 1.0)

        en_params = [model.store[n] for n in en_names]
        de_params = [model.store[n] for n in de_names]
        g_en = ad.grad(l_cyc, en_params)
        g_de = ad.grad(l_cyc + l_adv_de * lam, de_params)
        opt_en.step(model.store, {n: g.data for n, g in zip(en_names, g_en)})
        opt_de.step(model.store, {n: g.data for n, g in zip(de_names, g_de)})

        # discriminator sees the decoder's current output, detached
        real_logits = model.disc_logits(x.detach())
        fake_logits_d = model.disc_logits(fake.detach())
        l_adv_disc = bce_with_logits(real_logits, 1.0) + bce_with_logits(fake_logits_d, 0.0)
        disc_params = [model.store[n] for n in disc_names]
        g_disc = ad.grad(l_adv_disc, disc_params)
        opt_disc.step(model.store, {n: g.data for n, g in zip(disc_names, g_disc)})

        entry = PoseAaeLosses(l_cyc.item(), l_adv_de.item(), l_adv_disc.item(), lam)
        if not np.isfinite(entry.l_cyc):
            raise TrainingDiverged(f"pose training diverged at iteration {it}: l_cyc={entry.l_cyc}")
        log.append(entry)
        if log_every and (it + 1) % log_every == 0:
            logger.info("pose iter %d l_cyc=%.5f l_adv_de=%.5f l_adv_disc=%.5f",
                        it + 1, entry.l_cyc, entry.l_adv_de, entry.l_adv_disc)
    return model, log


def interpolate_poses(model: PoseModel, x_a: np.ndarray, x_b: np.ndarray,
                      steps: int) -> np.ndarray:
    """Decode linear blends between the two embeddings; endpoints are the
    decoded reconstructions of the inputs."""
    if steps < 2:
        raise ValueError("interpolate_poses: steps must be >= 2")
    z_a = encode_pose(model, x_a)
    z_b = encode_pose(model, x_b)
    out = []
    for w in np.linspace(0.0, 1.0, steps):
        z = (1.0 - w) * z_a + w * z_b
        out.append(wrap_angles(decode_pose(model, z)))
    return np.stack(out)
