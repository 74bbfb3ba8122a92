"""Sequence-level networks: intrinsic encoder, residual decoder conditioned
on an extrinsic factor, the dual-head bidirectional discriminator, and the
separate critic.

The decoder is residual: each step's readout is a delta added onto the
previous embedding, and each step's input is the concatenation of the
encoder's final hidden state, the extrinsic factor, and the chained
previous embedding. The discriminator runs bidirectionally over per-frame
pose embeddings and reads out from four hidden states: both final states
plus the two states flanking the past/future boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .data import MotionSequence
from .nets import (LstmSpec, MlpSpec, init_lstm, init_mlp, lstm_step,
                   mlp_forward, run_bidirectional, run_sequence, uniform_init)
from .params import ParameterStore, RandomSource
from .pose import PoseModel

R_DIM = 8
HIDDEN_DIM = 512


@dataclass(frozen=True)
class GanDims:
    embed_dim: int = 32
    r_dim: int = R_DIM
    hidden_dim: int = HIDDEN_DIM
    head_hidden: int = 256
    encoder_chaining: bool = True  # feed the intrinsic state at every decoder step

    @property
    def dec_input_dim(self) -> int:
        chained = self.hidden_dim if self.encoder_chaining else 0
        return chained + self.r_dim + self.embed_dim


@dataclass
class GanModel:
    dims: GanDims
    store: ParameterStore
    enc: LstmSpec
    dec: LstmSpec
    disc_fwd: LstmSpec
    disc_bwd: LstmSpec
    disc_head: MlpSpec
    critic_fwd: LstmSpec
    critic_bwd: LstmSpec
    critic_head: MlpSpec

    @classmethod
    def build(cls, rng: RandomSource, dims: GanDims) -> "GanModel":
        store = ParameterStore()
        enc = LstmSpec(dims.embed_dim, dims.hidden_dim, "enc.lstm")
        dec = LstmSpec(dims.dec_input_dim, dims.hidden_dim, "dec.lstm")
        disc_fwd = LstmSpec(dims.embed_dim, dims.hidden_dim, "disc.fwd")
        disc_bwd = LstmSpec(dims.embed_dim, dims.hidden_dim, "disc.bwd")
        disc_head = MlpSpec((4 * dims.hidden_dim, dims.head_hidden), prefix="disc.head")
        critic_fwd = LstmSpec(dims.embed_dim, dims.hidden_dim, "critic.fwd")
        critic_bwd = LstmSpec(dims.embed_dim, dims.hidden_dim, "critic.bwd")
        critic_head = MlpSpec((4 * dims.hidden_dim, dims.head_hidden), prefix="critic.head")
        for spec in (enc, dec, disc_fwd, disc_bwd, critic_fwd, critic_bwd):
            init_lstm(store, spec, rng)
        for spec in (disc_head, critic_head):
            init_mlp(store, spec, rng)

        init_in = dims.hidden_dim + dims.r_dim
        store.add("dec.h0.w", uniform_init(rng, (init_in, dims.hidden_dim), init_in))
        store.add("dec.h0.b", np.zeros(dims.hidden_dim))
        store.add("dec.c0.w", uniform_init(rng, (init_in, dims.hidden_dim), init_in))
        store.add("dec.c0.b", np.zeros(dims.hidden_dim))
        # zero readout => the decoder starts as "repeat the last embedding"
        store.add("dec.out.w", np.zeros((dims.hidden_dim, dims.embed_dim)))
        store.add("dec.out.b", np.zeros(dims.embed_dim))

        hh = dims.head_hidden
        store.add("disc.wgan.w", uniform_init(rng, (hh, 1), hh))
        store.add("disc.wgan.b", np.zeros(1))
        store.add("disc.r.w", uniform_init(rng, (hh, dims.r_dim), hh))
        store.add("disc.r.b", np.zeros(dims.r_dim))
        store.add("critic.out.w", uniform_init(rng, (hh, 1), hh))
        store.add("critic.out.b", np.zeros(1))
        return cls(dims, store, enc, dec, disc_fwd, disc_bwd, disc_head,
                   critic_fwd, critic_bwd, critic_head)

    def generator_names(self) -> list[str]:
        return self.store.names("enc.") + self.store.names("dec.")

    def encoder_names(self) -> list[str]:
        return self.store.names("enc.")

    def decoder_names(self) -> list[str]:
        return self.store.names("dec.")

    def discriminator_names(self) -> list[str]:
        return self.store.names("disc.")

    def critic_names(self) -> list[str]:
        return self.store.names("critic.")


@dataclass
class DiscriminatorOutput:
    wgan_score: float
    r_hat: np.ndarray


def embed_frames(pose_model: PoseModel, frames: list[Tensor]) -> list[Tensor]:
    return [pose_model.encode(x) for x in frames]


def frames_to_tensors(frames: np.ndarray) -> list[Tensor]:
    """[L, D] or [B, L, D] array -> list of L constant [B, D] tensors."""
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    return [Tensor(arr[:, t, :]) for t in range(arr.shape[1])]


def encode_sequence(model: GanModel, z_seq: list[Tensor]) -> Tensor:
    """Intrinsic factor: final hidden state of the encoder over embeddings."""
    return run_sequence(z_seq, model.enc, model.store)[-1]


def decode_sequence(model: GanModel, h: Tensor, r: Tensor, z_prev: Tensor,
                    length: int) -> list[Tensor]:
    """Residual rollout of ``length`` embeddings from the last observed one."""
    if length < 1:
        raise ShapeError("decode_sequence: length must be >= 1")
    store = model.store
    hr = ad.concat([h, r], axis=1)
    state_h = ad.tanh(ad.matmul(hr, store["dec.h0.w"]) + store["dec.h0.b"])
    state_c = ad.tanh(ad.matmul(hr, store["dec.c0.w"]) + store["dec.c0.b"])
    out = []
    for _ in range(length):
        parts = [h, r, z_prev] if model.dims.encoder_chaining else [r, z_prev]
        x_in = ad.concat(parts, axis=1)
        state_h, state_c = lstm_step(x_in, state_h, state_c, model.dec, store)
        delta = ad.matmul(state_h, store["dec.out.w"]) + store["dec.out.b"]
        z_prev = z_prev + delta
        out.append(z_prev)
    return out


def rollout(model: GanModel, pose_model: PoseModel, past: list[Tensor],
            r: Tensor, length: int) -> tuple[list[Tensor], list[Tensor]]:
    """Embed the past, encode, decode, and project back to pose space."""
    z_past = embed_frames(pose_model, past)
    h = encode_sequence(model, z_past)
    z_hat = decode_sequence(model, h, r, z_past[-1], length)
    x_hat = [pose_model.decode(z) for z in z_hat]
    return z_hat, x_hat


def predict_motion(model: GanModel, pose_model: PoseModel, past: MotionSequence,
                   r: np.ndarray, length: int, expected_past_len: int | None = None) -> MotionSequence:
    """Deterministic future prediction for one sequence and one extrinsic factor."""
    if expected_past_len is not None and len(past) != expected_past_len:
        raise ShapeError(f"predict_motion: past has {len(past)} frames, expected {expected_past_len}")
    r = np.asarray(r, dtype=np.float64).reshape(1, -1)
    if r.shape[1] != model.dims.r_dim:
        raise ShapeError(f"predict_motion: r has {r.shape[1]} values, expected {model.dims.r_dim}")
    with ad.no_grad():
        _, x_hat = rollout(model, pose_model, frames_to_tensors(past.frames), Tensor(r), length)
    frames = np.stack([x.data[0] for x in x_hat])
    return MotionSequence(frames, label=past.label, fps=past.fps)


def readout_indices(n: int, past_len: int, tau: int) -> tuple[tuple[str, int], ...]:
    """0-based storage indices of the four readout states.

    In 1-based sequence time these are: forward T' (final) and T + tau;
    backward 1 (final) and T - 1 - tau.
    """
    if n < past_len + tau + 1:
        raise ShapeError(f"discriminator: sequence of {n} frames shorter than "
                         f"T + tau + 1 = {past_len + tau + 1}")
    if past_len - 2 - tau < 0:
        raise ShapeError(f"discriminator: tau={tau} too large for past length {past_len}")
    return (("fwd", n - 1), ("bwd", 0), ("fwd", past_len + tau - 1), ("bwd", past_len - 2 - tau))


def _readout(model: GanModel, embeds: list[Tensor], past_len: int, tau: int,
             fwd_spec: LstmSpec, bwd_spec: LstmSpec, head_spec: MlpSpec) -> Tensor:
    picks = readout_indices(len(embeds), past_len, tau)
    fwd, bwd = run_bidirectional(embeds, fwd_spec, bwd_spec, model.store)
    states = {"fwd": fwd, "bwd": bwd}
    picked = ad.concat([states[which][i] for which, i in picks], axis=1)
    return ad.tanh(mlp_forward(picked, head_spec, model.store))


def disc_heads(model: GanModel, embeds: list[Tensor], past_len: int,
               tau: int) -> tuple[Tensor, Tensor]:
    """WGAN score [B,1] (linear) and regressed extrinsic factor [B,r_dim]."""
    hidden = _readout(model, embeds, past_len, tau, model.disc_fwd, model.disc_bwd, model.disc_head)
    store = model.store
    wgan = ad.matmul(hidden, store["disc.wgan.w"]) + store["disc.wgan.b"]
    r_hat = ad.matmul(hidden, store["disc.r.w"]) + store["disc.r.b"]
    return wgan, r_hat


def critic_logit(model: GanModel, embeds: list[Tensor], past_len: int, tau: int) -> Tensor:
    hidden = _readout(model, embeds, past_len, tau, model.critic_fwd, model.critic_bwd, model.critic_head)
    return ad.matmul(hidden, model.store["critic.out.w"]) + model.store["critic.out.b"]


def discriminator_forward(model: GanModel, pose_model: PoseModel, full_seq: MotionSequence,
                          past_len: int, tau: int) -> DiscriminatorOutput:
    with ad.no_grad():
        embeds = embed_frames(pose_model, frames_to_tensors(full_seq.frames))
        wgan, r_hat = disc_heads(model, embeds, past_len, tau)
    return DiscriminatorOutput(float(wgan.data[0, 0]), r_hat.data[0].copy())


def critic_forward(model: GanModel, pose_model: PoseModel, full_seq: MotionSequence,
                   past_len: int, tau: int) -> float:
    with ad.no_grad():
        embeds = embed_frames(pose_model, frames_to_tensors(full_seq.frames))
        logit = critic_logit(model, embeds, past_len, tau)
        return float(ad.sigmoid(logit).data[0, 0])


def infer_r(model: GanModel, pose_model: PoseModel, frames: np.ndarray,
            past_len: int, tau: int) -> np.ndarray:
    """r' for a real full sequence, via the discriminator's regression head."""
    with ad.no_grad():
        embeds = embed_frames(pose_model, frames_to_tensors(frames))
        _, r_hat = disc_heads(model, embeds, past_len, tau)
    return r_hat.data[0].copy()
