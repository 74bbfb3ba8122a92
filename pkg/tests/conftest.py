"""Shared oracles and fixtures.

The finite-difference oracle here is the independent check for every
reverse-mode gradient in the suite: it only ever calls forward
evaluations, never the engine's backward pass.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from motionforge.autodiff import Tensor
from motionforge.data import synth_dataset
from motionforge.params import RandomSource
from motionforge.pose import train_pose_embedding
from motionforge.training import TrainConfig, train

FD_H = 1e-5
FD_TOL = 1e-4


def finite_diff(loss_fn, tensors: list[Tensor], h: float = FD_H) -> list[np.ndarray]:
    """Central-difference gradients of a scalar-valued ``loss_fn()`` with
    respect to each tensor's underlying buffer."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        it = np.nditer(t.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = t.data[idx]
            t.data[idx] = orig + h
            fp = float(loss_fn().data)
            t.data[idx] = orig - h
            fm = float(loss_fn().data)
            t.data[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / denom))


def assert_grads_match(loss_fn, tensors: list[Tensor], grads, tol: float = FD_TOL):
    fd = finite_diff(loss_fn, tensors)
    for g, f in zip(grads, fd):
        assert max_rel_err(g.data, f) < tol


def desk_config(**overrides) -> TrainConfig:
    """Reduced-dimension configuration used across the heavier tests."""
    base = dict(batch_size=8, T=10, pred_len=5, tau=1, alpha=2, m=2, k=300,
                pose_dim=8, embed_dim=6, r_dim=4, hidden_dim=24, head_hidden=16,
                pose_hidden=24, pose_iters=300, lr=0.002, pose_lr=0.003, seed=1,
                checkpoint_every=100)
    base.update(overrides)
    return TrainConfig(**base)


def tiny_config(**overrides) -> TrainConfig:
    """Very small shapes for gradient checks and unit tests."""
    base = dict(batch_size=2, T=4, pred_len=2, tau=1, alpha=2, m=2, k=2,
                pose_dim=3, embed_dim=3, r_dim=2, hidden_dim=5, head_hidden=4,
                pose_hidden=5, pose_iters=3, lr=0.01, pose_lr=0.01, seed=7)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def desk_run():
    """One full desk-scale training run shared by the heavy tests:
    5 synthetic categories, pose pretraining, 300 outer GAN iterations."""
    cfg = desk_config()
    rng = RandomSource(3)
    data = synth_dataset(5, 8, 120, 0.02, rng.child("data"), channels=cfg.pose_dim)
    holdout = synth_dataset(5, 3, 60, 0.02, rng.child("holdout"), channels=cfg.pose_dim)
    pool = np.concatenate([s.frames for s in data])
    t0 = time.monotonic()
    pose_model, pose_log = train_pose_embedding(
        pool, rng.child("pose"), pose_dim=cfg.pose_dim, embed_dim=cfg.embed_dim,
        hidden=cfg.pose_hidden, iters=cfg.pose_iters, lr=cfg.pose_lr, lam=cfg.lambda_adv)
    state, log_lines = train(data, cfg, rng.child("gan"), pose_model)
    return {
        "config": cfg,
        "rng_seed": 3,
        "data": data,
        "holdout": holdout,
        "pose_model": pose_model,
        "pose_log": pose_log,
        "state": state,
        "log_lines": log_lines,
        "train_seconds": time.monotonic() - t0,
    }
