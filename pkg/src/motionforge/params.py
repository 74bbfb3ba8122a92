"""Deterministic randomness, named parameter storage, Adam, checkpoints.

A ``ParameterStore`` holds the learnable weights of one or more networks
under dotted names. Optimizer moment buffers live inside each ``Adam``
instance rather than the store, so several optimizers (one per training
objective) can share the same weights without clobbering each other's
state.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tensor

CHECKPOINT_HEADER = "motionforge-ckpt v1"


class RandomSource:
    """Seeded PCG64 stream; identical seed + call sequence is bit-exact."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(size=shape)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def child(self, name: str) -> "RandomSource":
        """Derive an independent, reproducible stream for a named purpose."""
        digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
        return RandomSource(int.from_bytes(digest[:8], "little"))


def sample_normal(rng: RandomSource, dims) -> np.ndarray:
    """I.i.d. standard-normal values with the given shape."""
    return rng.normal(dims)


class ParameterStore:
    """Named, shaped float64 weight arrays wrapped as autodiff leaves."""

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._entries:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.asarray(value, dtype=np.float64))
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._entries if n.startswith(prefix)]

    def tensors(self, prefix: str = "") -> list[Tensor]:
        return [self._entries[n] for n in self.names(prefix)]

    def checksum(self, prefix: str = "") -> str:
        h = hashlib.sha256()
        for name in self.names(prefix):
            h.update(name.encode())
            h.update(self._entries[name].data.tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(CHECKPOINT_HEADER + "\n")
            for name in self._entries:
                arr = self._entries[name].data
                dims = " ".join(str(d) for d in arr.shape)
                f.write(f"{name} {arr.ndim} {dims}".rstrip() + "\n")
                f.write(" ".join(f"{v:.17g}" for v in arr.ravel()) + "\n")

    @classmethod
    def load(cls, path) -> "ParameterStore":
        store = cls()
        with open(path) as f:
            header = f.readline().rstrip("\n")
            if header != CHECKPOINT_HEADER:
                raise ValueError(f"not a motionforge checkpoint: header {header!r}")
            while True:
                meta = f.readline()
                if not meta:
                    break
                meta = meta.split()
                name, ndim = meta[0], int(meta[1])
                shape = tuple(int(d) for d in meta[2:2 + ndim])
                values = np.array(f.readline().split(), dtype=np.float64)
                expected = int(np.prod(shape)) if shape else 1
                if values.size != expected:
                    raise ValueError(f"checkpoint entry {name!r}: value count does not match dims")
                store.add(name, values.reshape(shape))
        return store


@dataclass
class Adam:
    """Adam with bias correction; one shared step count per instance."""

    lr: float = 0.00005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _m: dict[str, np.ndarray] = field(default_factory=dict)
    _v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, store: ParameterStore, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name in grads:
            if name not in store:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            w = store[name].data
            g = np.asarray(grads[name], dtype=np.float64)
            if g.shape != w.shape:
                raise ShapeError(f"adam: grad shape {g.shape} != weight shape {w.shape} for {name!r}")
            m = self._m.setdefault(name, np.zeros_like(w))
            v = self._v.setdefault(name, np.zeros_like(w))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            w -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
