"""Adam, Glorot initialization and the seeded RNG plumbing shared by all stochastic code."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


def make_rng(*key) -> np.random.Generator:
    """Counter-based Philox stream keyed by a tuple of ints/strings.

    Strings are hashed, so ``make_rng(7, 3, "init")`` is stable across runs and platforms.
    """
    words = []
    for k in key:
        if isinstance(k, str):
            words.append(int.from_bytes(hashlib.sha256(k.encode()).digest()[:4], "little"))
        else:
            words.append(int(k))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def derive_seed(*key) -> int:
    """A 63-bit integer seed that is a pure function of ``key``."""
    return int(make_rng(*key).integers(0, 2**63 - 1))


def glorot_init(shape: Tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    if len(shape) != 2:
        raise ValueError(f"glorot_init expects a 2-D shape, got {shape}")
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class OptimizerState:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: OptimizerState) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
    """One bias-corrected Adam update. Returns new arrays; inputs are left untouched."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name!r}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {p.shape}")
        m = b1 * state.first_moment.get(name, np.zeros_like(p)) + (1.0 - b1) * g
        v = b2 * state.second_moment.get(name, np.zeros_like(p)) + (1.0 - b2) * g * g
        m_new[name], v_new[name] = m, v
        new_params[name] = p - state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return new_params, OptimizerState(state.learning_rate, b1, b2, state.eps, t, m_new, v_new)
