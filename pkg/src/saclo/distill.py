"""Teacher-to-student distillation primitives: stacked observation history,
the combined imitation+RL objective, and teacher-alignment reward terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HISTORY_LEN


class HistoryStack:
    """Ring buffer of the last `length` observable-state vectors.

    Emissions are flat concatenations ordered oldest to newest. At reset the
    buffer is pre-filled with copies of the first observation, so the
    emission length is constant from the first step.
    """

    def __init__(self, x_dim: int, length: int = HISTORY_LEN):
        if length < 1 or x_dim < 1:
            raise ValueError("history length and x dimension must be >= 1")
        self.x_dim = x_dim
        self.length = length
        self._buf = np.zeros((length, x_dim))
        self._filled = False

    @property
    def out_dim(self) -> int:
        return self.length * self.x_dim

    def reset(self, x0: np.ndarray) -> np.ndarray:
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (self.x_dim,):
            raise ValueError(f"expected x of dim {self.x_dim}, got {x0.shape}")
        self._buf[:] = x0
        self._filled = True
        return self.emit()

    def push(self, x: np.ndarray) -> np.ndarray:
        """Append the newest observation, evict the oldest, emit the stack."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.x_dim,):
            raise ValueError(f"expected x of dim {self.x_dim}, got {x.shape}")
        if not self._filled:
            return self.reset(x)
        self._buf[:-1] = self._buf[1:]
        self._buf[-1] = x
        return self.emit()

    def load(self, flat: np.ndarray) -> np.ndarray:
        """Restore the buffer from a previously emitted flat stack."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.out_dim,):
            raise ValueError(f"expected a flat stack of length {self.out_dim}")
        self._buf[:] = flat.reshape(self.length, self.x_dim)
        self._filled = True
        return self.emit()

    def emit(self) -> np.ndarray:
        return self._buf.ravel().copy()


@dataclass(frozen=True)
class DistillConfig:
    """Weights for the combined objective and the alignment shaping terms."""

    alpha: float = 1.0          # imitation weight; decays linearly to 0
    beta: float = 0.5           # RL weight
    align_weight: float = 0.5   # reward weight for each alignment term
    align_decay_frac: float = 0.5  # fraction of training after which shaping is 0
    alpha_decay: bool = True

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("at least one of alpha/beta must be positive")

    def alpha_at(self, progress: float) -> float:
        if not self.alpha_decay:
            return self.alpha
        return self.alpha * max(0.0, 1.0 - progress)

    def align_scale_at(self, progress: float) -> float:
        if self.align_decay_frac <= 0:
            return 0.0
        return max(0.0, 1.0 - progress / self.align_decay_frac)


def distillation_loss(teacher_actions: np.ndarray, student_actions: np.ndarray) -> float:
    """Mean over the batch of the squared L2 distance between action vectors."""
    a_star = np.atleast_2d(np.asarray(teacher_actions, dtype=np.float64))
    a = np.atleast_2d(np.asarray(student_actions, dtype=np.float64))
    if a_star.shape != a.shape:
        raise ValueError(f"action shapes differ: {a_star.shape} vs {a.shape}")
    d = a_star - a
    return float(np.mean(np.sum(d * d, axis=-1)))


def total_loss(distill: float, ppo: float, alpha: float, beta: float) -> float:
    if alpha < 0 or beta < 0:
        raise ValueError("loss weights must be non-negative")
    return alpha * distill + beta * ppo


def alignment_rewards(a_star: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    """Shaping terms keeping the student near the teacher: a squared-distance
    kernel and an exponentiated cosine similarity.

    Zero-norm degenerate cases return the neutral direction reward exp(0)=1.
    """
    a_star = np.asarray(a_star, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if a_star.shape != a.shape:
        raise ValueError("action vectors must have the same shape")
    d = a_star - a
    r_action = math.exp(-float(np.dot(d, d)) / 0.5)
    n1 = float(np.linalg.norm(a))
    n2 = float(np.linalg.norm(a_star))
    if n1 == 0.0 or n2 == 0.0:
        return r_action, 1.0
    cos = float(np.dot(a, a_star)) / (n1 * n2)
    return r_action, math.exp(cos)
