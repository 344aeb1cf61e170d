"""Reinforcement-learning controller for the per-relation threshold ``p``.

One controller per (relation, layer). After every epoch it sees the mean
distance between labeled fraud nodes and their kept neighbors. A drop in
that distance is rewarded with ``p += tau``; anything else (including a tie)
is penalized with ``p -= tau``. ``p`` is clipped to ``[tau, 1]``. The
controller freezes once the last 10 actions nearly cancel out, or at the
final epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ControllerStateError, ValidationError
from .graph import Adjacency

WINDOW = 10


@dataclass
class RelationController:
    p: float = 0.5
    tau: float = 0.02
    distance_history: list[float] = field(default_factory=list)
    action_history: list[float] = field(default_factory=list)
    p_history: list[float] = field(default_factory=list)
    terminated: bool = False
    frozen_p: float | None = None
    termination_epoch: int | None = None

    def __post_init__(self):
        if not 0.0 < self.tau < 0.5:
            raise ValidationError(f"tau must be in (0, 0.5), got {self.tau}")
        if not self.p_min <= self.p <= 1.0:
            raise ValidationError(f"initial p={self.p} outside [{self.p_min}, 1]")

    @property
    def p_min(self) -> float:
        return self.tau

    def observe(self, avg_distance: float) -> None:
        """Record this epoch's average distance."""
        self.distance_history.append(float(avg_distance))

    def action(self, epoch: int | None = None) -> float:
        """Compare the last two recorded distances, move ``p``, and return the signed step."""
        if self.terminated:
            raise ControllerStateError("controller has terminated; p is frozen")
        if len(self.distance_history) < 2:
            raise ControllerStateError("need two recorded distances before acting")
        prev, cur = self.distance_history[-2], self.distance_history[-1]
        if cur < prev:
            f = self.tau
            self.p = min(self.p + self.tau, 1.0)
        else:
            f = -self.tau
            self.p = max(self.p - self.tau, self.p_min)
        self.action_history.append(f)
        return f

    def check_termination(self, epoch: int, total_epochs: int) -> bool:
        if self.terminated:
            return True
        window = self.action_history[-WINDOW:]
        converged = epoch >= WINDOW and abs(sum(window)) <= 2 * self.tau
        if converged or epoch >= total_epochs:
            self.terminated = True
            self.frozen_p = self.p
            self.termination_epoch = epoch
        return self.terminated

    def step_epoch(self, avg_distance: float, epoch: int, total_epochs: int) -> None:
        """Full per-epoch update: record, act (from epoch 2 on), then test termination."""
        if self.terminated:
            return
        self.observe(avg_distance)
        if len(self.distance_history) >= 2:
            self.action(epoch)
        self.check_termination(epoch, total_epochs)
        self.p_history.append(self.p)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "tau": self.tau,
            "terminated": self.terminated,
            "frozen_p": self.frozen_p,
            "termination_epoch": self.termination_epoch,
            "distance_history": list(self.distance_history),
            "action_history": list(self.action_history),
            "p_history": list(self.p_history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RelationController":
        return cls(**d)


def replay(distances, tau: float = 0.02, p0: float = 0.5, total_epochs: int | None = None) -> list[float]:
    """p after each epoch when a fresh controller is fed ``distances`` in order."""
    ctl = RelationController(p=p0, tau=tau)
    total = len(distances) if total_epochs is None else total_epochs
    for e, d in enumerate(distances, start=1):
        ctl.step_epoch(d, e, total)
    return list(ctl.p_history)


def average_distance(filtered: Adjacency, kept_distances: np.ndarray, labels, train_mask) -> float:
    """Mean kept-neighbor distance of each labeled fraud training node, summed, over ``|V_train|``.

    Nodes with no kept neighbors contribute 0. ``kept_distances`` is aligned
    with ``filtered.indices``.
    """
    train_mask = np.asarray(train_mask, bool)
    n_train = int(train_mask.sum())
    if n_train == 0:
        raise ValidationError("no training nodes")
    deg = filtered.degrees
    rows = np.repeat(np.arange(deg.size), deg)
    sums = np.bincount(rows, weights=kept_distances, minlength=deg.size)
    per_node = np.where(deg > 0, sums / np.maximum(deg, 1), 0.0)
    pos = train_mask & (np.asarray(labels) == 1)
    return float(per_node[pos].sum() / n_train)
