"""Gradient-descent family optimizers driven by VDM-scaled gradients.

Every step scales the raw gradient by ``delta'(l)`` evaluated at the point
where the gradient is taken. Momentum methods keep the velocity in
parameter units::

    v <- m v + (eta_k * delta'(l)) grad l
    p <- p - v

which coincides with ``v <- m v + g; p <- p - eta v`` whenever eta is
constant, and makes a ``Scale(c)`` run bitwise identical to an identity run
at learning rate ``c * eta``.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import io
from .errors import DomainError, Diverged, NonFinite
from .vdm import DeformationSpec, Identity


class Method(str, Enum):
    GD = "gd"
    GDM = "gdm"
    NESTEROV = "nesterov"


class Status(str, Enum):
    COMPLETED = "completed"
    DIVERGED = "diverged"
    DOMAIN_ERROR = "domain_error"


@dataclass(frozen=True)
class OptimizerConfig:
    method: Method = Method.GD
    lr: float = 0.1
    momentum: float = 0.0
    milestones: tuple = ()
    gamma: float = 0.1
    max_steps: int = 100

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ValueError(f"learning rate must be positive, got {self.lr!r}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum!r}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"decay factor must lie in (0, 1], got {self.gamma!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        ms = self.milestones
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly ascending, got {ms}")
        if ms and (ms[0] < 0 or ms[-1] >= self.max_steps):
            raise ValueError(f"milestones must lie in [0, {self.max_steps}), got {ms}")

    def to_dict(self):
        return {
            "method": self.method.value,
            "lr": self.lr,
            "momentum": self.momentum,
            "milestones": list(self.milestones),
            "gamma": self.gamma,
            "max_steps": self.max_steps,
        }


def decay_factor(config: OptimizerConfig, k: int) -> float:
    return config.gamma ** bisect.bisect_right(config.milestones, k)


def scheduled_lr(config: OptimizerConfig, k: int) -> float:
    """Step decay: ``eta * gamma ** (number of milestones <= k)``."""
    return config.lr * decay_factor(config, k)


@dataclass(frozen=True)
class Evaluation:
    """Loss, deformation factor and raw gradient at one point."""

    loss: float
    deformed_loss: float
    ddelta: float
    grad: np.ndarray

    @property
    def deformed_grad(self):
        return self.ddelta * self.grad


def evaluate(objective, vdm: DeformationSpec, p) -> Evaluation:
    loss, grad = objective.loss_and_grad(p)
    loss = float(loss)
    if not math.isfinite(loss) or not np.isfinite(grad).all():
        raise NonFinite(f"non-finite loss or gradient at {np.asarray(p).tolist()}")
    return Evaluation(loss, vdm.value(loss), vdm.derivative(loss), np.asarray(grad, dtype=float))


def vdm_gradient(objective, vdm: DeformationSpec, p):
    """``(delta'(l) grad l, l, delta'(l))`` at p."""
    ev = evaluate(objective, vdm, p)
    return ev.deformed_grad, ev.loss, ev.ddelta


@dataclass(frozen=True)
class OptimizerState:
    p: np.ndarray
    v: np.ndarray
    k: int = 0
    lr: float = float("nan")

    @classmethod
    def initial(cls, p0, config=None):
        p0 = np.array(p0, dtype=float)
        if not np.all(np.isfinite(p0)):
            raise ValueError("initial parameters must be finite")
        lr = scheduled_lr(config, 0) if config is not None else float("nan")
        return cls(p0, np.zeros_like(p0), 0, lr)


def step(state, config, objective, vdm=None, evaluation=None, schedule_k=None):
    """One VDM-scaled update; returns ``(new_state, evaluation used)``.

    ``evaluation`` may carry a precomputed evaluation at ``state.p`` (ignored
    for Nesterov, whose gradient point is the look-ahead). ``schedule_k``
    replaces the step index for the decay schedule, e.g. the epoch in
    minibatch training.

    The step coefficient is ``(eta * delta') * decay``, so Scale(c) at eta and
    Identity at c * eta multiply identical floats, milestones or not.
    """
    vdm = vdm or Identity()
    decay = decay_factor(config, state.k if schedule_k is None else schedule_k)
    m = config.momentum
    if config.method is Method.NESTEROV:
        evaluation = evaluate(objective, vdm, state.p - m * state.v)
    elif evaluation is None:
        evaluation = evaluate(objective, vdm, state.p)
    coef = config.lr * evaluation.ddelta * decay
    if config.method is Method.GD:
        v = state.v
        p = state.p - coef * evaluation.grad
    else:
        v = m * state.v + coef * evaluation.grad
        p = state.p - v
    if not np.isfinite(p).all():
        raise Diverged(f"parameters became non-finite at step {state.k + 1}")
    return OptimizerState(p, v, state.k + 1, config.lr * decay), evaluation


TRAJECTORY_FIELDS = ("loss", "deformed_loss", "ddelta_dloss", "grad_norm", "lr")


@dataclass
class TrajectoryRecord:
    """Per-step log. Row k describes the iterate p_k and the learning rate used to leave it.

    ``grad_norm`` is the norm of the raw gradient; the deformed gradient norm
    is ``ddelta * grad_norm``.
    """

    method: Method
    steps: list = field(default_factory=list)
    params: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    deformed_loss: list = field(default_factory=list)
    ddelta: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    status: Status = Status.COMPLETED
    message: str = ""
    start: np.ndarray | None = None  # p0, kept even when the first evaluation fails

    def append(self, k, p, ev: Evaluation, lr):
        self.steps.append(k)
        self.params.append(np.array(p, dtype=float))
        self.loss.append(ev.loss)
        self.deformed_loss.append(ev.deformed_loss)
        self.ddelta.append(ev.ddelta)
        self.grad_norm.append(math.sqrt(float(ev.grad @ ev.grad)))
        self.lr.append(lr)

    def __len__(self):
        return len(self.steps)

    @property
    def final_params(self):
        return self.params[-1] if self.params else self.start

    @property
    def final_loss(self):
        return self.loss[-1] if self.loss else float("nan")

    def header(self):
        dim = len(self.final_params) if self.final_params is not None else 0
        return ["step", *[f"p{i + 1}" for i in range(dim)], *TRAJECTORY_FIELDS]

    def rows(self):
        for i, k in enumerate(self.steps):
            yield [k, *self.params[i].tolist(), self.loss[i], self.deformed_loss[i],
                   self.ddelta[i], self.grad_norm[i], self.lr[i]]

    def to_csv(self, path):
        io.write_csv(path, self.header(), self.rows())


def run(config: OptimizerConfig, objective, vdm: DeformationSpec | None, p0) -> TrajectoryRecord:
    """Iterate ``step`` for ``config.max_steps`` steps or until a terminal status.

    Domain violations and divergence end the run and are recorded in the
    returned trajectory's ``status``; they are never raised.
    """
    vdm = vdm or Identity()
    state = OptimizerState.initial(p0, config)
    record = TrajectoryRecord(config.method, start=state.p.copy())
    try:
        ev = evaluate(objective, vdm, state.p)
        while True:
            record.append(state.k, state.p, ev, scheduled_lr(config, state.k))
            if state.k >= config.max_steps:
                break
            state, _ = step(state, config, objective, vdm, evaluation=ev)
            try:
                ev = evaluate(objective, vdm, state.p)
            except NonFinite as exc:
                raise Diverged(str(exc)) from exc
    except DomainError as exc:
        record.status, record.message = Status.DOMAIN_ERROR, str(exc)
    except (Diverged, NonFinite) as exc:
        record.status, record.message = Status.DIVERGED, str(exc)
    return record
