"""Fixed-step RK4 on the simplex with floor-clamp projection at every stage."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import InputSignal, StateVector, vector_field
from .hypergraph import HyperTensorSet

Field = Callable[[np.ndarray, float], np.ndarray]


class ProjectionError(ValueError):
    pass


class StepError(RuntimeError):
    def __init__(self, message: str, t: float):
        super().__init__(f"t={t:.6g}: {message}")
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-2
    t_final: float = 20.0
    projection_floor: float = 1e-12
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final >= self.dt:
            raise ValueError(f"t_final must be at least dt ({self.dt}), got {self.t_final}")
        if not 0 < self.projection_floor <= 1e-8:
            raise ValueError(f"projection_floor must lie in (0, 1e-8], got {self.projection_floor}")
        if self.record_every < 1:
            raise ValueError("record_every must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class Trajectory:
    times: np.ndarray  # (N,)
    states: np.ndarray  # (N, n)
    mass_residual: np.ndarray
    entropy: np.ndarray  # NaN when no equilibrium hint was given
    entropy_rate: np.ndarray
    distance: np.ndarray
    field_norm: np.ndarray  # sup-norm of dx/dt at each sample

    def __len__(self):
        return self.times.size

    @property
    def final(self) -> StateVector:
        return StateVector(self.states[-1])


def project_simplex(y, floor: float = 1e-12) -> StateVector:
    """Clamp at ``floor`` then renormalize to unit mass."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ProjectionError("proposal has nonfinite entries")
    if np.all(y <= 0):
        raise ProjectionError("proposal has no positive entries")
    z = np.maximum(y, floor)
    return StateVector.unchecked(z / z.sum())


def rk4(field: Field, y: np.ndarray, t: float, dt: float, post: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """One classical RK4 step; ``post`` is applied to each stage state and the result."""
    post = post or (lambda z: z)
    k1 = field(y, t)
    k2 = field(post(y + 0.5 * dt * k1), t + 0.5 * dt)
    k3 = field(post(y + 0.5 * dt * k2), t + 0.5 * dt)
    k4 = field(post(y + dt * k3), t + dt)
    return post(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def rk4_step(field: Field, x, t: float, dt: float, floor: float = 1e-12) -> StateVector:
    def post(z):
        return project_simplex(z, floor).values

    try:
        out = rk4(field, np.asarray(x, dtype=float), t, dt, post)
    except ProjectionError as exc:
        raise StepError(str(exc), t) from exc
    return StateVector(out)


def make_field(tensors: HyperTensorSet, input: Optional[InputSignal] = None) -> Field:
    if input is None:
        return lambda x, t: vector_field(tensors, x)
    return lambda x, t: vector_field(tensors, x) + input(t)


def integrate(
    tensors: HyperTensorSet,
    x0,
    cfg: IntegratorConfig,
    input: Optional[InputSignal] = None,
    equilibrium_hint=None,
) -> Trajectory:
    field = make_field(tensors, input)
    x = np.asarray(StateVector(x0), dtype=float)
    v = None if equilibrium_hint is None else np.asarray(equilibrium_hint, dtype=float)

    times, states, fields = [0.0], [x], [field(x, 0.0)]
    t = 0.0
    for step in range(1, cfg.n_steps + 1):
        x = rk4_step(field, x, t, cfg.dt, cfg.projection_floor).values
        t = step * cfg.dt
        if step % cfg.record_every == 0 or step == cfg.n_steps:
            times.append(t)
            states.append(x)
            fields.append(field(x, t))

    X = np.array(states)
    F = np.array(fields)
    if v is None:
        V = rate = dist = np.full(len(times), np.nan)
    else:
        logr = np.log(X / v)
        V = np.sum(X * logr, axis=1)
        rate = np.sum(logr * F, axis=1)
        dist = np.linalg.norm(X - v, axis=1)
    return Trajectory(
        times=np.array(times),
        states=X,
        mass_residual=X.sum(axis=1) - 1.0,
        entropy=V,
        entropy_rate=rate,
        distance=dist,
        field_norm=np.abs(F).max(axis=1),
    )


def detect_steady_state(traj: Trajectory, tol: float = 1e-9) -> tuple[bool, StateVector]:
    return bool(traj.field_norm[-1] <= tol), traj.final
