"""Planar double integrators with a momentum-conserving state-dependent Laplacian."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .integrator import StepError, rk4

Disturbance = Callable[[float], np.ndarray]


@dataclass
class AgentSwarmState:
    p: np.ndarray  # (m, 2)
    v: np.ndarray  # (m, 2)

    def __post_init__(self):
        self.p = np.array(self.p, dtype=float)
        self.v = np.array(self.v, dtype=float)
        if self.p.ndim != 2 or self.p.shape[1] != 2 or self.p.shape != self.v.shape:
            raise ValueError("positions and velocities must both be (m, 2)")
        if self.p.shape[0] < 2:
            raise ValueError("need at least two agents")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v))):
            raise ValueError("state has nonfinite entries")

    @property
    def m(self) -> int:
        return self.p.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.p.ravel(), self.v.ravel()])

    @classmethod
    def from_flat(cls, y: np.ndarray, m: int) -> "AgentSwarmState":
        return cls(y[: 2 * m].reshape(m, 2), y[2 * m:].reshape(m, 2))


def paired_sinusoid(m: int, amplitude: float = 0.6, frequency: float = 0.25) -> Disturbance:
    """w_1 = -w_2 = [A sin(2 pi f t), 0], all other agents unforced."""

    def w(t):
        out = np.zeros((m, 2))
        s = amplitude * np.sin(2.0 * np.pi * frequency * t)
        out[0, 0] = s
        out[1, 0] = -s
        return out

    return w


def no_disturbance(m: int) -> Disturbance:
    return lambda t: np.zeros((m, 2))


def random_connected_topology(m: int, rng: np.random.Generator, edge_prob: float = 0.6,
                              low: float = 0.5, high: float = 1.5) -> np.ndarray:
    """Symmetric zero-diagonal weights on an Erdos-Renyi mask, redrawn until connected."""
    from scipy.sparse.csgraph import connected_components

    while True:
        mask = np.triu(rng.random((m, m)) < edge_prob, 1)
        weights = np.triu(rng.uniform(low, high, size=(m, m)), 1)
        S = np.where(mask, weights, 0.0)
        S = S + S.T
        if connected_components(S > 0, directed=False)[0] == 1:
            return S


def scattered_start(m: int, rng: np.random.Generator, start=(-8.0, -8.0), end=(4.0, 4.0),
                    offset: float = 0.5) -> AgentSwarmState:
    """Anchors evenly spaced on a segment plus uniform offsets; zero velocity."""
    s = np.linspace(0.0, 1.0, m)[:, None]
    anchors = (1 - s) * np.asarray(start) + s * np.asarray(end)
    p = anchors + rng.uniform(-offset, offset, size=(m, 2))
    return AgentSwarmState(p, np.zeros((m, 2)))


@dataclass
class MasConfig:
    S: np.ndarray
    m: int = 6
    k_p: float = 1.0
    k_d: float = 1.2
    alpha: float = 0.02
    dt: float = 0.02
    t_final: float = 40.0
    disturbance: Optional[Disturbance] = None
    record_every: int = 1
    zero_sum_tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        self.S = np.array(self.S, dtype=float)
        if self.m < 2:
            raise ValueError(f"need m >= 2 agents, got {self.m}")
        if self.S.shape != (self.m, self.m):
            raise ValueError(f"S must be {self.m}x{self.m}")
        if not np.allclose(self.S, self.S.T, rtol=0, atol=0) or np.any(np.diag(self.S) != 0) or np.any(self.S < 0):
            raise ValueError("S must be symmetric, nonnegative, with zero diagonal")
        if not (self.k_p > 0 and self.k_d > 0):
            raise ValueError("gains must be positive")
        if not (self.dt > 0 and self.t_final >= self.dt):
            raise ValueError("need dt > 0 and t_final >= dt")
        if self.disturbance is None:
            self.disturbance = no_disturbance(self.m)

    def w(self, t: float) -> np.ndarray:
        w = np.asarray(self.disturbance(t), dtype=float)
        if np.abs(w.sum(axis=0)).max() > self.zero_sum_tol:
            raise ValueError(f"disturbance is not zero-sum at t={t}")
        return w


def coupling_matrix(state: AgentSwarmState, cfg: MasConfig) -> np.ndarray:
    """L(x) = D(x) - W(x) with W = S (1 + alpha (|p|_F^2 + |v|_F^2))."""
    energy = float(np.sum(state.p ** 2) + np.sum(state.v ** 2))
    W = cfg.S * (1.0 + cfg.alpha * energy)
    return np.diag(W.sum(axis=1)) - W


def control_law(state: AgentSwarmState, cfg: MasConfig, t: float) -> np.ndarray:
    L = coupling_matrix(state, cfg)
    return -cfg.k_p * L @ state.p - cfg.k_d * L @ state.v + cfg.w(t)


@dataclass
class SwarmTrajectory:
    times: np.ndarray  # (N,)
    positions: np.ndarray  # (N, m, 2)
    velocities: np.ndarray  # (N, m, 2)

    @property
    def momentum(self) -> np.ndarray:
        return self.velocities.sum(axis=1)

    @property
    def mean_distance(self) -> np.ndarray:
        centroid = self.positions.mean(axis=1, keepdims=True)
        return np.linalg.norm(self.positions - centroid, axis=2).mean(axis=1)


def simulate_swarm(cfg: MasConfig, initial: AgentSwarmState) -> SwarmTrajectory:
    m = cfg.m
    if initial.m != m:
        raise ValueError(f"initial state has {initial.m} agents, config expects {m}")

    def field(y, t):
        s = AgentSwarmState.__new__(AgentSwarmState)
        s.p = y[: 2 * m].reshape(m, 2)
        s.v = y[2 * m:].reshape(m, 2)
        return np.concatenate([s.v.ravel(), control_law(s, cfg, t).ravel()])

    y = initial.flat()
    n_steps = int(round(cfg.t_final / cfg.dt))
    times, ys = [0.0], [y]
    for step in range(1, n_steps + 1):
        t = (step - 1) * cfg.dt
        y = rk4(field, y, t, cfg.dt)
        if not np.all(np.isfinite(y)):
            raise StepError("swarm state blew up", t + cfg.dt)
        if step % cfg.record_every == 0 or step == n_steps:
            times.append(step * cfg.dt)
            ys.append(y)
    Y = np.array(ys)
    return SwarmTrajectory(
        times=np.array(times),
        positions=Y[:, : 2 * m].reshape(-1, m, 2),
        velocities=Y[:, 2 * m:].reshape(-1, m, 2),
    )


def momentum_drift(traj: SwarmTrajectory) -> float:
    mom = traj.momentum
    return float(np.linalg.norm(mom - mom[0], axis=1).max())
