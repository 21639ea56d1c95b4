"""Equilibria, entropy certificates, spectral gap, sensitivity and local ISS bounds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .dynamics import (
    StateVector,
    StructuredKernel,
    frechet_in_tensor,
    jacobian,
    rate_matrix,
    tensor_gain,
    vector_field,
)
from .hypergraph import (
    DisconnectedSupportError,
    HyperTensorSet,
    StructuralError,
    SupportGraph,
    balance_ratios,
    check_tgdb,
    is_connected,
    support_graph,
)
from .integrator import Trajectory


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TangentBasis:
    U: np.ndarray  # (n, n-1), orthonormal columns spanning 1-perp
    P: np.ndarray  # I - 11^T / n


@dataclass
class StabilityCertificate:
    v: np.ndarray
    c_gap: float
    c: float
    v_min: float
    v_max: float
    q_bar: float
    lambda_star: float
    tgdb_holds: bool
    q_bar_sampled: bool = False
    reduced_spectrum: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))


@dataclass
class SensitivityReport:
    delta_norm: float
    predicted_shift: np.ndarray
    measured_shift: np.ndarray
    first_order_gap: float
    bound_gain: float


@dataclass(frozen=True)
class IssConstants:
    theta: float
    kappa: float
    L_A: float
    m_lo: float
    M_hi: float
    c: float
    C1: float
    C2: float
    eta: float


class EnvelopeCheck(NamedTuple):
    violations: int
    margin: float
    excluded: int


# -- entropy -----------------------------------------------------------------

def entropy(x, v) -> float:
    """KL divergence sum_i x_i log(x_i / v_i)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(np.sum(x * np.log(x / v)))


def entropy_gradient(x, v) -> np.ndarray:
    """Tangential gradient log(x / v); the constant +1 drops out on zero-sum fields."""
    return np.log(np.asarray(x, dtype=float) / np.asarray(v, dtype=float))


def entropy_rate_closed_form(tensors: HyperTensorSet, x, v) -> float:
    """-1/2 sum_{i != k} v_i Q_{i->k}(x) (y_i - y_k)(log y_i - log y_k), y = x / v."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    R = rate_matrix(tensors, x)  # R[k, i] = Q_{i->k}
    y = x / v
    ly = np.log(y)
    W = R * v[None, :]  # W[k, i] = v_i Q_{i->k}
    D = (y[None, :] - y[:, None]) * (ly[None, :] - ly[:, None])
    np.fill_diagonal(D, 0.0)
    return float(-0.5 * np.sum(W * D))


def entropy_rate_chain_rule(tensors: HyperTensorSet, x, v) -> float:
    return float(entropy_gradient(x, v) @ vector_field(tensors, x))


# -- equilibria --------------------------------------------------------------

def equilibrium_from_tgdb(tensors: HyperTensorSet, residual_tol: float = 1e-10) -> StateVector:
    """Balanced reference from ratio propagation along the support graph."""
    g = support_graph(tensors)
    if not is_connected(g, "strong"):
        raise DisconnectedSupportError(
            "support graph is not strongly connected: the balance equations have a "
            "continuum of solutions, so no unique equilibrium exists"
        )
    pi = balance_ratios(tensors)
    v = pi / pi.sum()
    report = check_tgdb(tensors, v / v.sum())
    if not report.holds:
        raise StructuralError(
            f"pairwise ratios are inconsistent around a cycle (max residual {report.max_residual:.3g}); "
            "no balanced reference exists"
        )
    v = StateVector(v / v.sum())
    res = np.abs(vector_field(tensors, v)).max()
    if res > residual_tol:
        raise StructuralError(f"balanced reference is not an equilibrium: |f(v)|_inf = {res:.3g}")
    return v


def tangent_basis(n: int) -> TangentBasis:
    if n < 2:
        raise ValueError("tangent basis needs n >= 2")
    U = scipy.linalg.helmert(n).T.copy()
    P = np.eye(n) - np.full((n, n), 1.0 / n)
    return TangentBasis(U, P)


def equilibrium_newton(
    tensors: HyperTensorSet,
    x_init,
    tol: float = 1e-12,
    max_iter: int = 200,
    floor: float = 1e-10,
    full_output: bool = False,
):
    """Damped Newton on the reduced field U^T f(x0 + U y) = 0.

    Newton steps are halved until the iterate keeps min_i x_i >= ``floor``
    and the reduced residual does not grow. Far from the root the Newton
    direction can point uphill; once no step of length >= 1e-4 is accepted
    the solver switches to pseudo-transient continuation, i.e. linearly
    implicit Euler steps ``(I / tau - J_T) dy = F`` along the flow with tau
    grown by the residual ratio, which turns back into Newton near the root.
    With ``full_output`` also returns a dict with the iteration count, the
    tangent corrections taken and whether continuation was used.
    """
    x = np.asarray(StateVector(x_init), dtype=float).copy()
    n = x.size
    U = tangent_basis(n).U
    steps = []
    tau = None  # None while in pure Newton mode
    F = U.T @ vector_field(tensors, x)
    for it in range(max_iter + 1):
        if np.abs(vector_field(tensors, x)).max() <= tol:
            out = StateVector(x / x.sum())
            info = {"iterations": it, "steps": steps, "continuation": tau is not None}
            return (out, info) if full_output else out
        if it == max_iter:
            break
        JT = U.T @ jacobian(tensors, x) @ U
        norm0 = np.linalg.norm(F)
        accepted = None
        if tau is None:
            try:
                dy = -np.linalg.solve(JT, F)
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"singular reduced Jacobian at iteration {it}") from exc
            if not np.all(np.isfinite(dy)):
                raise ConvergenceError(f"singular reduced Jacobian at iteration {it}")
            lam = 1.0
            while lam >= 1e-4:
                cand = x + lam * (U @ dy)
                if cand.min() >= floor:
                    F_new = U.T @ vector_field(tensors, cand)
                    if np.linalg.norm(F_new) <= norm0:
                        accepted = cand
                        break
                lam *= 0.5
            if accepted is None:
                tau = 1.0 / max(np.linalg.norm(JT, 2), 1e-12)
        if accepted is None:
            # keep 1/tau above twice any unstable eigenvalue so the implicit step stays well posed
            unstable = max(float(np.max(np.linalg.eigvals(JT).real)), 0.0)
            if unstable > 0:
                tau = min(tau, 0.5 / unstable)
            dy = np.linalg.solve(np.eye(n - 1) / tau - JT, F)
            lam = 1.0
            for _ in range(60):
                cand = x + lam * (U @ dy)
                if cand.min() >= floor:
                    accepted = cand
                    break
                lam *= 0.5
            else:
                raise ConvergenceError(f"iterate left the open simplex at iteration {it} despite damping")
            F_new = U.T @ vector_field(tensors, accepted)
            tau = min(tau * norm0 / max(np.linalg.norm(F_new), 1e-300), 1e14)
        steps.append(accepted - x)
        x = accepted
        F = F_new
    raise ConvergenceError(f"no convergence in {max_iter} iterations (|f|_inf={np.abs(vector_field(tensors, x)).max():.3g})")


# -- spectral ---------------------------------------------------------------

def reduced_jacobian(tensors: HyperTensorSet, x) -> np.ndarray:
    U = tangent_basis(tensors.n).U
    return U.T @ jacobian(tensors, x) @ U


def spectral_gap(tensors: HyperTensorSet, v, eq_tol: float = 1e-8) -> tuple[float, np.ndarray]:
    """Minimum of -Re(lambda) over the Jacobian restricted to 1-perp."""
    res = np.abs(vector_field(tensors, v)).max()
    if res > eq_tol:
        raise ValueError(f"v is not an equilibrium: |f(v)|_inf = {res:.3g}")
    lam = scipy.linalg.eigvals(reduced_jacobian(tensors, v))
    order = np.lexsort((lam.imag, -lam.real))
    lam = lam[order]
    return float(np.min(-lam.real)), lam


def connectivity_eigenvalue(support: SupportGraph, v) -> float:
    """inf over v^T z = 0 of sum_{edges}(z_i - z_k)^2 / |z|^2."""
    v = np.asarray(v, dtype=float)
    B = scipy.linalg.null_space(v[None, :])
    M = B.T @ support.laplacian() @ B
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def _simplex_probes(n: int, samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = [np.eye(n), np.full((1, n), 1.0 / n)]
    if n > 1:
        mids = [(np.eye(n)[i] + np.eye(n)[k]) / 2 for i in range(n) for k in range(i + 1, n)]
        pts.append(np.array(mids))
    pts.append(rng.dirichlet(np.ones(n), size=samples))
    return np.vstack(pts)


def kernel_lower_bound(tensors: HyperTensorSet, support: SupportGraph, kernel: Optional[StructuredKernel] = None,
                       samples: int = 2048, seed: int = 0) -> tuple[float, bool]:
    """q_bar over support edges (both directions); returns (q_bar, sampled)."""
    edges = [tuple(sorted(e)) for e in support.undirected_edges]
    if not edges:
        return 0.0, False
    if kernel is not None:
        phi_min = 1.0 + kernel.alpha / kernel.n
        return float(min(min(kernel.S[i, k], kernel.S[k, i]) for i, k in edges) * phi_min), False
    probes = _simplex_probes(tensors.n, samples, seed)
    i_idx = np.array([e[0] for e in edges])
    k_idx = np.array([e[1] for e in edges])
    q = np.inf
    for x in probes:
        R = rate_matrix(tensors, x)
        q = min(q, R[i_idx, k_idx].min(), R[k_idx, i_idx].min())
    return float(q), True


def dissipation_constant(
    tensors: HyperTensorSet,
    v,
    support: Optional[SupportGraph] = None,
    kernel: Optional[StructuredKernel] = None,
    samples: int = 2048,
    seed: int = 0,
) -> StabilityCertificate:
    """Certificate with c = v_min^2 q_bar lambda_star / (2 v_max^2)."""
    v = np.asarray(StateVector(v), dtype=float)
    support = support or support_graph(tensors)
    tgdb = check_tgdb(tensors, v).holds
    q_bar, sampled = kernel_lower_bound(tensors, support, kernel, samples, seed)
    if q_bar <= 0:
        raise StructuralError(f"kernel lower bound on support edges is not positive (q_bar={q_bar:.3g})")
    lam_star = connectivity_eigenvalue(support, v)
    v_min, v_max = float(v.min()), float(v.max())
    c = v_min ** 2 * q_bar * lam_star / (2.0 * v_max ** 2)
    c_gap, spectrum = spectral_gap(tensors, v)
    return StabilityCertificate(
        v=v, c_gap=c_gap, c=c, v_min=v_min, v_max=v_max, q_bar=q_bar, lambda_star=lam_star,
        tgdb_holds=tgdb, q_bar_sampled=sampled, reduced_spectrum=spectrum,
    )


# -- sensitivity -------------------------------------------------------------

def predicted_shift(tensors: HyperTensorSet, v, delta: HyperTensorSet) -> np.ndarray:
    """-U J_T^{-1} U^T df/dA[delta] at v."""
    U = tangent_basis(tensors.n).U
    JT = U.T @ jacobian(tensors, v) @ U
    return -U @ np.linalg.solve(JT, U.T @ frechet_in_tensor(delta, v))


def sensitivity_first_order(
    tensors: HyperTensorSet,
    delta: HyperTensorSet,
    v=None,
    newton_tol: float = 1e-13,
) -> SensitivityReport:
    if v is None:
        try:
            v = equilibrium_from_tgdb(tensors)
        except StructuralError:
            v = equilibrium_newton(tensors, StateVector.uniform(tensors.n))
    v = np.asarray(v, dtype=float)
    pred = predicted_shift(tensors, v, delta)
    if len(delta) == 0 or delta.frobenius_norm() == 0:
        meas = np.zeros_like(v)
    else:
        v_new = np.asarray(equilibrium_newton(tensors.combine(delta, direction=True), v, tol=newton_tol), dtype=float)
        meas = v_new - v
    resolvent = np.linalg.norm(np.linalg.inv(reduced_jacobian(tensors, v)), 2)
    gain = resolvent * tensor_gain(tensors, v)
    return SensitivityReport(
        delta_norm=delta.frobenius_norm(),
        predicted_shift=pred,
        measured_shift=meas,
        first_order_gap=float(np.linalg.norm(meas - pred)),
        bound_gain=float(gain),
    )


# -- local ISS ---------------------------------------------------------------

def omega_samples(n: int, theta: float, samples: int, seed: int) -> np.ndarray:
    """Seeded points of {x in simplex : min x >= theta}."""
    rng = np.random.default_rng(seed)
    slack = 1.0 - n * theta
    return theta + slack * rng.dirichlet(np.ones(n), size=samples)


def iss_constants(
    tensors: HyperTensorSet,
    v,
    cert: StabilityCertificate,
    theta: Optional[float] = None,
    seed: int = 0,
    samples: int = 256,
    pattern: Optional[HyperTensorSet] = None,
) -> IssConstants:
    """Closed-form kappa, m, M on the floor set Omega and a sampled L_{A,Omega}.

    L_{A,Omega} is the max over sampled x in Omega of the exact operator norm
    of dA -> f(x; dA) on the coordinate pattern of ``pattern`` (default: the
    nominal tensors).
    """
    v = np.asarray(v, dtype=float)
    if theta is None:
        theta = float(v.min()) / 2.0
    if not 0 < theta < v.min():
        raise ValueError(f"theta must lie in (0, min v = {v.min():.6g}), got {theta}")
    if not cert.c > 0:
        raise ValueError("certificate dissipation constant must be positive")
    pattern = pattern or tensors
    pts = np.vstack([v[None, :], omega_samples(v.size, theta, samples, seed)])
    L = max(tensor_gain(pattern, x) for x in pts)
    kappa = 1.0 / theta
    M = 1.0 / (2.0 * theta)
    c = cert.c
    return IssConstants(
        theta=theta, kappa=kappa, L_A=L, m_lo=0.5, M_hi=M, c=c,
        C1=kappa ** 2 * L ** 2 / c, C2=kappa ** 2 / c, eta=c / (2.0 * M),
    )


def iss_envelope(consts: IssConstants, t, V0: float, delta_norm: float, input_sup: float) -> np.ndarray:
    floor = (consts.C1 * delta_norm ** 2 + consts.C2 * input_sup ** 2) / consts.eta
    return np.exp(-consts.eta * np.asarray(t, dtype=float)) * V0 + floor


def iss_envelope_check(traj: Trajectory, consts: IssConstants, delta_norm: float, input_sup: float,
                       slack: float = 1e-9) -> EnvelopeCheck:
    """Compare recorded V(x(t)) with the exponential envelope on Omega.

    ``input_sup`` is sup_s |w(s)|. Samples with min_i x_i < theta are
    excluded and counted. The envelope clock starts at the first in-Omega
    sample (t = 0 when x(0) is already in Omega).
    """
    inside = traj.states.min(axis=1) >= consts.theta
    if not inside.any():
        return EnvelopeCheck(0, float("nan"), int(traj.times.size))
    first = int(np.argmax(inside))
    t0 = traj.times[first]
    env = iss_envelope(consts, traj.times - t0, traj.entropy[first], delta_norm, input_sup)
    idx = np.flatnonzero(inside)
    diff = env[idx] - traj.entropy[idx]
    return EnvelopeCheck(int(np.sum(diff < -slack)), float(diff.min()), int((~inside).sum()))
