"""Rate kernels, flows and the generator vector field on the simplex.

Every entry a_{ikI} (head i, primary tail k, extra tails I) moves mass
``a_{ikI} * x_k * prod(x_I)`` from node k to node i, so the field is
assembled entrywise as ``term * (e_i - e_k)``. Mass conservation then holds
by construction, and the field is linear in the tensor coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .hypergraph import HyperEdgeEntry, HyperTensorSet

MASS_TOL = 1e-12


class StateVector:
    """A point of the open simplex: strictly positive, unit mass."""

    __slots__ = ("values",)

    def __init__(self, values):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("state must be a nonempty 1-d vector")
        if not np.all(np.isfinite(values)) or values.min() <= 0:
            raise ValueError(f"state must be strictly positive, min={values.min()!r}")
        if abs(values.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"state must have unit mass, sum={values.sum()!r}")
        values.setflags(write=False)
        self.values = values

    @classmethod
    def unchecked(cls, values) -> "StateVector":
        """Skip validation (boundary points in tests)."""
        obj = cls.__new__(cls)
        obj.values = np.array(values, dtype=float)
        return obj

    @classmethod
    def uniform(cls, n: int) -> "StateVector":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "StateVector":
        """Uniform-positive draw normalized to unit mass."""
        u = rng.uniform(0.0, 1.0, size=n)
        while u.min() <= 0:
            u = rng.uniform(0.0, 1.0, size=n)
        return cls(u / u.sum())

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"StateVector({np.array2string(self.values, precision=6)})"


class TangentVector:
    __slots__ = ("values",)

    def __init__(self, values):
        values = np.array(values, dtype=float)
        if abs(values.sum()) > MASS_TOL:
            raise ValueError(f"tangent vector must sum to zero, sum={values.sum()!r}")
        self.values = values

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class StructuredKernel:
    """Q_{k->i}(x) = S[k, i] * (1 + alpha * sum_j x_j**2)."""

    S: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("S must be square")
        if np.any(np.diag(S) != 0) or np.any(S < 0):
            raise ValueError("S must be nonnegative with zero diagonal")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        object.__setattr__(self, "S", S)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def phi(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 1.0 + self.alpha * float(x @ x)

    def rate(self, i: int, k: int, x) -> float:
        return self.S[k, i] * self.phi(x)


@dataclass(frozen=True)
class InputSignal:
    """Zero-sum additive input t -> w(t)."""

    evaluator: Callable[[float], np.ndarray]
    description: str = ""

    def __call__(self, t: float) -> np.ndarray:
        w = np.asarray(self.evaluator(t), dtype=float)
        if abs(w.sum()) > MASS_TOL:
            raise ValueError(f"input {self.description!r} is not zero-sum at t={t}: {w.sum()!r}")
        return w


def zero_input(n: int) -> InputSignal:
    return InputSignal(lambda t: np.zeros(n), "zero")


def sinusoidal_input(n: int, amplitude: float, frequency: float = 0.25, pair: tuple[int, int] = (0, 1)) -> InputSignal:
    """w(t) = amplitude * sin(2 pi f t) * (e_a - e_b)."""
    a, b = pair

    def w(t):
        out = np.zeros(n)
        s = amplitude * np.sin(2.0 * np.pi * frequency * t)
        out[a] = s
        out[b] = -s
        return out

    return InputSignal(w, f"{amplitude}*sin(2*pi*{frequency}*t)*(e{a + 1}-e{b + 1})")


def _entry_terms(layer, x: np.ndarray) -> np.ndarray:
    return layer.weights * np.prod(x[layer.factors], axis=1)


def rate_matrix(tensors: HyperTensorSet, x) -> np.ndarray:
    """R[i, k] = Q_{k->i}(x) for all pairs."""
    x = np.asarray(x, dtype=float)
    n = tensors.n
    R = np.zeros((n, n))
    for layer in tensors.layers.values():
        mono = layer.weights * np.prod(x[layer.factors[:, 1:]], axis=1)
        np.add.at(R, (layer.heads, layer.tails), mono)
    return R


def rate_kernel(tensors: HyperTensorSet, i: int, k: int, x) -> float:
    """Q_{k->i}(x) = sum_r sum_I a^r_{ikI} prod_{j in I} x_j."""
    n = tensors.n
    if not (0 <= i < n and 0 <= k < n):
        raise IndexError(f"node index out of range for n={n}: i={i}, k={k}")
    if i == k:
        raise ValueError("rate kernel needs distinct nodes")
    x = np.asarray(x, dtype=float)
    total = 0.0
    for layer in tensors.layers.values():
        sel = (layer.heads == i) & (layer.tails == k)
        if sel.any():
            total += float(np.sum(layer.weights[sel] * np.prod(x[layer.factors[sel, 1:]], axis=1)))
    return total


def encode_structured_kernel(sk: StructuredKernel) -> HyperTensorSet:
    """Realize S * (1 + alpha * sum_j x_j^2) as order-1 and order-3 entries.

    Each x_j^2 becomes an order-3 entry with the repeated extra tail (j, j).
    """
    S = sk.S
    n = sk.n
    pairs = [(i, k) for i in range(n) for k in range(n) if i != k and S[k, i] != 0]
    entries = [HyperEdgeEntry(1, i, k, (), float(S[k, i])) for i, k in pairs]
    if sk.alpha != 0:
        entries += [HyperEdgeEntry(3, i, k, (j, j), float(sk.alpha * S[k, i])) for i, k in pairs for j in range(n)]
    return HyperTensorSet(n, entries)


def encode_matrix_direction(dS: np.ndarray, alpha: float) -> HyperTensorSet:
    """Signed tensor direction induced by a change dS of the base matrix."""
    dS = np.array(dS, dtype=float)
    n = dS.shape[0]
    entries = []
    for i in range(n):
        for k in range(n):
            if i == k or dS[k, i] == 0:
                continue
            entries.append(HyperEdgeEntry(1, i, k, (), float(dS[k, i])))
            if alpha != 0:
                entries.extend(HyperEdgeEntry(3, i, k, (j, j), float(alpha * dS[k, i])) for j in range(n))
    return HyperTensorSet(n, entries, direction=True)


def flow(tensors: HyperTensorSet, i: int, k: int, x) -> float:
    """Net flow k -> i: Q_{k->i}(x) x_k - Q_{i->k}(x) x_i."""
    x = np.asarray(x, dtype=float)
    return rate_kernel(tensors, i, k, x) * x[k] - rate_kernel(tensors, k, i, x) * x[i]


def vector_field(tensors: HyperTensorSet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = tensors.n
    f = np.zeros(n)
    for layer in tensors.layers.values():
        term = _entry_terms(layer, x)
        f += np.bincount(layer.heads, term, minlength=n)
        f -= np.bincount(layer.tails, term, minlength=n)
    return f


def vector_field_with_input(tensors: HyperTensorSet, x, w: InputSignal, t: float) -> np.ndarray:
    return vector_field(tensors, x) + w(t)


def jacobian(tensors: HyperTensorSet, x) -> np.ndarray:
    """Analytic df/dx by the product rule over each entry's monomial."""
    x = np.asarray(x, dtype=float)
    n = tensors.n
    J = np.zeros((n, n))
    for layer in tensors.layers.values():
        xf = x[layer.factors]  # (m, r)
        r = xf.shape[1]
        for p in range(r):
            others = np.delete(xf, p, axis=1)
            d = layer.weights * np.prod(others, axis=1)
            col = layer.factors[:, p]
            np.add.at(J, (layer.heads, col), d)
            np.add.at(J, (layer.tails, col), -d)
    return J


def frechet_in_tensor(tensors_direction: HyperTensorSet, x) -> np.ndarray:
    """Derivative of f(x; A) in A along a direction; exact since f is linear in A."""
    return vector_field(tensors_direction, x)


def tensor_gain(pattern: HyperTensorSet, x) -> float:
    """Operator 2-norm of dA -> f(x; dA) over the coordinate pattern of ``pattern``.

    Equals the sup of ||f(x; dA)|| over unit-Frobenius directions supported
    on the same keys.
    """
    x = np.asarray(x, dtype=float)
    n = pattern.n
    cols = []
    for layer in pattern.layers.values():
        mono = np.prod(x[layer.factors], axis=1)
        M = np.zeros((n, mono.size))
        idx = np.arange(mono.size)
        M[layer.heads, idx] += mono
        M[layer.tails, idx] -= mono
        cols.append(M)
    if not cols:
        return 0.0
    return float(np.linalg.norm(np.hstack(cols), 2))


class ReplicatorKernel:
    """Replicator dynamics x_i (f_i(x) - fbar(x)) embedded in generator form.

    Fitness is polynomial: ``coeffs[d]`` is an array of shape (n,)*(d+1) and
    f_i(x) = sum_d sum_J coeffs[d][i, J] prod_{j in J} x_j. The induced kernel
    Q_{k->i}(x) = x_i f_i(x) is stored as tensor entries with extra tails
    (i, J), so the generic generator machinery evaluates it.
    """

    def __init__(self, coeffs: Sequence[np.ndarray], check_samples: int = 512, seed: int = 0):
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        if not self.coeffs:
            raise ValueError("need at least a constant fitness term")
        n = self.coeffs[0].shape[0]
        for d, c in enumerate(self.coeffs):
            if c.shape != (n,) * (d + 1):
                raise ValueError(f"degree-{d} coefficients must have shape {(n,) * (d + 1)}, got {c.shape}")
        self.n = n
        rng = np.random.default_rng(seed)
        probes = np.vstack([np.eye(n), np.full((1, n), 1.0 / n), rng.dirichlet(np.ones(n), size=check_samples)])
        for x in probes:
            fx = self.fitness(x)
            if np.any(x * fx < -1e-12):
                raise ValueError(f"kernel x_i f_i(x) is negative at sampled x={x}")
        self.tensors = self._encode()

    def fitness(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.n)
        for c in self.coeffs:
            t = c
            while t.ndim > 1:
                t = t @ x
            out += t
        return out

    def rate(self, i: int, k: int, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x[i] * self.fitness(x)[i])

    def replicator_field(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        fx = self.fitness(x)
        return x * (fx - x @ fx)

    def field(self, x) -> np.ndarray:
        return vector_field(self.tensors, x)

    def _encode(self) -> HyperTensorSet:
        n = self.n
        entries = []
        for d, c in enumerate(self.coeffs):
            for idx in np.ndindex(*c.shape):
                w = float(c[idx])
                if w == 0:
                    continue
                i, J = idx[0], idx[1:]
                for k in range(n):
                    if k != i:
                        entries.append(HyperEdgeEntry(d + 2, i, k, (i, *J), w))
        return HyperTensorSet(n, entries, direction=True)


def embed_replicator(fitness_coeffs: Sequence[np.ndarray], **kwargs) -> ReplicatorKernel:
    return ReplicatorKernel(fitness_coeffs, **kwargs)
