"""Seeded experiment runners that emit CSV/SVG/JSON results.

Every random quantity draws from its own stream derived from
``(seed, stream key)``, so changing one part of a config never reshuffles
another part.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import analysis, hypergraph, multiagent
from .dynamics import (
    StateVector,
    StructuredKernel,
    encode_matrix_direction,
    encode_structured_kernel,
    sinusoidal_input,
)
from .hypergraph import HyperEdgeEntry, HyperTensorSet, StructuralError
from .integrator import IntegratorConfig, Trajectory, integrate
from .io import emit_csv, emit_json, emit_svg, write_manifest

log = logging.getLogger(__name__)

# stream keys
STREAM_BASE = 1
STREAM_X0 = 2
STREAM_PERTURB = 3
STREAM_SWEEP = 4
STREAM_SWARM_TOPOLOGY = 5
STREAM_SWARM_START = 6
STREAM_ESTIMATORS = 7


def derive_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([master, *keys]).generate_state(1, np.uint64)[0])


def stream(master: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, *keys]))


@dataclass
class PerturbationConfig:
    delta_norm: float = 0.3
    symmetric: bool = False


@dataclass
class InputConfig:
    amplitude: float = 0.03
    frequency: float = 0.25
    pair: tuple[int, int] = (1, 2)  # 1-based nodes receiving +w and -w


@dataclass
class SweepConfig:
    levels: list[float] = field(default_factory=lambda: list(np.linspace(0.0, 0.6, 9)))
    fresh_directions: bool = False
    fit_max_norm: float = 0.3


@dataclass
class SwarmConfig:
    m: int = 6
    k_p: float = 1.0
    k_d: float = 1.2
    alpha: float = 0.02
    dt: float = 0.02
    t_final: float = 40.0
    amplitude: float = 0.6
    frequency: float = 0.25
    edge_prob: float = 0.6


@dataclass
class ExperimentConfig:
    spec: Optional[str] = None
    generator: str = "va-dense"
    n: int = 8
    alpha: float = 0.8
    seed: int = 42
    dt: float = 1e-2
    t_final: float = 20.0
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    input: InputConfig = field(default_factory=InputConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    multiagent: SwarmConfig = field(default_factory=SwarmConfig)
    output_dir: str = "out"
    svg: bool = True

    def __post_init__(self):
        if not self.dt > 0 or not self.t_final >= self.dt:
            raise ValueError(f"need dt > 0 and t_final >= dt, got dt={self.dt}, t_final={self.t_final}")
        if self.n < 2 or self.alpha < 0:
            raise ValueError("need n >= 2 and alpha >= 0")
        ma = self.multiagent
        if ma.m < 2:
            raise ValueError(f"multiagent.m must be at least 2, got {ma.m}")
        if not ma.dt > 0 or not ma.t_final >= ma.dt:
            raise ValueError("multiagent: need dt > 0 and t_final >= dt")
        if self.input.pair[0] == self.input.pair[1] or min(self.input.pair) < 1:
            raise ValueError(f"input.pair must name two distinct 1-based nodes, got {self.input.pair}")
        if self.perturbation.delta_norm < 0:
            raise ValueError("delta_norm must be nonnegative")
        levels = list(self.sweep.levels)
        if any(b < a for a, b in zip(levels, levels[1:])):
            raise ValueError("sweep levels must be nondecreasing")
        if any(lv < 0 for lv in levels):
            raise ValueError("sweep levels must be nonnegative")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        sub = {"perturbation": PerturbationConfig, "input": InputConfig, "sweep": SweepConfig, "multiagent": SwarmConfig}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, typ in sub.items():
            if key in doc:
                fields_ok = {f.name for f in dataclasses.fields(typ)}
                bad = set(doc[key]) - fields_ok
                if bad:
                    raise ValueError(f"unknown keys in {key!r}: {sorted(bad)}")
                doc[key] = typ(**doc[key])
        if isinstance(doc.get("input"), InputConfig):
            doc["input"].pair = tuple(doc["input"].pair)
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sweep"]["levels"] = [float(x) for x in d["sweep"]["levels"]]
        d["input"]["pair"] = list(d["input"]["pair"])
        return d


# -- systems -----------------------------------------------------------------

def random_symmetric_base(n: int, rng: np.random.Generator, low: float = 0.5, high: float = 1.5) -> np.ndarray:
    """Dense symmetric base with i.i.d. uniform off-diagonal weights."""
    upper = np.triu(rng.uniform(low, high, size=(n, n)), 1)
    return upper + upper.T


def nonuniqueness_system() -> HyperTensorSet:
    """n=3, Q_{2->1} = Q_{1->2} = 1, node 3 isolated."""
    return HyperTensorSet(3, [HyperEdgeEntry(1, 0, 1, (), 1.0), HyperEdgeEntry(1, 1, 0, (), 1.0)])


def complete_kernel(n: int, s: float) -> StructuredKernel:
    return StructuredKernel(s * (np.ones((n, n)) - np.eye(n)), 0.0)


@dataclass
class System:
    tensors: HyperTensorSet
    kernel: Optional[StructuredKernel] = None
    label: str = ""


def build_system(cfg: ExperimentConfig) -> System:
    if cfg.spec:
        return System(hypergraph.load_spec(cfg.spec), None, str(cfg.spec))
    name = cfg.generator
    if name == "va-dense":
        S = random_symmetric_base(cfg.n, stream(cfg.seed, STREAM_BASE))
        sk = StructuredKernel(S, cfg.alpha)
        return System(encode_structured_kernel(sk), sk, name)
    if name == "nonuniqueness":
        return System(nonuniqueness_system(), None, name)
    if name.startswith("complete"):
        parts = name.split(":")
        n = int(parts[1]) if len(parts) > 1 else cfg.n
        s = float(parts[2]) if len(parts) > 2 else 1.0
        sk = complete_kernel(n, s)
        return System(encode_structured_kernel(sk), sk, name)
    raise ValueError(f"unknown generator {name!r} (expected va-dense, nonuniqueness, complete[:n[:s]])")


def generate_perturbation(n: int, delta_norm: float, symmetric: bool = False, seed: int = 0) -> np.ndarray:
    """Zero-diagonal standard-normal matrix rescaled to Frobenius norm ``delta_norm``."""
    if delta_norm == 0:
        return np.zeros((n, n))
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, n))
    np.fill_diagonal(Z, 0.0)
    if symmetric:
        Z = 0.5 * (Z + Z.T)
    return Z * (delta_norm / np.linalg.norm(Z))


def clip_perturbation(S: np.ndarray, dS: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clip S + dS at zero; returns (perturbed S, effective dS)."""
    S_new = np.maximum(S + dS, 0.0)
    np.fill_diagonal(S_new, 0.0)
    return S_new, S_new - S


def perturb_entries(tensors: HyperTensorSet, delta_norm: float, seed: int) -> tuple[HyperTensorSet, HyperTensorSet]:
    """Random signed perturbation over an unstructured tensor's entries, clipped at zero."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(len(tensors))
    if delta_norm == 0 or not len(tensors):
        return tensors, HyperTensorSet(tensors.n, (), direction=True)
    z *= delta_norm / np.linalg.norm(z)
    new = [dataclasses.replace(e, weight=max(e.weight + dz, 0.0)) for e, dz in zip(tensors.entries, z)]
    perturbed = HyperTensorSet(tensors.n, [e for e in new if e.weight > 0])
    return perturbed, perturbed.combine(tensors, scale=-1.0, direction=True)


@dataclass
class Perturbation:
    tensors: HyperTensorSet  # perturbed system
    delta: HyperTensorSet  # effective tensor direction, post-clip
    pre_norm: float
    post_norm: float  # in base-matrix units for structured systems, entry units otherwise


def perturb_system(system: System, dS: Optional[np.ndarray], delta_norm: float, seed: int) -> Perturbation:
    if system.kernel is not None:
        S_new, dS_eff = clip_perturbation(system.kernel.S, dS)
        tensors = encode_structured_kernel(StructuredKernel(S_new, system.kernel.alpha))
        delta = encode_matrix_direction(dS_eff, system.kernel.alpha)
        return Perturbation(tensors, delta, float(np.linalg.norm(dS)), float(np.linalg.norm(dS_eff)))
    tensors, delta = perturb_entries(system.tensors, delta_norm, seed)
    return Perturbation(tensors, delta, delta_norm, delta.frobenius_norm())


# -- certificates --------------------------------------------------------------

def nominal_equilibrium(tensors: HyperTensorSet) -> tuple[Optional[StateVector], str]:
    """Best available equilibrium and how it was obtained."""
    try:
        return analysis.equilibrium_from_tgdb(tensors), "tgdb-ratio"
    except hypergraph.DisconnectedSupportError:
        return None, "disconnected"
    except StructuralError:
        try:
            return analysis.equilibrium_newton(tensors, StateVector.uniform(tensors.n)), "newton"
        except analysis.ConvergenceError:
            return None, "newton-failed"


def certify(system: System, seed: int) -> dict:
    tensors = system.tensors
    g = hypergraph.support_graph(tensors)
    strong = hypergraph.is_connected(g, "strong")
    weak = hypergraph.is_connected(g, "undirected")
    v, how = nominal_equilibrium(tensors)
    ref = np.asarray(v) if v is not None else np.full(tensors.n, 1.0 / tensors.n)
    tgdb = hypergraph.check_tgdb(tensors, ref)
    doc: dict[str, Any] = {
        "n": tensors.n,
        "entries": len(tensors),
        "orders": tensors.orders,
        "strongly_connected": strong,
        "undirected_connected": weak,
        "equilibrium_method": how,
        "unique_equilibrium": bool(v is not None and strong and tgdb.holds),
        "tgdb": {
            "holds": tgdb.holds,
            "reference": tgdb.reference,
            "max_residual": tgdb.max_residual,
            "violations": [
                {"order": r, "head": i + 1, "tail": [k + 1, *(j + 1 for j in rest)], "residual": res}
                for r, i, k, rest, res in tgdb.violations[:50]
            ],
            "violation_count": len(tgdb.violations),
        },
    }
    if v is None:
        doc["equilibrium"] = None
        return doc
    doc["equilibrium"] = np.asarray(v)
    c_gap, spectrum = analysis.spectral_gap(tensors, v)
    doc["c_gap"] = c_gap
    doc["reduced_spectrum"] = [[float(z.real), float(z.imag)] for z in spectrum]
    if tgdb.holds and strong:
        try:
            cert = analysis.dissipation_constant(tensors, v, g, system.kernel,
                                                 seed=derive_seed(seed, STREAM_ESTIMATORS))
        except StructuralError as exc:
            doc["dissipation_error"] = str(exc)
        else:
            doc.update(c=cert.c, q_bar=cert.q_bar, q_bar_sampled=cert.q_bar_sampled,
                       lambda_star=cert.lambda_star, v_min=cert.v_min, v_max=cert.v_max)
    return doc


# -- trajectories ------------------------------------------------------------

def trajectory_rows(traj: Trajectory):
    for t, x, V, dV in zip(traj.times, traj.states, traj.entropy, traj.entropy_rate):
        yield [t, *x, float(x.sum()), V, dV]


def write_trajectory(traj: Trajectory, out: Path, svg: bool, title: str) -> list[Path]:
    n = traj.states.shape[1]
    header = ["t", *(f"x{i + 1}" for i in range(n)), "mass", "V", "dVdt"]
    files = [emit_csv(header, trajectory_rows(traj), out / "trajectory.csv")]
    if svg:
        series = {f"x{i + 1}": (traj.times, traj.states[:, i]) for i in range(n)}
        files.append(emit_svg(series, out / "trajectory.svg", title=title, xlabel="t", ylabel="x_i(t)"))
    return files


def _run_settings(cfg: ExperimentConfig) -> dict:
    """Config as recorded in the manifest; the output location does not affect results."""
    d = cfg.to_dict()
    d.pop("output_dir")
    return d


def _out(cfg: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _x0(cfg: ExperimentConfig, n: int) -> StateVector:
    return StateVector.random(n, stream(cfg.seed, STREAM_X0))


def _icfg(cfg: ExperimentConfig) -> IntegratorConfig:
    return IntegratorConfig(dt=cfg.dt, t_final=cfg.t_final)


def run_simulate(cfg: ExperimentConfig, out_dir=None) -> dict:
    icfg = _icfg(cfg)
    out = _out(cfg, out_dir)
    system = build_system(cfg)
    cert = certify(system, cfg.seed)
    v = cert.get("equilibrium")
    traj = integrate(system.tensors, _x0(cfg, system.tensors.n), icfg, equilibrium_hint=v)
    files = write_trajectory(traj, out, cfg.svg, "state trajectory")
    files.append(emit_json(cert, out / "certificate.json"))
    summary = {
        "final_state": traj.states[-1],
        "max_mass_drift": float(np.abs(traj.mass_residual).max()),
        "final_distance_inf": None if v is None else float(np.abs(traj.states[-1] - v).max()),
        "certificate": {k: cert.get(k) for k in ("c_gap", "c", "unique_equilibrium")},
    }
    write_manifest(out, files, _run_settings(cfg), {"summary": summary})
    return {"trajectory": traj, "certificate": cert, **summary}


def run_perturbed(cfg: ExperimentConfig, out_dir=None) -> dict:
    icfg = _icfg(cfg)
    out = _out(cfg, out_dir)
    system = build_system(cfg)
    n = system.tensors.n
    v = analysis.equilibrium_from_tgdb(system.tensors)
    pseed = derive_seed(cfg.seed, STREAM_PERTURB)
    dS = generate_perturbation(n, cfg.perturbation.delta_norm, cfg.perturbation.symmetric, pseed) \
        if system.kernel is not None else None
    pert = perturb_system(system, dS, cfg.perturbation.delta_norm, pseed)
    a, b = (j - 1 for j in cfg.input.pair)
    rho = cfg.input.amplitude
    w = sinusoidal_input(n, rho, cfg.input.frequency, (a, b)) if rho != 0 else None
    traj = integrate(pert.tensors, _x0(cfg, n), icfg, input=w, equilibrium_hint=v)

    est_seed = derive_seed(cfg.seed, STREAM_ESTIMATORS)
    cert = analysis.dissipation_constant(system.tensors, v, kernel=system.kernel, seed=est_seed)
    consts = analysis.iss_constants(system.tensors, v, cert, seed=est_seed, pattern=_coordinate_pattern(system.tensors, pert.delta))
    delta_norm = pert.delta.frobenius_norm()
    input_sup = rho * np.sqrt(2.0)
    check = analysis.iss_envelope_check(traj, consts, delta_norm, input_sup)
    floor = (consts.C1 * delta_norm ** 2 + consts.C2 * input_sup ** 2) / consts.eta
    if delta_norm > 0:
        v_new = analysis.equilibrium_newton(pert.tensors, v)
        shift = np.asarray(v_new) - np.asarray(v)
    else:
        shift = np.zeros(n)

    files = write_trajectory(traj, out, cfg.svg, "state trajectory under perturbation")
    report = {
        "pre_clip_norm": pert.pre_norm,
        "post_clip_norm": pert.post_norm,
        "tensor_delta_norm": delta_norm,
        "input_sup": input_sup,
        "equilibrium_shift": shift,
        "equilibrium_shift_norm": float(np.linalg.norm(shift)),
        "iss_constants": dataclasses.asdict(consts),
        "envelope_floor": floor,
        "violations": check.violations,
        "margin": check.margin,
        "excluded_samples": check.excluded,
        "steady_state_V": float(traj.entropy[-1]),
        "max_state_deviation": float(np.abs(traj.states - np.asarray(v)).max()),
    }
    files.append(emit_json(report, out / "iss.json"))
    write_manifest(out, files, _run_settings(cfg), {"post_clip_norm": pert.post_norm, "summary": {
        k: report[k] for k in ("violations", "equilibrium_shift_norm", "envelope_floor")}})
    return {"trajectory": traj, "report": report, "constants": consts, "certificate": cert}


def _coordinate_pattern(*sets: HyperTensorSet) -> HyperTensorSet:
    """Unit-weight tensor over the union of the coordinate keys of ``sets``."""
    keys = sorted({e.key for ts in sets for e in ts.entries})
    return HyperTensorSet(sets[0].n, [HyperEdgeEntry(r, i, k, rest, 1.0) for r, i, k, rest in keys])


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_sweep(cfg: ExperimentConfig, out_dir=None) -> dict:
    levels = [float(x) for x in cfg.sweep.levels]
    if not levels:
        raise ValueError("sweep needs at least one level")
    icfg = _icfg(cfg)
    out = _out(cfg, out_dir)
    system = build_system(cfg)
    if system.kernel is None:
        raise ValueError("sweep needs a structured base system (va-dense or complete)")
    n = system.tensors.n
    v = np.asarray(analysis.equilibrium_from_tgdb(system.tensors))
    unit = generate_perturbation(n, 1.0, cfg.perturbation.symmetric, derive_seed(cfg.seed, STREAM_SWEEP))

    rows, cross_check = [], []
    for idx, level in enumerate(levels):
        if cfg.sweep.fresh_directions:
            dS = generate_perturbation(n, level, cfg.perturbation.symmetric, derive_seed(cfg.seed, STREAM_SWEEP, idx))
        else:
            dS = unit * level
        pert = perturb_system(system, dS, level, 0)
        if pert.post_norm == 0:
            rows.append([level, pert.pre_norm, 0.0, 0.0, 0.0, 0.0])
            cross_check.append(0.0)
            continue
        traj = integrate(pert.tensors, v, icfg)
        v_new = np.asarray(analysis.equilibrium_newton(pert.tensors, v), dtype=float)
        cross_check.append(float(np.abs(v_new - traj.states[-1]).max()))
        meas = v_new - v
        pred = analysis.predicted_shift(system.tensors, v, pert.delta)
        rows.append([level, pert.pre_norm, pert.post_norm, float(np.linalg.norm(meas)),
                     float(np.linalg.norm(pred)), float(np.linalg.norm(meas - pred))])

    arr = np.array(rows)
    fit = (arr[:, 2] > 0) & (arr[:, 2] <= cfg.sweep.fit_max_norm)
    slope = loglog_slope(arr[fit, 2], arr[fit, 3]) if fit.sum() >= 2 else float("nan")
    header = ["level", "pre_norm", "post_norm", "measured_shift", "predicted_shift", "gap"]
    files = [emit_csv(header, rows, out / "sweep.csv")]
    pos = arr[:, 2] > 0
    if cfg.svg and pos.sum() >= 1:
        files.append(emit_svg({"measured": (arr[pos, 2], arr[pos, 3]), "first-order": (arr[pos, 2], arr[pos, 4])},
                              out / "loglog.svg", title="equilibrium sensitivity", xlabel="||dS||_F",
                              ylabel="||v~ - v||", loglog=True))
    summary = {"slope": slope, "fit_points": int(fit.sum()), "max_integration_vs_newton": max(cross_check)}
    write_manifest(out, files, _run_settings(cfg), {"summary": summary})
    return {"rows": arr, **summary}


def run_spectral(cfg: ExperimentConfig, out_dir=None) -> dict:
    out = _out(cfg, out_dir)
    system = build_system(cfg)
    cert = certify(system, cfg.seed)
    files = [emit_json(cert, out / "certificate.json")]
    write_manifest(out, files, _run_settings(cfg))
    return cert


def run_check(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Validate a system and report its balance and connectivity structure."""
    out = _out(cfg, out_dir)
    system = build_system(cfg)
    tensors = system.tensors
    g = hypergraph.support_graph(tensors)
    v, how = nominal_equilibrium(tensors)
    ref = np.asarray(v) if v is not None else np.full(tensors.n, 1.0 / tensors.n)
    rep = hypergraph.check_tgdb(tensors, ref)
    doc = {
        "n": tensors.n,
        "entries_per_order": {r: len(layer) for r, layer in zip(tensors.orders, hypergraph.decompose_layers(tensors))},
        "support_edges": len(g.directed_edges),
        "strongly_connected": hypergraph.is_connected(g, "strong"),
        "undirected_connected": hypergraph.is_connected(g, "undirected"),
        "reference": ref,
        "reference_method": how if v is not None else "uniform",
        "tgdb_holds": rep.holds,
        "tgdb_max_residual": rep.max_residual,
        "tgdb_violations": len(rep.violations),
    }
    files = [emit_json(doc, out / "check.json")]
    write_manifest(out, files, _run_settings(cfg))
    return doc


def swarm_setup(cfg: ExperimentConfig, disturbed: bool = True) -> tuple[multiagent.MasConfig, multiagent.AgentSwarmState]:
    sc = cfg.multiagent
    S = multiagent.random_connected_topology(sc.m, stream(cfg.seed, STREAM_SWARM_TOPOLOGY), sc.edge_prob)
    dist = multiagent.paired_sinusoid(sc.m, sc.amplitude, sc.frequency) if disturbed and sc.amplitude != 0 else None
    mas = multiagent.MasConfig(S=S, m=sc.m, k_p=sc.k_p, k_d=sc.k_d, alpha=sc.alpha, dt=sc.dt,
                               t_final=sc.t_final, disturbance=dist)
    start = multiagent.scattered_start(sc.m, stream(cfg.seed, STREAM_SWARM_START))
    return mas, start


def run_multiagent(cfg: ExperimentConfig, out_dir=None) -> dict:
    out = _out(cfg, out_dir)
    mas, start = swarm_setup(cfg)
    traj = multiagent.simulate_swarm(mas, start)
    m = mas.m
    header = ["t"]
    for i in range(m):
        header += [f"p{i + 1}_x", f"p{i + 1}_y", f"v{i + 1}_x", f"v{i + 1}_y"]
    header += ["momentum_x", "momentum_y", "mean_dist"]
    mom, md = traj.momentum, traj.mean_distance

    def rows():
        for k, t in enumerate(traj.times):
            row = [t]
            for i in range(m):
                row += [*traj.positions[k, i], *traj.velocities[k, i]]
            yield row + [*mom[k], md[k]]

    files = [emit_csv(header, rows(), out / "swarm.csv")]
    if cfg.svg:
        files.append(emit_svg({f"agent {i + 1}": (traj.positions[:, i, 0], traj.positions[:, i, 1]) for i in range(m)},
                              out / "trajectories.svg", title="agent trajectories", xlabel="x", ylabel="y"))
        files.append(emit_svg({"mean distance": (traj.times, md)}, out / "meandist.svg",
                              title="mean distance to centroid", xlabel="t", ylabel="mean distance"))
    drift = multiagent.momentum_drift(traj)
    summary = {"momentum_drift": drift, "initial_mean_dist": float(md[0]), "final_mean_dist": float(md[-1])}
    write_manifest(out, files, _run_settings(cfg), {"summary": summary})
    return {"trajectory": traj, **summary}
