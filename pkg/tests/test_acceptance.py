"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line; the lines are repeated in the pytest
terminal summary.
"""
import time

import numpy as np
import pytest

from hyperflow import analysis
from hyperflow.cli import main
from hyperflow.dynamics import encode_structured_kernel, jacobian, vector_field
from hyperflow.experiments import (
    STREAM_SWEEP,
    ExperimentConfig,
    SweepConfig,
    build_system,
    complete_kernel,
    derive_seed,
    generate_perturbation,
    nonuniqueness_system,
    perturb_system,
    run_multiagent,
    run_perturbed,
    run_simulate,
    run_sweep,
    swarm_setup,
)
from hyperflow.hypergraph import DisconnectedSupportError
from hyperflow.multiagent import simulate_swarm

from oracles import central_difference_jacobian, interior_state, random_tgdb_system


def baseline_config(**overrides):
    cfg = ExperimentConfig(svg=False)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


@pytest.fixture(scope="module")
def baseline(tmp_path_factory):
    t0 = time.perf_counter()
    result = run_simulate(baseline_config(), tmp_path_factory.mktemp("baseline"))
    return result, time.perf_counter() - t0


def test_mass_conservation(baseline, criterion):
    result, elapsed = baseline
    drift = float(np.abs(result["trajectory"].mass_residual).max())
    criterion("mass conservation", drift <= 1e-10 and elapsed < 5.0,
              f"max |1'x - 1| = {drift:.2e}, runtime {elapsed:.2f}s")


def test_global_convergence(baseline, criterion):
    traj = baseline[0]["trajectory"]
    dist = float(np.abs(traj.states[-1] - 1 / 8).max())
    rise = float(np.diff(traj.entropy).max())
    criterion("global convergence", dist <= 1e-6 and rise <= 1e-10,
              f"|x(T) - 1/8|_inf = {dist:.2e}, max V increase {rise:.2e}")


def test_entropy_dissipation_identity(criterion):
    rng = np.random.default_rng(101)
    worst, largest, count = 0.0, -np.inf, 0
    for _ in range(6):
        n = int(rng.integers(3, 11))
        ts, v = random_tgdb_system(n, rng, max_order=3)
        for _ in range(20):
            x = interior_state(n, rng, low=0.01)
            closed = analysis.entropy_rate_closed_form(ts, x, v)
            worst = max(worst, abs(closed - analysis.entropy_rate_chain_rule(ts, x, v)))
            largest = max(largest, closed)
            count += 1
    criterion("entropy-dissipation identity", worst <= 1e-10 and largest <= 0.0,
              f"{count} states, max |closed - chain| = {worst:.2e}, max rate = {largest:.2e}")


def test_jacobian_correctness(criterion):
    rng = np.random.default_rng(202)
    worst_rel, worst_col = 0.0, 0.0
    for _ in range(50):
        n = int(rng.integers(2, 11))
        ts, _ = random_tgdb_system(n, rng, max_order=3)
        x = interior_state(n, rng)
        J = jacobian(ts, x)
        Jfd = central_difference_jacobian(lambda y: vector_field(ts, y), x)
        worst_rel = max(worst_rel, np.abs(J - Jfd).max() / np.abs(J).max())
        worst_col = max(worst_col, np.abs(J.sum(axis=0)).max())
    criterion("jacobian correctness", worst_rel <= 1e-5 and worst_col <= 1e-10,
              f"50 pairs, max relative error {worst_rel:.2e}, max column sum {worst_col:.2e}")


def test_spectral_gap_oracle(criterion):
    worst = 0.0
    for n in (3, 5, 8):
        for s in (0.5, 1.0, 2.0):
            ts = encode_structured_kernel(complete_kernel(n, s))
            gap, _ = analysis.spectral_gap(ts, np.full(n, 1 / n))
            worst = max(worst, abs(gap - n * s))
    criterion("spectral gap oracle", worst <= 1e-8, f"max |c_gap - n s| = {worst:.2e}")


def test_equilibrium_solvers_agree(criterion):
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 11))
        ts, _ = random_tgdb_system(n, rng, max_order=3)
        a = np.asarray(analysis.equilibrium_from_tgdb(ts))
        b = np.asarray(analysis.equilibrium_newton(ts, interior_state(n, rng)))
        worst = max(worst, float(np.abs(a - b).max()))
    try:
        analysis.equilibrium_from_tgdb(nonuniqueness_system())
        rejected = False
    except DisconnectedSupportError:
        rejected = True
    criterion("equilibrium solvers agree", worst <= 1e-10 and rejected,
              f"20 systems, max disagreement {worst:.2e}, nonuniqueness rejected: {rejected}")


def test_sensitivity_scaling(tmp_path, criterion):
    t0 = time.perf_counter()
    sweep = run_sweep(baseline_config(), tmp_path / "sweep")
    elapsed = time.perf_counter() - t0
    # same fixed direction, additional small levels for the first-order check
    small = run_sweep(baseline_config(sweep=SweepConfig(levels=[0.0125, 0.025, 0.05])),
                      tmp_path / "small")
    rows = small["rows"]
    rows = rows[(rows[:, 2] > 0) & (rows[:, 2] <= 0.05)]
    rel = float((rows[:, 5] / rows[:, 3]).max())
    ok = 0.85 <= sweep["slope"] <= 1.15 and rel <= 0.10 and elapsed < 60.0
    criterion("sensitivity scaling", ok,
              f"slope {sweep['slope']:.4f}, max first-order relative gap at <= 0.05 is {rel:.2e}, "
              f"runtime {elapsed:.1f}s")


def test_quadratic_remainder(criterion):
    cfg = baseline_config()
    system = build_system(cfg)
    v = analysis.equilibrium_from_tgdb(system.tensors)
    ratios = []
    for k in range(10):
        unit = generate_perturbation(8, 1.0, False, derive_seed(cfg.seed, STREAM_SWEEP, 1000 + k))
        gaps = []
        for eps in (0.1, 0.05):
            pert = perturb_system(system, eps * unit, eps, 0)
            gaps.append(analysis.sensitivity_first_order(system.tensors, pert.delta, v).first_order_gap)
        ratios.append(gaps[0] / gaps[1])
    ok = all(3.0 <= r <= 5.0 for r in ratios)
    criterion("quadratic remainder", ok, f"halving ratios in [{min(ratios):.3f}, {max(ratios):.3f}]")


def test_quadratic_dissipation_certificate(baseline, criterion):
    result, _ = baseline
    traj = result["trajectory"]
    c = result["certificate"]["c"]
    v = np.full(8, 1 / 8)
    tensors = build_system(baseline_config()).tensors
    rates = np.array([analysis.entropy_rate_closed_form(tensors, x, v) for x in traj.states])
    margin = rates + c * np.sum((traj.states - v) ** 2, axis=1)
    criterion("quadratic dissipation certificate", bool(np.all(margin <= 0.0)),
              f"c = {c:.4f}, worst dV/dt + c|x - v|^2 = {margin.max():.2e} over {len(margin)} states")


def test_iss_envelope(tmp_path, baseline, criterion):
    perturbed = run_perturbed(baseline_config(), tmp_path)
    report, consts = perturbed["report"], perturbed["constants"]
    nominal = baseline[0]["trajectory"]
    env = np.exp(-consts.eta * nominal.times) * nominal.entropy[0] + 1e-9
    nominal_excess = float((nominal.entropy - env).max())
    ok = report["violations"] == 0 and report["pre_clip_norm"] == 0.3 and nominal_excess <= 0.0
    criterion("iss envelope", ok,
              f"{report['violations']} violations ({report['excluded_samples']} samples before entering the "
              f"floor set), eta = {consts.eta:.4f}, nominal worst excess {nominal_excess:.2e}")


def test_multiagent(tmp_path, criterion):
    cfg = baseline_config()
    t0 = time.perf_counter()
    result = run_multiagent(cfg, tmp_path)
    elapsed = time.perf_counter() - t0
    md0, md40 = result["initial_mean_dist"], result["final_mean_dist"]
    # keep integrating past t = 40 to see that the residual oscillation stays bounded
    cfg.multiagent.t_final = 80.0
    mas, start = swarm_setup(cfg)
    longer = simulate_swarm(mas, start)
    tail = float(longer.mean_distance[longer.times >= 40.0].max())
    ok = result["momentum_drift"] <= 1e-9 and md40 < 0.1 * md0 and tail < 0.1 * md0 and elapsed < 10.0
    criterion("multi-agent consensus", ok,
              f"momentum drift {result['momentum_drift']:.2e}, mean distance {md0:.3f} -> {md40:.4f}, "
              f"max over [40, 80] {tail:.4f}, runtime {elapsed:.2f}s")


def test_determinism(tmp_path, criterion, capsys):
    differing, compared = [], []
    for command in ("simulate", "perturbed", "sweep", "spectral", "check", "multiagent"):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / command / run
            assert main([command, "--out", str(out), "--seed", "42"]) == 0
            outs.append(out)
        for path in sorted(outs[0].iterdir()):
            compared.append(path.suffix)
            if path.read_bytes() != (outs[1] / path.name).read_bytes():
                differing.append(f"{command}/{path.name}")
    capsys.readouterr()
    criterion("determinism", not differing,
              f"{len(compared)} output files ({compared.count('.csv')} CSV) compared byte for byte"
              + (f"; differing: {differing}" if differing else ""))
