"""
Command-line subcommands: spectrum, simulate, fk, qsd, verify and bounds.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 inconclusive verification, 4 failed verification.
"""
import argparse
import logging
import sys
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.api.lab_api import bounds_sweep, compute_spectrum
from src.models.fields import FieldEvaluationError
from src.models.reports import FAIL, INCONCLUSIVE, ConvergenceReport
from src.models.test_functions import parse_test_function
from src.montecarlo.branching import mean_total_mass, simulate_branching
from src.montecarlo.diffusion import SimulationError
from src.montecarlo.feynman_kac import WeightOverflowError, feynman_kac_estimate
from src.montecarlo.qsd import WeightUnderflowError, qsd_sample, spectral_nu_sampler
from src.problem.assumptions import check_assumptions, classify_trend
from src.spectral.decomposition import (
    DegenerateSpectrumError,
    InvalidDecompositionError,
    SolverError,
    SpectralDecomposition,
    box_stability,
    save_decomposition,
)
from src.spectral.expansion import eigenfunction_envelope_check
from src.spectral.grid import Grid
from src.spectral.operator import DiscretizationError, NonConfiningError
from src.utils.config import BoundsSection, ConfigError, RunConfig, load_config, setup_logging
from src.utils.io import append_line, write_csv
from src.verify.checks import (
    check_ass1_condition,
    check_duality,
    check_gap_rate,
    check_qsd,
    check_total_mass,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_INCONCLUSIVE = 3
EXIT_FAIL = 4

NUMERIC_ERRORS = (
    SolverError,
    DegenerateSpectrumError,
    NonConfiningError,
    DiscretizationError,
    InvalidDecompositionError,
    SimulationError,
    WeightOverflowError,
    WeightUnderflowError,
    FieldEvaluationError,
)
ENVELOPE_MODES = 5


def _grid(cfg: RunConfig) -> Grid:
    try:
        return Grid(cfg.model.dimension, cfg.grid.R, cfg.grid.n)
    except ValueError as e:
        raise ConfigError(f"Invalid [grid] section: {str(e)}")


def _spectrum(cfg: RunConfig) -> SpectralDecomposition:
    cfg.require("model", "grid")
    return compute_spectrum(
        cfg.model, _grid(cfg), cfg.grid.m_modes, cfg.grid.tol, cfg.grid.method, cfg.grid.confine
    )


def _point_columns(points: np.ndarray) -> Dict[str, np.ndarray]:
    if points.shape[1] == 1:
        return {"x": points[:, 0]}
    return {f"x{i}": points[:, i] for i in range(points.shape[1])}


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    """Eigenvalue CSV, eigenvector store and ground-state profile."""
    dec = _spectrum(cfg)
    spec = cfg.model
    lambda0 = float(dec.eigenvalues[0])
    extra = {
        "model_hash": spec.fingerprint(),
        "shift": f"{dec.shift:.12g}",
        "trend": classify_trend(lambda0),
    }
    write_csv(dec.to_frame(), out / "eigenvalues.csv", cfg.config_hash, None, extra)
    save_decomposition(dec, out / "eigenvectors.npz")

    profile = pd.DataFrame(_point_columns(dec.grid.nodes))
    profile["phi_tilde_0"] = dec.phi_tilde[0]
    profile["phi_0"] = dec.phi[0]
    write_csv(profile, out / "ground_state.csv", cfg.config_hash, None, {"model_hash": spec.fingerprint()})

    if cfg.grid.stability:
        stability = box_stability(spec, dec.grid, min(2, dec.m_modes), cfg.grid.tol)
        write_csv(pd.DataFrame([stability]), out / "box_stability.csv", cfg.config_hash)
    if cfg.grid.envelope_modes > 0:
        params = (cfg.bounds or BoundsSection()).params()
        result = eigenfunction_envelope_check(dec, spec, params, min(cfg.grid.envelope_modes, dec.m_modes - 1))
        table = pd.DataFrame({"mode": result.modes, "log_ratio": result.log_ratios})
        write_csv(
            table,
            out / "envelope.csv",
            cfg.config_hash,
            None,
            {"C0": f"{result.fitted_c0:.6g}", "T0": f"{result.fitted_t0:.6g}", "pass": result.passed,
             "excluded_nodes": result.excluded_nodes},
        )
    print(f"lambda_0 = {lambda0:.10g} ({classify_trend(lambda0)}); gap = {dec.gap:.10g}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    """Population time series of the branching system."""
    cfg.require("model", "sim")
    sim = cfg.sim
    sim_cfg = sim.to_sim_config()
    run = simulate_branching(cfg.model, list(sim.x0), sim_cfg, sim.sample_times)
    extra = {"model_hash": cfg.model.fingerprint(), "dt": sim.dt}
    write_csv(run.to_frame(), out / "population.csv", cfg.config_hash, sim.seed, extra)
    mass = mean_total_mass(run)
    write_csv(mass, out / "mean_mass.csv", cfg.config_hash, sim.seed, extra)
    if run.n_replicas and run.capped.any():
        logger.warning(f"{int(run.capped.sum())} replicas capped; excluded from mean_mass.csv")
    for row in mass.itertuples():
        print(f"t={row.t:g}: mean N_t = {row.mean:.6g} +- {row.std_error:.3g}")
    return EXIT_OK


def cmd_fk(cfg: RunConfig, out: Path) -> int:
    """Feynman-Kac estimates of P_t phi(x0) at the sample times."""
    cfg.require("model", "sim")
    sim = cfg.sim
    sim_cfg = sim.to_sim_config()
    phi = parse_test_function(sim.phi)
    estimates = [feynman_kac_estimate(cfg.model, list(sim.x0), t, phi, sim_cfg) for t in sim.sample_times]
    extra = {"model_hash": cfg.model.fingerprint(), "phi": phi.name, "dt": sim.dt}
    if not phi.bounded:
        extra["unbounded_phi"] = True
    write_csv(pd.DataFrame([e.to_row() for e in estimates]), out / "fk.csv", cfg.config_hash, sim.seed, extra)
    for e in estimates:
        print(f"P_{e.t:g} {e.phi}({list(e.x0)}) = {e.estimate:.6g} +- {e.std_error:.3g}")
    return EXIT_OK


def cmd_qsd(cfg: RunConfig, out: Path) -> int:
    """Weighted cloud at t_max, started from the spectral nu (or from x0 without a grid)."""
    cfg.require("model", "sim")
    sim = cfg.sim
    if cfg.grid is not None:
        nu0 = spectral_nu_sampler(_spectrum(cfg))
    else:
        start = cfg.model.points(list(sim.x0))

        def nu0(rng: np.random.Generator, n: int) -> np.ndarray:
            return np.repeat(start, n, axis=0)

        nu0.name = f"dirac{list(sim.x0)}"
    cloud = qsd_sample(cfg.model, nu0, sim.t_max, sim.to_sim_config())
    extra = {"model_hash": cfg.model.fingerprint(), "nu0": cloud.nu0, "t": sim.t_max}
    write_csv(cloud.to_frame(), out / "qsd_cloud.csv", cfg.config_hash, sim.seed, extra)
    summary = pd.DataFrame(
        [{
            "t": cloud.t,
            "normalizing_constant": cloud.normalizing_constant,
            "std_error": cloud.normalizing_std_error,
            "effective_sample_size": cloud.effective_sample_size,
            "n_paths": cloud.n_paths,
        }]
    )
    write_csv(summary, out / "qsd_summary.csv", cfg.config_hash, sim.seed, extra)
    print(f"normalizing constant {cloud.normalizing_constant:.6g}, ESS {cloud.effective_sample_size:.1f}")
    return EXIT_OK


def _quadrature_report(name: str, result) -> ConvergenceReport:
    reason = "" if result.finite or result.diverged else result.diagnostic or "quadrature did not converge"
    return ConvergenceReport(
        name=name,
        times=[0.0],
        lhs=[result.value],
        rhs=[0.0],
        errors=[0.0 if result.finite else float("inf")],
        tolerances=[0.0],
        checked=[True],
        inconclusive_reason=reason,
        notes={"radius": result.radius, "diverged": result.diverged},
    )


def _envelope_report(dec: SpectralDecomposition, cfg: RunConfig, params) -> ConvergenceReport:
    result = eigenfunction_envelope_check(dec, cfg.model, params, min(ENVELOPE_MODES, dec.m_modes - 1))
    with np.errstate(divide="ignore"):
        log_c0 = np.log(result.fitted_c0)
    fitted = [log_c0 + dec.eigenvalues[m] * result.fitted_t0 / 2.0 for m in result.modes]
    reason = "" if np.isfinite(log_c0) else "fitted C0 underflows"
    return ConvergenceReport(
        name="envelope",
        times=[float(m) for m in result.modes],
        lhs=result.log_ratios,
        rhs=[float(v) for v in fitted],
        errors=[float(a - b) for a, b in zip(result.log_ratios, fitted)],
        tolerances=[float(np.log(10.0))] * len(result.modes),
        checked=[True] * len(result.modes),
        fitted_c0=result.fitted_c0,
        fitted_t0=result.fitted_t0,
        inconclusive_reason=reason,
        notes={"excluded_nodes": result.excluded_nodes, "row_key": "mode"},
    )


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    """Run the selected checks; the exit code summarizes their verdicts."""
    cfg.require("model", "verify")
    verify = cfg.verify
    spec = cfg.model
    bounds = cfg.bounds or BoundsSection()
    params = bounds.params()
    stochastic = {"total_mass", "qsd", "duality"} & set(verify.checks)
    spectral = {"total_mass", "gap_rate", "qsd", "envelope"} & set(verify.checks)
    if stochastic:
        cfg.require("sim")
    dec: Optional[SpectralDecomposition] = None
    if spectral:
        dec = _spectrum(cfg)
        if verify.lambda0_offset:
            eigenvalues = dec.eigenvalues.copy()
            eigenvalues[0] += verify.lambda0_offset
            dec = replace(dec, eigenvalues=eigenvalues)
            logger.warning(f"lambda_0 offset by {verify.lambda0_offset} for this verification run")
    sim_cfg = cfg.sim.to_sim_config() if cfg.sim is not None else None

    runners: Dict[str, Callable[[], ConvergenceReport]] = {
        "total_mass": lambda: check_total_mass(spec, dec, list(verify.x0), verify.times, sim_cfg),
        "gap_rate": lambda: check_gap_rate(
            spec, dec, parse_test_function(verify.gap_phi), verify.gap_times, verify.trusted_radius, params
        ),
        "qsd": lambda: check_qsd(
            spec, dec, verify.qsd_times, [parse_test_function(p) for p in verify.phis], sim_cfg
        ),
        "duality": lambda: check_duality(spec, list(verify.x0), verify.times[-1], sim_cfg),
        "ass1": lambda: _quadrature_report(
            "ass1",
            check_ass1_condition(
                spec, params, parse_test_function(verify.ass1_phi), bounds.box_radius, bounds.quad_tol
            ),
        ),
        "envelope": lambda: _envelope_report(dec, cfg, params),
    }

    summary = out / "summary.txt"
    if summary.exists():
        summary.unlink()
    statuses: List[str] = []
    for name in verify.checks:
        report = runners[name]()
        statuses.append(report.status)
        write_csv(
            report.to_frame(),
            out / "checks" / f"{name}.csv",
            cfg.config_hash,
            cfg.sim.seed if cfg.sim is not None else None,
            {"status": report.status},
        )
        (out / "checks" / f"{name}.json").write_text(report.to_json() + "\n")
        append_line(summary, report.verdict_line())
        print(report.verdict_line())

    if FAIL in statuses:
        return EXIT_FAIL
    if INCONCLUSIVE in statuses:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_bounds(cfg: RunConfig, out: Path) -> int:
    """Sweep mu(H_{c,c0}) over the (c, c0) grid and sample the standing assumptions."""
    cfg.require("model", "bounds")
    bounds = cfg.bounds
    exponents = None
    if cfg.model_table.get("family") == "example13":
        exponents = (float(cfg.model_table["alpha"]), float(cfg.model_table["beta"]))
    table, notes = bounds_sweep(cfg.model, bounds, exponents)
    extra = {"model_hash": cfg.model.fingerprint(), "branch": bounds.branch}
    extra.update(notes)
    write_csv(table, out / "bounds_sweep.csv", cfg.config_hash, None, extra)

    report = check_assumptions(cfg.model, bounds.radii, bounds.thetas, bounds.quad_tol, bounds.ball_samples)
    write_csv(
        report.to_frame(),
        out / "assumptions.csv",
        cfg.config_hash,
        None,
        {"verdict": report.verdict, "branch_detected": report.branch_detected},
    )
    print(f"admissible={notes['admissible']}; {int(table['converged'].sum())}/{len(table)} cells converged")
    print(report.verdict_line())
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, Path], int]] = {
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "fk": cmd_fk,
    "qsd": cmd_qsd,
    "verify": cmd_verify,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--scenario", help="bundled scenario: harmonic, ou-kappa, yule, critical")
    common.add_argument("--out", help="output directory (default from [output])")
    common.add_argument("--seed", type=int, help="overrides [sim].seed")

    parser = argparse.ArgumentParser(
        prog="branching-lab",
        description="Spectral and Monte Carlo laboratory for branching diffusions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=func.__doc__.strip().splitlines()[0])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the exit code."""
    setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        cfg = load_config(args.config, args.scenario, args.seed)
        out = Path(args.out or cfg.output.directory)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as e:
        print(f"configuration error: {str(e)}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as e:
        print(f"numerical failure: {str(e)}", file=sys.stderr)
        residuals = getattr(e, "residuals", None)
        if residuals is not None:
            print(f"best residuals: {np.asarray(residuals).tolist()}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"usage error: {str(e)}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}")
        logger.error(traceback.format_exc())
        return EXIT_NUMERIC
