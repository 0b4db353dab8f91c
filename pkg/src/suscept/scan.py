"""Scan driver: per-mu susceptibility pipeline, cross-mu fits, file output.

One mu point runs the full chain

    settle -> measure period -> variational bundle -> corrections
           -> Hessian -> eigensystem -> eigenpredictions -> eigencycles

and reduces everything to plain arrays, so points can be dispatched to a
process pool and merged deterministically (ordered by mu, single writer).
A failure at one mu is recorded in the report and leaves every other point
intact.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .dynamics import ModelConfig, enumerate_parameters, param_count
from .ode import DEFAULT_SETTINGS, IntegratorSettings
from .orbit import find_cycle
from .sensitivity import (
    floquet_defect,
    integrate_variational,
    solve_corrections,
    total_jacobian_basis,
)
from .susceptibility import (
    assemble_hessian,
    cost_oracle,
    default_output_grid,
    eigencycles,
    eigendecompose,
    eigenpredictions,
    fit_power_laws,
    prediction_gram,
)

__all__ = [
    "ConfigError",
    "ScanConfig",
    "MuPointRecord",
    "ScanReport",
    "OracleCheck",
    "DEFAULT_MU_GRID",
    "EMIT_CHOICES",
    "run_mu_point",
    "run_scan",
    "run_validation",
    "load_config_file",
    "fmt_float",
]

DEFAULT_MU_GRID = tuple(float(m) for m in np.geomspace(1.0, 100.0, 13))
EMIT_CHOICES = (
    "eigenvalues",
    "eigenvectors",
    "predictions",
    "cycles",
    "summary",
    "oracle-checks",
)
DEFAULT_EMIT = ("eigenvalues", "eigenvectors", "predictions", "cycles", "summary")

PERIOD_MU1_REFERENCE = 6.663
SLOPE_FIT_WINDOW = (10.0, 100.0)
# target size for finite-difference oracle costs: far above the integration
# noise floor, far below the quadratic regime's edge
ORACLE_COST_TARGET = 1e-9


class ConfigError(ValueError):
    """Invalid scan configuration; the message names the offending field."""


def fmt_float(x: float) -> str:
    """Decimal scientific notation with 17 significant digits (exact
    double round-trip)."""
    return f"{x:.16e}"


@dataclass(frozen=True)
class ScanConfig:
    mu_values: tuple[float, ...] = DEFAULT_MU_GRID
    order: int = 4
    rtol: float = 1e-11
    atol: float = 1e-13
    output_dir: str = "suscept-results"
    emit: tuple[str, ...] = DEFAULT_EMIT
    jobs: int | None = None

    def __post_init__(self) -> None:
        mus = tuple(float(m) for m in self.mu_values)
        object.__setattr__(self, "mu_values", mus)
        object.__setattr__(self, "emit", tuple(self.emit))
        if not mus:
            raise ConfigError("mu_values: at least one value required")
        if any(not (math.isfinite(m) and m > 0) for m in mus):
            raise ConfigError(f"mu_values: all values must be positive, got {mus}")
        if any(b <= a for a, b in zip(mus, mus[1:])):
            raise ConfigError(f"mu_values: must be strictly increasing, got {mus}")
        if self.order < 1:
            raise ConfigError(f"order: must be >= 1, got {self.order}")
        try:
            self.settings()
        except ValueError as exc:
            raise ConfigError(f"rtol/atol: {exc}") from exc
        unknown = set(self.emit) - set(EMIT_CHOICES)
        if unknown:
            raise ConfigError(
                f"emit: unknown outputs {sorted(unknown)}; choices are {EMIT_CHOICES}"
            )
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"jobs: must be >= 1, got {self.jobs}")

    def settings(self) -> IntegratorSettings:
        return IntegratorSettings(rtol=self.rtol, atol=self.atol)

    def provenance(self) -> dict:
        return {
            "mu_values": list(self.mu_values),
            "order": self.order,
            "rtol": self.rtol,
            "atol": self.atol,
            "output_dir": self.output_dir,
            "emit": list(self.emit),
            "jobs": self.jobs,
        }

    @classmethod
    def from_provenance(cls, block: dict) -> "ScanConfig":
        return cls(
            mu_values=tuple(block["mu_values"]),
            order=int(block["order"]),
            rtol=float(block["rtol"]),
            atol=float(block["atol"]),
            output_dir=str(block["output_dir"]),
            emit=tuple(block["emit"]),
            jobs=block["jobs"],
        )


@dataclass
class MuPointRecord:
    """Everything one mu point contributes to the report, as plain arrays."""

    mu: float
    order: int
    error: str | None = None
    period: float = math.nan
    residual: float = math.nan
    floquet_defect: float = math.nan
    anchor: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    flagged: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None
    noise_floor: float = math.nan
    dx0_da: np.ndarray | None = None
    dT_da: np.ndarray | None = None
    hessian_min_eigenvalue: float = math.nan
    jacobian_at_zero: float = math.nan
    jacobian_scale: float = math.nan
    prediction_gram_deviation: float = math.nan
    grid: np.ndarray | None = None
    prediction_values: np.ndarray | None = None  # (P, n)
    amplitudes: np.ndarray | None = None
    cycle_x: np.ndarray | None = None
    cycle_y: np.ndarray | None = None
    cycle_y_perturbed: np.ndarray | None = None  # (P, n)
    etas: np.ndarray | None = None
    wall_time: float = math.nan

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def spread(self) -> float:
        lam = self.eigenvalues
        if lam is None or lam[-1] <= 0:
            return math.inf
        return float(lam[0] / lam[-1])


def run_mu_point(
    mu: float,
    order: int = 4,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
    *,
    want_modes: bool = True,
) -> MuPointRecord:
    """Run the full susceptibility pipeline at one mu value."""
    started = time.perf_counter()
    cfg = ModelConfig(mu=mu, order=order)
    cycle = find_cycle(cfg, None, settings)
    bundle = integrate_variational(cycle, cfg, settings)
    corrections = solve_corrections(bundle)
    hessian = assemble_hessian(bundle, corrections)
    eigsys = eigendecompose(hessian)

    record = MuPointRecord(mu=mu, order=order)
    record.period = cycle.period
    record.residual = cycle.residual
    record.anchor = cycle.anchor
    record.floquet_defect = floquet_defect(bundle)
    record.eigenvalues = eigsys.eigenvalues
    record.flagged = eigsys.flagged
    record.eigenvectors = eigsys.eigenvectors
    record.noise_floor = eigsys.noise_floor
    record.dx0_da = corrections.dx0_da
    record.dT_da = corrections.dT_da
    record.hessian_min_eigenvalue = float(np.linalg.eigvalsh(hessian.matrix)[0])

    jac = total_jacobian_basis(bundle, corrections)
    record.jacobian_at_zero = float(np.max(np.abs(jac(0.0))))

    if want_modes:
        grid = default_output_grid(bundle)
        preds = eigenpredictions(bundle, corrections, eigsys, grid)
        record.grid = grid
        record.prediction_values = np.vstack([p.values for p in preds])
        record.amplitudes = np.array([p.amplitude for p in preds])
        record.jacobian_scale = float(np.max(np.abs(jac(grid))))
        unflagged = [p for p in preds if not p.flagged]
        gram = prediction_gram(unflagged)
        record.prediction_gram_deviation = float(
            np.max(np.abs(gram - np.eye(len(unflagged))))
        )
        Z = bundle.traj(grid)[:2]
        orbit_samples = (Z[0], Z[1])
        cycles = [
            eigencycles(cycle, cfg, p, settings=settings, orbit_samples=orbit_samples)
            for p in preds
        ]
        record.cycle_x = Z[0]
        record.cycle_y = Z[1]
        record.cycle_y_perturbed = np.vstack([c.y_perturbed for c in cycles])
        record.etas = np.array([c.eta for c in cycles])
    else:
        record.jacobian_scale = float(np.max(np.abs(jac(bundle.tau_steps))))

    record.wall_time = time.perf_counter() - started
    return record


def _worker(args: tuple) -> MuPointRecord:
    mu, order, settings, want_modes = args
    try:
        return run_mu_point(mu, order, settings, want_modes=want_modes)
    except Exception as exc:  # per-mu failures must not kill the scan
        return MuPointRecord(mu=mu, order=order, error=f"{type(exc).__name__}: {exc}")


@dataclass
class OracleCheck:
    """One validation row: a measured value against an independent oracle."""

    name: str
    measured: float
    reference: float
    error: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class ScanReport:
    config: ScanConfig
    records: list[MuPointRecord]
    slopes: list = field(default_factory=list)
    oracle_checks: list[OracleCheck] = field(default_factory=list)
    wall_time: float = math.nan

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.records)

    @property
    def exit_code(self) -> int:
        return 0 if self.n_failed == 0 else 1

    def record_for(self, mu: float) -> MuPointRecord:
        for r in self.records:
            if math.isclose(r.mu, mu, rel_tol=1e-12):
                return r
        raise KeyError(f"no record for mu={mu}")


def run_scan(config: ScanConfig) -> ScanReport:
    """Run the scan, write the requested outputs, and return the report."""
    started = time.perf_counter()
    settings = config.settings()
    want_modes = "predictions" in config.emit or "cycles" in config.emit
    tasks = [(mu, config.order, settings, want_modes) for mu in config.mu_values]

    jobs = config.jobs if config.jobs is not None else (os.cpu_count() or 1)
    jobs = min(jobs, len(tasks))
    if jobs <= 1:
        records = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_worker, tasks))
    records.sort(key=lambda r: r.mu)

    report = ScanReport(config=config, records=records)
    good = [r for r in records if r.ok]
    window = [r for r in good if SLOPE_FIT_WINDOW[0] <= r.mu <= SLOPE_FIT_WINDOW[1]]
    if len(window) >= 4:
        report.slopes = fit_power_laws(
            np.array([r.mu for r in window]),
            np.vstack([r.eigenvalues for r in window]),
            np.vstack([r.flagged for r in window]),
            window=SLOPE_FIT_WINDOW,
        )
    if "oracle-checks" in config.emit:
        report.oracle_checks = run_validation(order=config.order, settings=settings)
    report.wall_time = time.perf_counter() - started

    write_outputs(report)
    return report


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_outputs(report: ScanReport) -> None:
    """Serialize a report into the configured output directory."""
    config = report.config
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir: cannot create {out}: {exc}") from exc

    indices = enumerate_parameters(config.order)
    good = [r for r in report.records if r.ok]

    if "eigenvalues" in config.emit:
        rows = (
            (fmt_float(r.mu), str(k + 1), fmt_float(r.eigenvalues[k]), str(int(r.flagged[k])))
            for r in good
            for k in range(r.eigenvalues.size)
        )
        _write_csv(out / "eigenvalues.csv", "mu,rank,lambda,flagged", rows)

    if "eigenvectors" in config.emit:
        rows = (
            (
                fmt_float(r.mu),
                str(k + 1),
                str(idx.m),
                str(idx.n),
                fmt_float(r.eigenvectors[a, k]),
            )
            for r in good
            for k in range(r.eigenvectors.shape[1])
            for a, idx in enumerate(indices)
        )
        _write_csv(out / "eigenvectors.csv", "mu,rank,m,n,component", rows)

    if "predictions" in config.emit:
        rows = (
            (fmt_float(r.mu), str(k + 1), fmt_float(r.grid[i]), fmt_float(r.prediction_values[k, i]))
            for r in good
            if r.grid is not None
            for k in range(r.prediction_values.shape[0])
            for i in range(r.grid.size)
        )
        _write_csv(out / "predictions.csv", "mu,rank,tau,delta_y", rows)

    if "cycles" in config.emit:
        rows = (
            (
                fmt_float(r.mu),
                str(k + 1),
                fmt_float(r.grid[i]),
                fmt_float(r.cycle_x[i]),
                fmt_float(r.cycle_y_perturbed[k, i]),
                fmt_float(r.cycle_y[i]),
                fmt_float(r.etas[k]),
            )
            for r in good
            if r.grid is not None
            for k in range(r.cycle_y_perturbed.shape[0])
            for i in range(r.grid.size)
        )
        _write_csv(
            out / "cycles.csv", "mu,rank,tau,x,y_perturbed,y_unperturbed,eta", rows
        )

    if "summary" in config.emit:
        with open(out / "summary.json", "w") as fh:
            json.dump(_summary_dict(report), fh, indent=2)

    if "oracle-checks" in config.emit:
        with open(out / "oracle_checks.json", "w") as fh:
            json.dump([asdict(c) for c in report.oracle_checks], fh, indent=2)


def _summary_dict(report: ScanReport) -> dict:
    mu_points = []
    for r in report.records:
        entry: dict = {"mu": r.mu, "status": "ok" if r.ok else "failed"}
        if r.ok:
            entry.update(
                {
                    "period": r.period,
                    "residual": r.residual,
                    "floquet_defect": r.floquet_defect,
                    "spread": r.spread,
                    "n_flagged": int(r.flagged.sum()),
                    "noise_floor": r.noise_floor,
                    "eigenvalues": r.eigenvalues.tolist(),
                    "flags": r.flagged.astype(int).tolist(),
                    "dx0_da": r.dx0_da.tolist(),
                    "dT_da": r.dT_da.tolist(),
                    "wall_time_seconds": r.wall_time,
                }
            )
        else:
            entry["error"] = r.error
        mu_points.append(entry)

    summary = {
        "provenance": report.config.provenance(),
        "wall_time_seconds": report.wall_time,
        "n_failed": report.n_failed,
        "mu_points": mu_points,
        "power_law_slopes": {str(f.rank): f.slope for f in report.slopes},
        "slope_fit_points": {str(f.rank): f.n_points for f in report.slopes},
        "slope_fit_used_flagged": {str(f.rank): f.used_flagged for f in report.slopes},
    }

    good = {r.mu: r for r in report.records if r.ok}
    lo, hi = min(good, default=None), max(good, default=None)
    if lo is not None and hi is not None and lo != hi:
        summary["spread_growth"] = {
            "mu_low": lo,
            "mu_high": hi,
            "ratio": good[hi].spread / good[lo].spread,
        }
    if report.oracle_checks:
        summary["oracle_checks"] = [asdict(c) for c in report.oracle_checks]
    return summary


def run_validation(
    order: int = 4,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
    mu: float = 1.0,
) -> list[OracleCheck]:
    """Independent-oracle suite at mu = 1.

    Every check pits the analytic sensitivity pipeline against a value
    obtained without it: the measured period against its reference, the
    correction coefficients against finite differences of re-settled
    perturbed orbits, and Hessian entries/eigenvalues against the
    brute-force trajectory-change cost.
    """
    cfg = ModelConfig(mu=mu, order=order)
    P = param_count(order)
    checks: list[OracleCheck] = []

    base = find_cycle(cfg, None, settings)
    bundle = integrate_variational(base, cfg, settings)
    corrections = solve_corrections(bundle)
    hessian = assemble_hessian(bundle, corrections)
    eigsys = eigendecompose(hessian)

    err = abs(base.period - PERIOD_MU1_REFERENCE)
    checks.append(
        OracleCheck(
            name="period(mu=1) vs simulation reference",
            measured=base.period,
            reference=PERIOD_MU1_REFERENCE,
            error=err,
            tolerance=1e-3,
            passed=bool(err < 1e-3),
            detail="absolute difference",
        )
    )

    def basis_vector(i: int, h: float) -> np.ndarray:
        e = np.zeros(P)
        e[i] = h
        return e

    # dT/da for the linear slow term (canonical index 1) against a central
    # finite difference of the measured period of the re-settled orbit.
    # The constant term (0,0) is useless for a relative comparison: the
    # oscillator's odd symmetry (x, y) -> (-x, -y) maps even-degree
    # perturbations to their negatives, so dT/da vanishes identically for
    # them; it gets its own symmetry check below.
    h = 1e-6
    T_plus = find_cycle(cfg, basis_vector(1, +h), settings, start=base.anchor).period
    T_minus = find_cycle(cfg, basis_vector(1, -h), settings, start=base.anchor).period
    fd = (T_plus - T_minus) / (2 * h)
    analytic = corrections.dT_da[1]
    err = abs(analytic - fd) / abs(fd)
    checks.append(
        OracleCheck(
            name="dT/da[(0,1)] vs finite difference",
            measured=analytic,
            reference=fd,
            error=err,
            tolerance=1e-3,
            passed=bool(err < 1e-3),
            detail=f"central difference, h={h:g}",
        )
    )

    scale = float(np.max(np.abs(corrections.dT_da)))
    T_plus = find_cycle(cfg, basis_vector(0, +h), settings, start=base.anchor).period
    T_minus = find_cycle(cfg, basis_vector(0, -h), settings, start=base.anchor).period
    fd = (T_plus - T_minus) / (2 * h)
    err = max(abs(corrections.dT_da[0]), abs(fd)) / scale
    checks.append(
        OracleCheck(
            name="dT/da[(0,0)] symmetry zero",
            measured=corrections.dT_da[0],
            reference=fd,
            error=err,
            tolerance=1e-3,
            passed=bool(err < 1e-3),
            detail="even-degree perturbations leave the period unchanged to first order",
        )
    )

    # dx0/da for the linear slow term (canonical index 1) against the
    # x shift of the re-settled anchor
    x_plus = find_cycle(cfg, basis_vector(1, +h), settings, start=base.anchor).anchor[0]
    x_minus = find_cycle(cfg, basis_vector(1, -h), settings, start=base.anchor).anchor[0]
    fd = (x_plus - x_minus) / (2 * h)
    analytic = corrections.dx0_da[1]
    err = abs(analytic - fd) / abs(fd)
    checks.append(
        OracleCheck(
            name="dx0/da[(0,1)] vs finite difference",
            measured=analytic,
            reference=fd,
            error=err,
            tolerance=1e-3,
            passed=bool(err < 1e-3),
            detail=f"central difference, h={h:g}",
        )
    )

    # slow diagonal entries of H against the brute-force cost
    indices = enumerate_parameters(order)
    for a in range(order + 1):
        H_aa = hessian.matrix[a, a]
        h_a = math.sqrt(2 * ORACLE_COST_TARGET / H_aa)
        cost = cost_oracle(cfg, basis_vector(a, h_a), settings, base=base)
        fd_H = 2 * cost / (h_a * h_a)
        err = abs(H_aa - fd_H) / abs(fd_H)
        checks.append(
            OracleCheck(
                name=f"H[{indices[a].m},{indices[a].n}] diagonal vs cost oracle",
                measured=H_aa,
                reference=fd_H,
                error=err,
                tolerance=0.05,
                passed=bool(err < 0.05),
                detail=f"2 C(h e_a)/h^2, h={h_a:.3e}",
            )
        )

    # the stiffest three eigenvalues against the cost along the eigenvector
    for k in range(3):
        lam = eigsys.eigenvalues[k]
        h_k = math.sqrt(2 * ORACLE_COST_TARGET / lam)
        cost = cost_oracle(cfg, h_k * eigsys.eigenvectors[:, k], settings, base=base)
        predicted = 0.5 * lam * h_k * h_k
        err = abs(cost - predicted) / predicted
        checks.append(
            OracleCheck(
                name=f"cost along eigenvector {k + 1} vs lambda_{k + 1}",
                measured=cost,
                reference=predicted,
                error=err,
                tolerance=0.10,
                passed=bool(err < 0.10),
                detail=f"C(h e_k) vs lambda h^2/2, h={h_k:.3e}",
            )
        )

    return checks


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat key = value config file into raw strings.

    Blank lines and lines starting with ``#`` are ignored; keys match the
    scan command's flag names.
    """
    raw: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()
    return raw
