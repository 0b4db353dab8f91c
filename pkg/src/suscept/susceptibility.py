"""Cost Hessian, eigen-spectrum, eigenpredictions, eigencycles, and the
brute-force cost oracle.

The susceptibility of the oscillator is the Hessian, at zero perturbation,
of the squared distance between the perturbed and unperturbed y(tau) time
series over one unit period,

    H[a, b] = integral_0^1 J[tau, a] J[tau, b] dtau,      H = J^T J,

with J the total sensitivity from :mod:`suscept.sensitivity`.  H is
assembled from the adaptively accumulated Gram matrix G of the P+2 basis
functions and the correction coefficient matrix A as H = A^T G A.

Numerical route: the Gram matrix is factored as G = L L^T (symmetric
eigenvalue square root, clipped at zero), and the eigensystem of H is read
off the singular value decomposition of L^T A.  In exact arithmetic this
is the eigendecomposition of H; in floating point it is far better
conditioned, because singular values are computed with small relative
error down to sigma_1 * eps rather than eigenvalues with absolute error
lambda_1 * eps.  Spreads of eighteen decades (sigma spreads of nine) stay
resolvable in double precision this way.  Eigenpredictions inherit exact
orthonormality from the left singular vectors, which are also their
coordinates in the quadrature geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import ModelConfig, rhs, zero_parameters
from .ode import DEFAULT_SETTINGS, IntegratorSettings, integrate
from .orbit import LimitCycle, find_cycle
from .sensitivity import (
    CorrectionCoefficients,
    SensitivityBundle,
    correction_matrix,
)

__all__ = [
    "ConvergenceFailure",
    "Hessian",
    "EigenSystem",
    "Eigenprediction",
    "Eigencycle",
    "PowerLawFit",
    "NOISE_FLOOR_FACTOR",
    "assemble_hessian",
    "hessian_from_gram",
    "eigendecompose",
    "eigenpredictions",
    "default_output_grid",
    "prediction_gram",
    "eigencycles",
    "cost_oracle",
    "fit_power_laws",
]

# eigenvalues below lambda_1 times this factor are flagged untrusted: an
# 18-decade spread brushes the limits of double precision
NOISE_FLOOR_FACTOR = 1e-15


class ConvergenceFailure(RuntimeError):
    """The symmetric eigensolver or SVD failed to converge."""


@dataclass(frozen=True)
class Hessian:
    """Susceptibility Hessian at zero perturbation.

    ``matrix`` is exactly symmetric by construction (upper triangle
    computed, mirrored) and positive semidefinite up to the quadrature
    noise floor.  ``factor`` is the quadrature square root M = L^T A with
    matrix = M^T M; it carries the extra precision needed to resolve the
    small end of the spectrum and the quadrature coordinates of the
    eigenpredictions.
    """

    matrix: np.ndarray
    mu: float
    order: int
    factor: np.ndarray | None = None

    @property
    def n_params(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class EigenSystem:
    """Sorted spectrum of a susceptibility Hessian.

    Eigenvalues descend; eigenvector k is ``eigenvectors[:, k]``, signed so
    that its largest-magnitude component is positive.  Eigenvalues at or
    below ``noise_floor`` are flagged untrusted.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    noise_floor: float

    @property
    def flagged(self) -> np.ndarray:
        return self.eigenvalues <= self.noise_floor

    @property
    def spread(self) -> float:
        """Ratio of the stiffest to the sloppiest eigenvalue."""
        lam = self.eigenvalues
        return float(lam[0] / lam[-1]) if lam[-1] > 0 else math.inf


@dataclass(frozen=True)
class Eigenprediction:
    """Unit-normalized trajectory response of one eigenparameter.

    ``values`` samples delta_y_k(tau) = sum_a J[tau, a] e_k[a] / sqrt(lambda_k)
    on ``tau``; ``quad_coords`` are its coordinates in the quadrature
    geometry (the left singular vector), in which the predictions are
    orthonormal.  ``flagged`` marks modes whose eigenvalue sits at the
    numerical noise floor: they are still normalized, but untrusted.
    """

    rank: int
    tau: np.ndarray
    values: np.ndarray
    amplitude: float
    flagged: bool
    quad_coords: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Eigencycle:
    """Phase-space curve (x(tau), y(tau) + eta * delta_y_k(tau))."""

    rank: int
    tau: np.ndarray
    x: np.ndarray
    y_perturbed: np.ndarray
    y_unperturbed: np.ndarray
    eta: float


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares slope of log lambda_k against log mu for one rank."""

    rank: int
    slope: float
    n_points: int
    used_flagged: bool


def _psd_factor(G: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix, clipping eigenvalues at zero.

    The quadrature Gram can carry tiny negative eigenvalues at its noise
    floor; clipping keeps the assembled Hessian exactly PSD.
    """
    try:
        w, Q = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ConvergenceFailure(f"Gram factorization failed: {exc}") from exc
    return Q * np.sqrt(np.clip(w, 0.0, None))[None, :]


def hessian_from_gram(
    gram: np.ndarray,
    corrections: CorrectionCoefficients,
    mu: float,
    order: int,
) -> Hessian:
    """Assemble H = A^T G A from a basis Gram matrix and corrections."""
    A = correction_matrix(corrections)
    M = _psd_factor(gram).T @ A
    H = M.T @ M
    H = np.triu(H) + np.triu(H, 1).T
    return Hessian(matrix=H, mu=mu, order=order, factor=M)


def assemble_hessian(
    bundle: SensitivityBundle,
    corrections: CorrectionCoefficients,
    settings: IntegratorSettings | None = None,
) -> Hessian:
    """Susceptibility Hessian from an integrated bundle.

    The Gram matrix was accumulated as quadrature state slaved to the
    bundle's own adaptive integration, so the result is independent of any
    output grid; ``settings`` is accepted for signature symmetry but the
    quadrature work is already done.
    """
    del settings
    return hessian_from_gram(
        bundle.gram, corrections, bundle.cfg.mu, bundle.cfg.order
    )


def _apply_sign_convention(vectors: np.ndarray) -> np.ndarray:
    """Flip eigenvector signs so the largest-magnitude component is positive."""
    vectors = vectors.copy()
    for k in range(vectors.shape[1]):
        i = int(np.argmax(np.abs(vectors[:, k])))
        if vectors[i, k] < 0:
            vectors[:, k] *= -1.0
    return vectors


def eigendecompose(hessian: Hessian | np.ndarray) -> EigenSystem:
    """Sorted eigen-decomposition with the package sign convention.

    Given a :class:`Hessian` carrying its quadrature factor, the spectrum
    is read off the SVD of the factor (lambda = sigma^2), which resolves
    eigenvalues down to the square of the factor's relative accuracy.  A
    bare symmetric matrix falls back to the symmetric eigensolver.
    """
    if isinstance(hessian, Hessian) and hessian.factor is not None:
        try:
            _, sigma, vt = np.linalg.svd(hessian.factor, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(f"SVD of the Hessian factor failed: {exc}") from exc
        lam = sigma * sigma
        vectors = vt.T
    else:
        matrix = hessian.matrix if isinstance(hessian, Hessian) else np.asarray(hessian)
        try:
            lam, vectors = np.linalg.eigh(matrix)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(f"symmetric eigensolver failed: {exc}") from exc
        lam = lam[::-1]
        vectors = vectors[:, ::-1]
    return EigenSystem(
        eigenvalues=lam,
        eigenvectors=_apply_sign_convention(vectors),
        noise_floor=float(lam[0] * NOISE_FLOOR_FACTOR),
    )


def default_output_grid(bundle: SensitivityBundle, uniform: int = 2001) -> np.ndarray:
    """Output grid for predictions and cycles: the integrator's accepted
    tau steps (naturally dense at the jumps) merged with a uniform overlay."""
    return np.union1d(bundle.tau_steps, np.linspace(0.0, 1.0, uniform))


def eigenpredictions(
    bundle: SensitivityBundle,
    corrections: CorrectionCoefficients,
    eigsys: EigenSystem,
    output_grid: np.ndarray | None = None,
) -> list[Eigenprediction]:
    """Sample every eigenprediction on the output grid.

    All modes are normalized through the factored route (division by the
    singular value, which stays relatively accurate even at the bottom of
    the spectrum); modes at the noise floor keep their untrusted flag.
    """
    if output_grid is None:
        output_grid = default_output_grid(bundle)
    taus = np.asarray(output_grid, dtype=float)
    A = correction_matrix(corrections)
    jac = bundle.basis_values(taus) @ A  # (n, P)
    flags = eigsys.flagged
    sqrt_lam = np.sqrt(eigsys.eigenvalues)
    basis_coords = _psd_factor(bundle.gram).T @ A
    out = []
    for k in range(eigsys.eigenvalues.size):
        e_k = eigsys.eigenvectors[:, k]
        if sqrt_lam[k] > 0:
            values = (jac @ e_k) / sqrt_lam[k]
            coords = (basis_coords @ e_k) / sqrt_lam[k]
        else:  # exactly zero eigenvalue: leave the (zero) response raw
            values = jac @ e_k
            coords = basis_coords @ e_k
        out.append(
            Eigenprediction(
                rank=k + 1,
                tau=taus,
                values=values,
                amplitude=float(np.max(np.abs(values))),
                flagged=bool(flags[k]),
                quad_coords=coords,
            )
        )
    return out


def prediction_gram(predictions: Sequence[Eigenprediction]) -> np.ndarray:
    """Pairwise quadrature inner products of eigenpredictions.

    Computed in quadrature coordinates, where the inner product is the
    plain dot product; for unflagged modes the result is the identity to
    machine precision.
    """
    W = np.column_stack([p.quad_coords for p in predictions])
    return W.T @ W


def eigencycles(
    cycle: LimitCycle,
    cfg: ModelConfig,
    prediction: Eigenprediction,
    eta: float | None = None,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
    orbit_samples: tuple[np.ndarray, np.ndarray] | None = None,
) -> Eigencycle:
    """Phase-space curve of the orbit displaced along one eigenprediction.

    ``eta`` defaults to 5% of the orbit's y amplitude divided by the mode
    amplitude: visible but perturbative.  ``orbit_samples`` may supply
    precomputed (x, y) samples on the prediction's grid to avoid
    re-integrating the orbit.
    """
    taus = prediction.tau
    if orbit_samples is None:
        T = cycle.period

        def fun(t, z):
            return T * rhs(z, None, cfg)

        traj = integrate(fun, cycle.anchor, (0.0, 1.0), settings)
        Z = traj(taus)
        x, y = Z[0], Z[1]
    else:
        x, y = orbit_samples
    if eta is None:
        y_amp = 0.5 * (np.max(y) - np.min(y))
        eta = 0.05 * y_amp / prediction.amplitude if prediction.amplitude > 0 else 0.0
    return Eigencycle(
        rank=prediction.rank,
        tau=taus,
        x=np.asarray(x),
        y_perturbed=y + eta * prediction.values,
        y_unperturbed=np.asarray(y),
        eta=float(eta),
    )


def cost_oracle(
    cfg: ModelConfig,
    a: np.ndarray | None,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
    *,
    base: LimitCycle | None = None,
) -> float:
    """Brute-force trajectory-change cost, independent of the sensitivity
    machinery.

    Settles the perturbed system onto its own attractor with the same
    section convention, measures its own period, rescales both orbits to
    unit period, and accumulates

        C = 1/2 integral_0^1 (y_pert(tau) - y_base(tau))^2 dtau

    as quadrature state of a five-dimensional coupled integration.  This is
    the validation target for the analytic Hessian: for small coefficient
    steps h along an eigenvector, C(h e_k) ~ 1/2 lambda_k h^2.
    """
    a = zero_parameters(cfg.order) if a is None else np.asarray(a, dtype=float)
    if not np.any(a):
        return 0.0  # the cost of a trajectory against itself
    if base is None:
        base = find_cycle(cfg, None, settings)
    pert = find_cycle(cfg, a, settings, start=base.anchor)
    T_p, T_b = pert.period, base.period

    def fun(t, w):
        fp = rhs(w[0:2], a, cfg)
        fb = rhs(w[2:4], None, cfg)
        d = w[1] - w[3]
        return np.array([T_p * fp[0], T_p * fp[1], T_b * fb[0], T_b * fb[1], 0.5 * d * d])

    w0 = np.concatenate([pert.anchor, base.anchor, [0.0]])
    traj = integrate(fun, w0, (0.0, 1.0), settings)
    return float(traj.states[-1, 4])


def fit_power_laws(
    mus: np.ndarray,
    eigenvalues: np.ndarray,
    flags: np.ndarray | None = None,
    window: tuple[float, float] = (10.0, 100.0),
    min_points: int = 4,
) -> list[PowerLawFit]:
    """Per-rank least-squares slope of log lambda against log mu.

    ``eigenvalues`` has one row per mu value and one column per rank.
    Flagged (noise-floor) eigenvalues are excluded from the fit; if that
    leaves a rank with fewer than ``min_points`` points in the window, the
    fit for that rank falls back to all window points and is marked
    ``used_flagged``.
    """
    mus = np.asarray(mus, dtype=float)
    lam = np.asarray(eigenvalues, dtype=float)
    if flags is None:
        flags = np.zeros(lam.shape, dtype=bool)
    in_window = (mus >= window[0]) & (mus <= window[1])
    fits = []
    for k in range(lam.shape[1]):
        usable = in_window & ~flags[:, k] & (lam[:, k] > 0)
        used_flagged = False
        if usable.sum() < min_points:
            usable = in_window & (lam[:, k] > 0)
            used_flagged = True
        if usable.sum() < 2:
            fits.append(PowerLawFit(k + 1, math.nan, int(usable.sum()), used_flagged))
            continue
        slope = np.polyfit(np.log10(mus[usable]), np.log10(lam[usable, k]), 1)[0]
        fits.append(PowerLawFit(k + 1, float(slope), int(usable.sum()), used_flagged))
    return fits
