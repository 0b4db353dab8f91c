"""Perturbed van der Pol vector field and its analytic derivatives.

The oscillator is written as a slow-fast system in the phase variables
(x, y), with the time-scale parameter mu:

    dx/dt = mu^2 * (x - x^3/3 - y)
    dy/dt = x

Large mu separates the time scales (the ratio is eps = mu^-2); the curve
y = x - x^3/3, where dx/dt vanishes, is the critical manifold.

A polynomial family of perturbations is added to the x equation only,

    dx/dt = mu^2 * (u + sum_{m+n<=N} a[m,n] * u^m * x^n),  u = x - x^3/3 - y,

indexed by pairs (m, n) of nonnegative integers with m + n <= N.  Terms
with m >= 1 vanish identically on the critical manifold u = 0, so they can
only influence the fast jumps ("fast" parameters); terms with m = 0 act on
the slow manifold as well ("slow" parameters).  The pair (1, 0) is
excluded: a multiple of u merely rescales the unperturbed field, which is
the same as changing mu, i.e. the period.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

__all__ = [
    "PerturbationIndex",
    "ModelConfig",
    "enumerate_parameters",
    "param_count",
    "slow_count",
    "zero_parameters",
    "rhs",
    "jacobian_state",
    "jacobian_params",
]


class PerturbationIndex(NamedTuple):
    """Label (m, n) of the perturbation monomial u^m * x^n."""

    m: int
    n: int

    @property
    def is_slow(self) -> bool:
        return self.m == 0


def enumerate_parameters(order: int) -> list[PerturbationIndex]:
    """All indices (m, n) with m + n <= order, excluding (1, 0).

    The ordering is canonical and stable: ascending in m, then ascending in
    n, so the ``order + 1`` slow indices (m = 0) form a contiguous leading
    block.  Every array of coefficients in this package follows this order.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    return [
        PerturbationIndex(m, n)
        for m in range(order + 1)
        for n in range(order + 1 - m)
        if (m, n) != (1, 0)
    ]


def param_count(order: int) -> int:
    """Size of the family, (order + 1)(order + 2)/2 - 1."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    return (order + 1) * (order + 2) // 2 - 1


def slow_count(order: int) -> int:
    """Number of slow indices (m = 0), i.e. order + 1."""
    return order + 1


def zero_parameters(order: int) -> np.ndarray:
    """The unperturbed coefficient vector a = 0."""
    return np.zeros(param_count(order))


@lru_cache(maxsize=None)
def _index_arrays(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer arrays (m, n) aligned with the canonical ordering."""
    idx = enumerate_parameters(order)
    m = np.array([i.m for i in idx], dtype=np.intp)
    n = np.array([i.n for i in idx], dtype=np.intp)
    m.setflags(write=False)
    n.setflags(write=False)
    return m, n


@dataclass(frozen=True)
class ModelConfig:
    """Family configuration: time-scale parameter mu and polynomial order."""

    mu: float
    order: int = 4

    def __post_init__(self) -> None:
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be positive and finite, got {self.mu}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")

    @property
    def epsilon(self) -> float:
        """Ratio of time scales, eps = mu^-2."""
        return 1.0 / (self.mu * self.mu)

    @property
    def n_params(self) -> int:
        return param_count(self.order)

    def indices(self) -> list[PerturbationIndex]:
        return enumerate_parameters(self.order)


def _powers(v: float, kmax: int) -> np.ndarray:
    # v^0 .. v^kmax by repeated multiplication; bit-stable, no pow()
    p = np.empty(kmax + 1)
    p[0] = 1.0
    for k in range(1, kmax + 1):
        p[k] = p[k - 1] * v
    return p


def _as_params(a: np.ndarray | None, cfg: ModelConfig) -> np.ndarray:
    if a is None:
        return zero_parameters(cfg.order)
    a = np.asarray(a, dtype=float)
    if a.shape != (cfg.n_params,):
        raise ValueError(
            f"parameter vector has shape {a.shape}, expected ({cfg.n_params},) "
            f"for order {cfg.order}"
        )
    return a


def rhs(state: np.ndarray, a: np.ndarray | None, cfg: ModelConfig) -> np.ndarray:
    """Time derivative (dx/dt, dy/dt) of the perturbed oscillator."""
    a = _as_params(a, cfg)
    m, n = _index_arrays(cfg.order)
    x = float(state[0])
    y = float(state[1])
    u = x - x * x * x / 3.0 - y
    up = _powers(u, cfg.order)
    xp = _powers(x, cfg.order)
    mu2 = cfg.mu * cfg.mu
    dx = mu2 * (u + float(a @ (up[m] * xp[n])))
    return np.array([dx, x])


def jacobian_state(
    state: np.ndarray, a: np.ndarray | None, cfg: ModelConfig
) -> np.ndarray:
    """Exact 2x2 derivative of ``rhs`` with respect to (x, y).

    With u = x - x^3/3 - y one has du/dx = 1 - x^2 and du/dy = -1, so

        d(dx/dt)/dx = mu^2 * [(1 - x^2)(1 + sum a m u^(m-1) x^n)
                              + sum a n u^m x^(n-1)]
        d(dx/dt)/dy = -mu^2 * [1 + sum a m u^(m-1) x^n]

    and the y row is identically (1, 0).
    """
    a = _as_params(a, cfg)
    m, n = _index_arrays(cfg.order)
    x = float(state[0])
    y = float(state[1])
    u = x - x * x * x / 3.0 - y
    up = _powers(u, cfg.order)
    xp = _powers(x, cfg.order)
    du_dx = 1.0 - x * x
    # m * u^(m-1) * x^n and n * u^m * x^(n-1); the m = 0 / n = 0 factors
    # zero out the clamped exponents
    du_terms = m * up[np.maximum(m - 1, 0)] * xp[n]
    dx_terms = n * up[m] * xp[np.maximum(n - 1, 0)]
    mu2 = cfg.mu * cfg.mu
    dfx_dx = mu2 * (du_dx * (1.0 + float(a @ du_terms)) + float(a @ dx_terms))
    dfx_dy = -mu2 * (1.0 + float(a @ du_terms))
    return np.array([[dfx_dx, dfx_dy], [1.0, 0.0]])


def jacobian_params(state: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Exact 2xP derivative of ``rhs`` with respect to the coefficients.

    Column (m, n) is (mu^2 * u^m * x^n, 0); the y equation carries no
    parameters, so its row is identically zero.
    """
    m, n = _index_arrays(cfg.order)
    x = float(state[0])
    y = float(state[1])
    u = x - x * x * x / 3.0 - y
    up = _powers(u, cfg.order)
    xp = _powers(x, cfg.order)
    out = np.zeros((2, m.size))
    out[0] = (cfg.mu * cfg.mu) * up[m] * xp[n]
    return out
