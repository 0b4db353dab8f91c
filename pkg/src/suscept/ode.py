"""Adaptive ODE integration with dense output and section-crossing detection.

A thin, deterministic wrapper around an eighth-order embedded Runge-Kutta
pair with free seventh-order interpolation.  Explicit stepping with tight
tolerances is adequate here: the stiffness ratio stays at or below 1e4
(mu <= 100), so stability costs steps but never correctness.  The contract
is the tolerance behavior, not the scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.integrate import DOP853, OdeSolution

__all__ = [
    "IntegrationError",
    "StepLimitExceeded",
    "NonFiniteState",
    "StepSizeUnderflow",
    "NoCrossing",
    "IntegratorSettings",
    "DEFAULT_SETTINGS",
    "Trajectory",
    "integrate",
    "find_crossing",
]


class IntegrationError(RuntimeError):
    """Base class for integration failures."""


class StepLimitExceeded(IntegrationError):
    """The step budget ran out: undetected blow-up or pathological stiffness."""


class NonFiniteState(IntegrationError):
    """The state or vector field overflowed or produced NaN."""


class StepSizeUnderflow(IntegrationError):
    """The controller drove the step below machine resolution."""


class NoCrossing(IntegrationError):
    """No section crossing with the requested direction exists in the span."""


@dataclass(frozen=True)
class IntegratorSettings:
    """Error-control settings shared by every integration in the package.

    The defaults are deliberately tight: Hessian eigenvalues spanning up to
    eighteen decades require sensitivity trajectories accurate far below
    the sloppiest signal of interest, and the unit-Floquet-multiplier
    margin at mu = 100 needs per-period orbit errors well under 1e-9.
    """

    rtol: float = 1e-11
    atol: float = 1e-13
    max_steps: int = 10_000_000
    initial_step: float | None = None

    def __post_init__(self) -> None:
        if not 1e-14 <= self.rtol <= 1e-2:
            raise ValueError(f"rtol must lie in [1e-14, 1e-2], got {self.rtol}")
        if not 1e-16 <= self.atol <= 1e-2:
            raise ValueError(f"atol must lie in [1e-16, 1e-2], got {self.atol}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")


DEFAULT_SETTINGS = IntegratorSettings()


class Trajectory:
    """Accepted integration steps plus a piecewise dense-output evaluator.

    ``times`` are the accepted step endpoints (strictly increasing) and
    ``states`` the matching solution values; calling the trajectory
    evaluates the interpolant anywhere in [t0, t1], with a vectorized
    (d, n)-shaped result for an array argument.
    """

    def __init__(self, times: np.ndarray, states: np.ndarray, interpolant: OdeSolution):
        self.times = times
        self.states = states
        self._interpolant = interpolant

    def __call__(self, t: float | np.ndarray) -> np.ndarray:
        return self._interpolant(t)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return len(self.times)


def integrate(
    fun: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_span: tuple[float, float],
    settings: IntegratorSettings = DEFAULT_SETTINGS,
) -> Trajectory:
    """Integrate dy/dt = fun(t, y) over t_span with dense output.

    Local error per step is bounded by atol + rtol * |y| componentwise.
    Raises :class:`NonFiniteState` as soon as the vector field or the state
    stops being finite, :class:`StepLimitExceeded` when ``max_steps``
    accepted steps were taken without reaching the end of the span, and
    :class:`StepSizeUnderflow` if the controller stalls.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError(f"t_span must be increasing, got {t_span}")
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("initial state is not finite")

    # Trial stages of an explicit method may overshoot and overflow near the
    # stability limit; that is routine and the error controller rejects the
    # step.  Overflows are therefore only *recorded* here, and classify the
    # failure if the controller never recovers.
    saw_nonfinite = False

    def checked_fun(t: float, y: np.ndarray) -> np.ndarray:
        nonlocal saw_nonfinite
        with np.errstate(all="ignore"):
            f = np.asarray(fun(t, y), dtype=float)
        if not np.all(np.isfinite(f)):
            saw_nonfinite = True
        return f

    solver = DOP853(
        checked_fun,
        t0,
        y0,
        t1,
        rtol=settings.rtol,
        atol=settings.atol,
        first_step=settings.initial_step,
    )
    times = [t0]
    states = [y0.copy()]
    segments = []
    n_steps = 0
    while solver.status == "running":
        saw_nonfinite = False
        solver.step()
        if solver.status == "failed" or not np.all(np.isfinite(solver.y)):
            if saw_nonfinite or not np.all(np.isfinite(solver.y)):
                raise NonFiniteState(
                    f"state or vector field overflowed near t={solver.t:.6g}"
                )
            raise StepSizeUnderflow(
                f"step size fell below machine resolution at t={solver.t:.6g}"
            )
        n_steps += 1
        if n_steps > settings.max_steps:
            raise StepLimitExceeded(
                f"exceeded {settings.max_steps} steps at t={solver.t:.6g} "
                f"(span ends at {t1:.6g})"
            )
        segments.append(solver.dense_output())
        times.append(solver.t)
        states.append(solver.y.copy())

    return Trajectory(np.array(times), np.array(states), OdeSolution(times, segments))


def _sample_grid(traj: Trajectory, t_from: float | None, subsamples: int) -> np.ndarray:
    """Step endpoints plus uniform subsamples inside every step."""
    knots = traj.times
    h = np.diff(knots)
    frac = np.linspace(0.0, 1.0, subsamples + 1)[:-1]
    grid = (knots[:-1, None] + h[:, None] * frac[None, :]).ravel()
    grid = np.append(grid, knots[-1])
    if t_from is not None:
        grid = grid[grid >= t_from]
        if grid.size == 0 or grid[0] > t_from:
            grid = np.insert(grid, 0, t_from)
    return grid


def find_crossing(
    traj: Trajectory,
    event: Callable[[np.ndarray, np.ndarray], np.ndarray],
    direction: Literal["rising", "falling"] = "rising",
    *,
    atol_event: float = 1e-12,
    t_from: float | None = None,
    subsamples: int = 8,
    max_iter: int = 100,
) -> tuple[float, np.ndarray]:
    """Locate the first directed zero crossing of ``event`` along a trajectory.

    ``event(t, y)`` must be a scalar function of time and state that
    broadcasts over a trailing sample axis (it is called with ``y`` of shape
    (d, n) while scanning).  A rising crossing is one where the event value
    passes from below ``-atol_event`` to above zero; this arming rule
    guarantees that restarting the search just after a found crossing
    yields the *next* one, and that a start point sitting on the section
    (|g| < atol_event) is not reported as its own crossing.

    Root localization is bisection followed by secant steps on the dense
    output, down to |g| < atol_event, capped at ``max_iter`` iterations.

    Returns the crossing time and state; raises :class:`NoCrossing` if no
    armed sign change with the requested direction exists in the span.
    """
    if direction not in ("rising", "falling"):
        raise ValueError(f"direction must be 'rising' or 'falling', got {direction!r}")
    sgn = 1.0 if direction == "rising" else -1.0

    grid = _sample_grid(traj, t_from, subsamples)
    # g in the "rising" convention: look for - -> +
    g = sgn * np.asarray(event(grid, traj(grid)), dtype=float)
    if g.shape != grid.shape:
        raise ValueError("event function must return one scalar per sample")

    armed = False
    bracket = None
    for i in range(len(grid)):
        if g[i] < -atol_event:
            armed = True
        elif armed and g[i] >= 0.0:
            bracket = (grid[i - 1], grid[i], g[i - 1], g[i])
            break
    if bracket is None:
        raise NoCrossing(
            f"no {direction} crossing in [{grid[0]:.6g}, {grid[-1]:.6g}]"
        )

    ta, tb, ga, gb = bracket
    if gb <= atol_event:  # landed on (or within tolerance of) the section
        return float(tb), traj(tb)

    def g_at(t: float) -> float:
        return float(sgn * event(t, traj(t)))

    # a few bisection steps to shrink the bracket, then secant with a
    # bisection fallback whenever the secant step leaves the bracket
    t_best, g_best = tb, gb
    for it in range(max_iter):
        if it < 8:
            tc = 0.5 * (ta + tb)
        else:
            tc = tb - gb * (tb - ta) / (gb - ga)
            if not ta < tc < tb:
                tc = 0.5 * (ta + tb)
        gc = g_at(tc)
        if abs(gc) < abs(g_best):
            t_best, g_best = tc, gc
        if abs(gc) < atol_event:
            return float(tc), traj(tc)
        if (gc < 0.0) == (ga < 0.0):
            ta, ga = tc, gc
        else:
            tb, gb = tc, gc
    return float(t_best), traj(t_best)
