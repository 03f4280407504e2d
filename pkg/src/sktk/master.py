"""Spatially discrete SKT system and its entropy diagnostics.

The semi-discrete system integrated here is, for every species ``i`` and
site ``k`` of the periodic grid,

    du_i/dt = D_i Lap_h u_i + Lap_h(u_i * sum_j A_ij u_j)

in the PDE clock.  Time stepping is classical RK4 with a state-dependent
CFL step and rejection of any step that would leave the positive cone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, forward_diff, laplacian
from .model import ModelParams

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """RK4 step could not keep the state positive even after halving."""


class NonPositiveState(ValueError):
    """A diagnostic needing ``log u`` received a non-positive value."""


@dataclass(frozen=True)
class DiscreteState:
    u: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim == 1:
            u = u[None, :]
        if u.ndim != 2:
            raise ValueError(f"state must be n x M, got shape {u.shape}")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def grid(self) -> Grid:
        return Grid(self.u.shape[1])

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def masses(self) -> np.ndarray:
        return self.u.mean(axis=1)


@dataclass(frozen=True)
class StepPolicy:
    cfl: float = 0.4
    dt: float | None = None
    pos_floor: float = 1e-300
    max_halvings: int = 40


@dataclass
class Trajectory:
    """Snapshots ``u[s, i, k]`` at ``times[s]``."""

    times: np.ndarray
    u: np.ndarray
    n_steps: int = 0

    @property
    def grid(self) -> Grid:
        return Grid(self.u.shape[-1])

    def state(self, s: int) -> DiscreteState:
        return DiscreteState(self.u[s], float(self.times[s]))

    def masses(self) -> np.ndarray:
        return self.u.mean(axis=-1)


@dataclass
class EntropyDiagnostics:
    H: float
    dissipation: float
    sqrt_lower_bound: float
    grad_l2: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)


def _check_shapes(u: np.ndarray, params: ModelParams):
    if u.shape[0] != params.n:
        raise ValueError(f"state has {u.shape[0]} species, parameters have {params.n}")


def rhs_array(u: np.ndarray, params: ModelParams) -> np.ndarray:
    return params.D[:, None] * laplacian(u) + laplacian(u * (params.A @ u))


def rhs(state: DiscreteState, params: ModelParams) -> np.ndarray:
    _check_shapes(state.u, params)
    return rhs_array(state.u, params)


def cfl_dt(u: np.ndarray, params: ModelParams, cfl: float = 0.4) -> float:
    h = 1.0 / u.shape[-1]
    speed = 2.0 * params.D.max() + 2.0 * params.A.sum(axis=1).max() * u.max()
    if speed <= 0:
        return np.inf
    return cfl * h * h / speed


def _rk4(u: np.ndarray, params: ModelParams, dt: float) -> np.ndarray:
    k1 = rhs_array(u, params)
    k2 = rhs_array(u + 0.5 * dt * k1, params)
    k3 = rhs_array(u + 0.5 * dt * k2, params)
    k4 = rhs_array(u + dt * k3, params)
    return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(u, params, dt, policy: StepPolicy):
    """One accepted RK4 step; returns (new_u, dt_taken)."""
    for _ in range(policy.max_halvings + 1):
        new = _rk4(u, params, dt)
        if np.all(np.isfinite(new)) and new.min() > policy.pos_floor:
            return new, dt
        dt *= 0.5
    raise StepFailure(f"step rejected after {policy.max_halvings} halvings (dt={2 * dt:.3e})")


def step(state: DiscreteState, params: ModelParams, dt: float,
         policy: StepPolicy = StepPolicy()) -> DiscreteState:
    """Single RK4 step of size ``dt`` (or the halved size that kept positivity).

    The returned state's ``time`` records how far the step actually went.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_shapes(state.u, params)
    if state.u.min() <= 0:
        raise NonPositiveState("stepping requires a strictly positive state")
    new, taken = _advance(state.u, params, dt, policy)
    return DiscreteState(new, state.time + taken)


def solve(u0, params: ModelParams, T: float, policy: StepPolicy = StepPolicy(),
          sample_times=None, n_samples: int = 101, validate: bool = True) -> Trajectory:
    """Integrate the semi-discrete system on ``[u0.time, T]``.

    Parameters
    ----------
    u0 : DiscreteState or array_like
        Strictly positive initial data, ``n x M``.
    T : float
        Final time.
    sample_times : array_like, optional
        Increasing times in ``[t0, T]`` at which snapshots are stored.  Steps
        are shortened to land on them exactly.  Defaults to ``n_samples``
        equispaced times.
    validate : bool
        Reject parameters that violate the model invariants.
    """
    if not isinstance(u0, DiscreteState):
        u0 = DiscreteState(u0)
    _check_shapes(u0.u, params)
    if validate:
        params.require_valid()
    if u0.u.min() <= 0:
        raise NonPositiveState("initial data must be strictly positive")
    t0 = u0.time
    if T <= t0:
        raise ValueError("T must exceed the initial time")
    if sample_times is None:
        sample_times = np.linspace(t0, T, n_samples)
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) < 0) or sample_times[0] < t0 or sample_times[-1] > T * (1 + 1e-14):
        raise ValueError("sample_times must be increasing and lie in [t0, T]")

    out = np.empty((len(sample_times),) + u0.u.shape)
    u = np.array(u0.u)
    t = t0
    n_steps = 0
    for s, target in enumerate(sample_times):
        while target - t > 1e-14 * max(1.0, abs(target)):
            dt = policy.dt if policy.dt is not None else cfl_dt(u, params, policy.cfl)
            dt = min(dt, target - t)
            u, taken = _advance(u, params, dt, policy)
            t = target if taken == target - t else t + taken
            n_steps += 1
        out[s] = u
    log.debug("solve: M=%d, %d steps to T=%g", u.shape[1], n_steps, T)
    return Trajectory(sample_times, out, n_steps)


def _require_positive(u: np.ndarray):
    if u.min() <= 0:
        raise NonPositiveState("entropy diagnostics need a strictly positive state")


# u log u - u + 1 = sum_{m >= 2} (-1)^m d^m / (m (m - 1)) with d = u - 1
_SERIES_COEFFS = np.array([(-1.0) ** m / (m * (m - 1)) for m in range(20, 1, -1)])


def entropy_density(u) -> np.ndarray:
    """``u log u - u + 1``, accurate to full relative precision near ``u = 1``.

    The direct formula cancels catastrophically there (it returns 0 once
    ``|u - 1|`` drops below about 1e-8), which would hide the late-time
    entropy decay.
    """
    u = np.asarray(u, dtype=float)
    d = u - 1.0
    near = np.abs(d) < 0.1
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = u * np.log(u) - d
    series = d * d * np.polyval(_SERIES_COEFFS, d)
    return np.where(near, series, direct)


def entropy(state: DiscreteState, params: ModelParams) -> float:
    """``h sum_i sum_k pi_i (u log u - u + 1)``."""
    u = state.u
    _check_shapes(u, params)
    _require_positive(u)
    h = 1.0 / u.shape[1]
    return float(h * np.sum(params.pi[:, None] * entropy_density(u)))


def entropy_rate(state: DiscreteState, params: ModelParams) -> float:
    """``dH/dt`` by the chain rule, ``h sum pi_i (du_i/dt) log u_i``."""
    u = state.u
    _require_positive(u)
    h = 1.0 / u.shape[1]
    return float(h * np.sum(params.pi[:, None] * rhs(state, params) * np.log(u)))


def _gradients(w: np.ndarray):
    """Forward differences of ``w``, ``log w`` and ``sqrt w`` along the last axis.

    The jump ``w(k+1) - w(k)`` is formed once and the other two are derived
    from it (difference of square roots over their sum, ``log1p`` of the
    ratio when it is small), so nearly flat states keep full relative
    accuracy.  Large ratios use the plain difference of logarithms, since
    ``log1p`` would then cancel inside ``1 + ratio``.
    """
    h = 1.0 / w.shape[-1]
    nxt = np.roll(w, -1, axis=-1)
    jump = nxt - w
    ratio = jump / w
    glog = np.where(np.abs(ratio) < 0.5, np.log1p(ratio), np.log(nxt) - np.log(w))
    return jump / h, glog / h, jump / (np.sqrt(nxt) + np.sqrt(w)) / h


def dissipation(state: DiscreteState, params: ModelParams) -> EntropyDiagnostics:
    """Entropy, its dissipation written in gradient form, and the square-root bound.

    The dissipation is evaluated as

        -h sum_i D_i pi_i (grad+ log u_i)(grad+ u_i)
        - h/2 sum_ij a_ij (grad+ log u_i u_j)(grad+ u_i u_j),   a_ij = pi_i A_ij,

    which equals ``dH/dt`` whenever ``a_ij`` is symmetric.
    """
    u = state.u
    _check_shapes(u, params)
    _require_positive(u)
    h = 1.0 / u.shape[1]
    a = params.a_tilde
    dpi = params.D * params.pi

    gu, glog, gsqrt = _gradients(u)
    linear = h * np.sum(dpi * np.sum(glog * gu, axis=1))
    linear_lb = 4.0 * h * np.sum(dpi * np.sum(gsqrt**2, axis=1))

    gprod, gplog, gpsqrt = _gradients(u[:, None, :] * u[None, :, :])
    quad = 0.5 * h * np.sum(a * np.sum(gplog * gprod, axis=-1))
    quad_lb = 2.0 * h * np.sum(a * np.sum(gpsqrt**2, axis=-1))

    return EntropyDiagnostics(
        H=entropy(state, params),
        dissipation=float(-(linear + quad)),
        sqrt_lower_bound=float(linear_lb + quad_lb),
        grad_l2=h * np.sum(gu**2, axis=1),
        masses=u.mean(axis=1),
    )


def entropy_series(traj: Trajectory, params: ModelParams) -> list[EntropyDiagnostics]:
    return [dissipation(traj.state(s), params) for s in range(len(traj.times))]


def gradient_integral(traj: Trajectory) -> float:
    """Trapezoid value of ``sum_i int_0^T h sum_k |grad+ u_i|^2 dt``."""
    h = 1.0 / traj.u.shape[-1]
    per_time = h * np.sum(forward_diff(traj.u) ** 2, axis=(-2, -1))
    return float(np.trapezoid(per_time, traj.times))
