"""Grid-refinement studies of the semi-discrete SKT system.

The continuum solution is never assumed; refinement is judged by

* successive space-time ``L^2`` differences of P1 interpolants (a Cauchy
  proxy),
* the residual of the weak formulation tested against closed-form test
  functions,
* the gap between the interpolant of ``u_i u_j`` and the product of the
  interpolants, and
* monitors of the a-priori bounds that must stay uniform in ``M``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .grid import Grid, PiecewiseLinear, forward_diff, interpolant_lp_norm
from .master import StepPolicy, Trajectory, entropy, gradient_integral, rhs_array, solve
from .model import ModelParams

log = logging.getLogger(__name__)

MIN_TIME_SAMPLES = 200

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)
GAUSS_XI = 0.5 * (_GL_NODES + 1.0)
GAUSS_W = 0.5 * _GL_WEIGHTS


class InsufficientSampling(ValueError):
    pass


@dataclass(frozen=True)
class TestFunction:
    """Closed-form ``phi(t, x)``, 1-periodic in ``x``, vanishing for ``t >= support``.

    ``phi``, ``dphi_dt`` and ``lap`` are vectorised callables of ``(t, x)``.
    """

    __test__ = False  # not a pytest class

    phi: object
    dphi_dt: object
    lap: object
    support: float
    name: str = "phi"

    def lap_h(self, t, x, h: float):
        """Three-point Laplacian of ``phi(t, .)`` with spacing ``h`` at ``x``."""
        return (self.phi(t, x + h) + self.phi(t, x - h) - 2.0 * self.phi(t, x)) / (h * h)

    def w1inf_norm(self, n_points: int = 4096) -> float:
        """``sup |phi| + sup |d phi/dx|`` at ``t = 0`` (sampled)."""
        x = np.linspace(0.0, 1.0, n_points, endpoint=False)
        dx = 1e-6
        vals = self.phi(0.0, x)
        slope = (self.phi(0.0, x + dx) - self.phi(0.0, x - dx)) / (2 * dx)
        return float(np.max(np.abs(vals)) + np.max(np.abs(slope)))


def _bump(t, tau):
    """``exp(-s^3 / (1 - s^2))`` with ``s = t/tau``; flat to all orders at ``s = 1``."""
    s = np.clip(np.asarray(t, dtype=float) / tau, 0.0, 1.0)
    inside = s < 1.0
    safe = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(-safe**3 / (1.0 - safe**2)), 0.0)


def _bump_dt(t, tau):
    s = np.clip(np.asarray(t, dtype=float) / tau, 0.0, 1.0)
    inside = s < 1.0
    safe = np.where(inside, s, 0.0)
    q = 1.0 - safe**2
    dexp = -(3.0 * safe**2 * q + 2.0 * safe**4) / q**2
    return np.where(inside, dexp * np.exp(-safe**3 / q) / tau, 0.0)


def fourier_test_function(mode: int, kind: str, tau: float, shift: float = 0.0) -> TestFunction:
    """``phi = psi(t) g(x)`` with ``psi`` a smooth cutoff supported on ``[0, tau)``.

    ``g`` is ``cos(2 pi m x)``, ``sin(2 pi m x)``, or ``1 + cos(...)`` for
    ``kind`` ``"cos"``, ``"sin"``, ``"raised"``.  ``psi(0) = 1`` with
    vanishing first and second derivatives there, and ``psi`` is flat at
    ``tau``, so composite time quadrature is not spoiled by a kink.
    """
    w = 2.0 * np.pi * mode
    if kind == "cos":
        g = lambda x: np.cos(w * (x - shift))  # noqa: E731
        g2 = lambda x: -w * w * np.cos(w * (x - shift))  # noqa: E731
    elif kind == "sin":
        g = lambda x: np.sin(w * (x - shift))  # noqa: E731
        g2 = lambda x: -w * w * np.sin(w * (x - shift))  # noqa: E731
    elif kind == "raised":
        g = lambda x: 1.0 + np.cos(w * (x - shift))  # noqa: E731
        g2 = lambda x: -w * w * np.cos(w * (x - shift))  # noqa: E731
    else:
        raise ValueError(f"unknown test function kind {kind!r}")
    return TestFunction(
        phi=lambda t, x: _bump(t, tau) * g(x),
        dphi_dt=lambda t, x: _bump_dt(t, tau) * g(x),
        lap=lambda t, x: _bump(t, tau) * g2(x),
        support=tau,
        name=f"{kind}{mode}",
    )


def default_test_functions(T: float) -> list[TestFunction]:
    tau = 0.8 * T
    return [
        fourier_test_function(1, "cos", tau),
        fourier_test_function(1, "sin", tau, shift=0.1),
        fourier_test_function(2, "raised", tau),
    ]


def _gauss_points(M: int) -> np.ndarray:
    """``M x 5`` quadrature abscissae, cell ``k`` spanning ``[k h, (k+1) h]``."""
    return (np.arange(M)[:, None] + GAUSS_XI[None, :]) / M


def _interp_at_gauss(u: np.ndarray) -> np.ndarray:
    """P1 interpolant of ``u[..., M]`` at the Gauss points, shape ``(..., M, 5)``."""
    right = np.roll(u, -1, axis=-1)
    return (1.0 - GAUSS_XI) * u[..., None] + GAUSS_XI * right[..., None]


def weak_residual(traj: Trajectory, params: ModelParams, phi: TestFunction,
                  form: str = "product", laplacian: str = "discrete",
                  per_species: bool = False, time_rule: str = "simpson"):
    """Residual of the weak formulation for one test function.

    For each species ``i`` this evaluates

        - int u_i(0) phi(0) - int int u_i dphi/dt
        - int int (D_i u_i + sum_j A_ij P_ij) L phi

    with ``u_i`` the P1 interpolant, ``P_ij`` either the product of
    interpolants (``form="product"``) or the interpolant of the nodal
    product (``form="interpolant"``), and ``L`` the three-point Laplacian
    with the grid spacing (``laplacian="discrete"``) or the exact one.
    Space integrals use 5-point Gauss per cell.  Time integrals use
    composite Simpson on the trajectory samples (``time_rule="trapezoid"``
    is available, but its ``O(dt^2)`` error floor is independent of ``h``
    and hides the spatial behaviour).  Returns ``max_i |R_i|``, or the
    signed residuals if ``per_species``.
    """
    times = np.asarray(traj.times)
    if len(times) < MIN_TIME_SAMPLES:
        raise InsufficientSampling(f"weak residual needs >= {MIN_TIME_SAMPLES} time samples, got {len(times)}")
    if times[0] != 0.0:
        raise InsufficientSampling("trajectory must start at t = 0")
    if times[-1] < phi.support:
        raise InsufficientSampling("trajectory must cover the test function's time support")
    M = traj.u.shape[-1]
    h = 1.0 / M
    x = _gauss_points(M)
    wts = h * GAUSS_W

    integrand = np.empty((len(times), params.n))
    for s, t in enumerate(times):
        u = traj.u[s]
        ut = _interp_at_gauss(u)
        if form == "product":
            pair = ut[:, None] * ut[None, :]
        elif form == "interpolant":
            pair = _interp_at_gauss(u[:, None, :] * u[None, :, :])
        else:
            raise ValueError(f"unknown form {form!r}")
        flux = params.D[:, None, None] * ut + np.einsum("ij,ijkg->ikg", params.A, pair)
        lphi = phi.lap_h(t, x, h) if laplacian == "discrete" else phi.lap(t, x)
        integrand[s] = np.sum((ut * phi.dphi_dt(t, x) + flux * lphi) * wts, axis=(-2, -1))
    initial = np.sum(_interp_at_gauss(traj.u[0]) * phi.phi(0.0, x) * wts, axis=(-2, -1))
    if time_rule == "simpson":
        integral = simpson(integrand, x=times, axis=0)
    elif time_rule == "trapezoid":
        integral = np.trapezoid(integrand, times, axis=0)
    else:
        raise ValueError(f"unknown time rule {time_rule!r}")
    res = -initial - integral
    return res if per_species else float(np.max(np.abs(res)))


def product_interpolant_gap(traj: Trajectory, i: int, j: int) -> float:
    """``int_0^T int |interp(u_i u_j) - interp(u_i) interp(u_j)|``.

    On a cell with end values ``(a_i, b_i)``, ``(a_j, b_j)`` the integrand is
    ``alpha (1 - alpha) |(a_i - b_i)(a_j - b_j)|``, whose exact integral
    over the cell is ``h/6 |(a_i - b_i)(a_j - b_j)|``.
    """
    h = 1.0 / traj.u.shape[-1]
    jump = np.roll(traj.u, -1, axis=-1) - traj.u
    per_time = h / 6.0 * np.sum(np.abs(jump[:, i, :] * jump[:, j, :]), axis=-1)
    return float(np.trapezoid(per_time, traj.times))


def product_gap_envelope(traj: Trajectory, i: int, j: int) -> float:
    """Upper bound ``(1/6) int sum_k h (u_i(k) + u_i(k+1)) |u_j(k+1) - u_j(k)|`` for the gap."""
    h = 1.0 / traj.u.shape[-1]
    u = traj.u
    nxt = np.roll(u, -1, axis=-1)
    per_time = h / 6.0 * np.sum((u[:, i] + nxt[:, i]) * np.abs(nxt[:, j] - u[:, j]), axis=-1)
    return float(np.trapezoid(per_time, traj.times))


def hat_moments(phi_x, M: int) -> np.ndarray:
    """``int T(x - x_k) phi(x) dx`` for every node (5-point Gauss per cell)."""
    x = _gauss_points(M)
    vals = phi_x(x)
    h = 1.0 / M
    right_cell = h * np.sum(GAUSS_W * (1.0 - GAUSS_XI) * vals, axis=-1)
    left_cell = h * np.sum(GAUSS_W * GAUSS_XI * vals, axis=-1)
    return right_cell + np.roll(left_cell, 1)


def time_derivative_monitor(traj: Trajectory, params: ModelParams, phis) -> float:
    """``max_{i, phi} int_0^T |d/dt int u_i phi dx| dt / ||phi||_{W^{1,inf}}``.

    ``phis`` are time-independent callables ``x -> phi(x)``.
    """
    M = traj.u.shape[-1]
    rates = np.array([rhs_array(u, params) for u in traj.u])
    worst = 0.0
    for f in phis:
        moments = hat_moments(f, M)
        xs = np.linspace(0.0, 1.0, 4096, endpoint=False)
        dx = 1e-6
        norm = np.max(np.abs(f(xs))) + np.max(np.abs((f(xs + dx) - f(xs - dx)) / (2 * dx)))
        series = np.abs(rates @ moments)
        worst = max(worst, float(np.max(np.trapezoid(series, traj.times, axis=0))) / norm)
    return worst


def default_dual_family():
    return [
        lambda x: np.cos(2 * np.pi * x),
        lambda x: np.sin(4 * np.pi * x),
        lambda x: np.abs(np.mod(x, 1.0) - 0.5),
    ]


def lp_space_time(traj: Trajectory, p: float = 4.0) -> float:
    """``max_i int_0^T ||interp(u_i)||_p^p dt``."""
    norms = interpolant_lp_norm(traj.u, p) ** p
    return float(np.max(np.trapezoid(norms, traj.times, axis=0)))


def entropy_sup(traj: Trajectory, params: ModelParams) -> float:
    return max(entropy(traj.state(s), params) for s in range(len(traj.times)))


def entropy_path(traj: Trajectory, params: ModelParams) -> np.ndarray:
    return np.array([entropy(traj.state(s), params) for s in range(len(traj.times))])


def l2_space_time_difference(coarse: Trajectory, fine: Trajectory) -> float:
    """``||interp(coarse) - interp(fine)||_{L^2([0,T] x T)}`` summed over species.

    Both trajectories must share their sample times and the fine site count
    must be a multiple of the coarse one, so the difference is P1 on the
    fine grid.
    """
    if not np.array_equal(coarse.times, fine.times):
        raise ValueError("trajectories must share sample times")
    Mc, Mf = coarse.u.shape[-1], fine.u.shape[-1]
    if Mf % Mc:
        raise ValueError("fine grid must refine the coarse grid")
    xf = np.arange(Mf) / Mf
    lifted = PiecewiseLinear(coarse.u)(xf)
    sq = np.sum(interpolant_lp_norm(fine.u - lifted, 2.0) ** 2, axis=-1)
    return float(np.sqrt(np.trapezoid(sq, fine.times)))


@dataclass
class RefinementStudy:
    M_list: list
    T: float
    times: np.ndarray
    l2_differences: np.ndarray
    weak_residuals: np.ndarray  # (len(M_list), len(phis))
    product_gaps: np.ndarray
    gap_envelopes: np.ndarray
    monitors: dict
    continuum_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trajectories: list = field(default_factory=list, repr=False)

    @property
    def h(self) -> np.ndarray:
        return 1.0 / np.asarray(self.M_list, dtype=float)

    def slope(self, values) -> float:
        """Observed order: slope of ``log(values)`` against ``log(h)``."""
        return float(np.polyfit(np.log(self.h[: len(values)]), np.log(values), 1)[0])

    def difference_orders(self) -> np.ndarray:
        d = self.l2_differences
        return np.log2(d[:-1] / d[1:])

    def monitor_ratio(self, name: str) -> float:
        v = np.asarray(self.monitors[name])
        return float(v.max() / v.min())

    def rows(self):
        for k, M in enumerate(self.M_list):
            row = {"M": M, "product_gap": self.product_gaps[k], "gap_envelope": self.gap_envelopes[k]}
            for q, r in enumerate(self.weak_residuals[k]):
                row[f"weak_residual_{q}"] = r
            for name, vals in self.monitors.items():
                row[name] = vals[k]
            row["l2_difference_to_next"] = self.l2_differences[k] if k < len(self.l2_differences) else float("nan")
            yield row


def refinement_study(params: ModelParams, u0, M_list, T: float, phis=None,
                     n_samples: int = 1001, policy: StepPolicy = StepPolicy(),
                     pair=(0, 1), keep_trajectories: bool = False) -> RefinementStudy:
    """Solve on every grid of ``M_list`` and collect the refinement diagnostics.

    Parameters
    ----------
    u0 : callable
        ``x -> n x len(x)`` array of strictly positive closed-form initial
        data, sampled at the nodes of every grid.
    M_list : sequence of int
        Increasing powers of two.
    phis : list of TestFunction, optional
        Defaults to :func:`default_test_functions`.
    """
    M_list = [int(M) for M in M_list]
    if any(b <= a for a, b in zip(M_list, M_list[1:])):
        raise ValueError("M_list must be strictly increasing")
    if any(M & (M - 1) for M in M_list):
        raise ValueError("M_list entries must be powers of two")
    probe = np.atleast_2d(u0(np.linspace(0.0, 1.0, 16 * M_list[-1], endpoint=False)))
    if probe.min() <= 0:
        raise ValueError("initial data must be strictly positive")
    phis = default_test_functions(T) if phis is None else list(phis)
    if n_samples < MIN_TIME_SAMPLES:
        raise InsufficientSampling(f"need at least {MIN_TIME_SAMPLES} time samples")
    times = np.linspace(0.0, T, n_samples)
    i, j = pair if params.n > 1 else (0, 0)
    dual = default_dual_family()

    trajs = []
    residuals = np.empty((len(M_list), len(phis)))
    gaps = np.empty(len(M_list))
    envelopes = np.empty(len(M_list))
    monitors = {"gradient_integral": [], "l4_space_time": [], "time_derivative": [], "entropy_sup": []}
    for k, M in enumerate(M_list):
        start = np.atleast_2d(Grid(M).sample(u0))
        traj = solve(start, params, T, policy, sample_times=times)
        log.info("refinement_study: M=%d solved in %d steps", M, traj.n_steps)
        residuals[k] = [weak_residual(traj, params, phi) for phi in phis]
        gaps[k] = product_interpolant_gap(traj, i, j)
        envelopes[k] = product_gap_envelope(traj, i, j)
        monitors["gradient_integral"].append(gradient_integral(traj))
        monitors["l4_space_time"].append(lp_space_time(traj, 4.0))
        monitors["time_derivative"].append(time_derivative_monitor(traj, params, dual))
        monitors["entropy_sup"].append(entropy_sup(traj, params))
        trajs.append(traj)

    diffs = np.array([l2_space_time_difference(a, b) for a, b in zip(trajs, trajs[1:])])
    continuum = np.array([weak_residual(trajs[-1], params, phi, laplacian="continuous") for phi in phis])
    return RefinementStudy(
        M_list=M_list,
        T=T,
        times=times,
        l2_differences=diffs,
        weak_residuals=residuals,
        product_gaps=gaps,
        gap_envelopes=envelopes,
        monitors={key: np.array(v) for key, v in monitors.items()},
        continuum_residuals=continuum,
        trajectories=trajs if keep_trajectories else [],
    )


def gradient_l2(traj: Trajectory) -> np.ndarray:
    """``h sum_k |grad+ u_i|^2`` per sample and species."""
    h = 1.0 / traj.u.shape[-1]
    return h * np.sum(forward_diff(traj.u) ** 2, axis=-1)
