"""Mean-field (large-N) limit of the particle chain.

Under factorisation of the particle law, the one-particle marginals ``u_i``
(probability vectors over the ``M`` sites) follow the quadratic master
equation, in the particle clock,

    du_i/dt = D_i d2(u_i) + sum_j D_ij pi_j d2(u_j u_i),

with ``d2(f)(k) = f(k+1) + f(k-1) - 2 f(k)`` on the torus.  It is the
semi-discrete SKT system with ``A_ij = D_ij pi_j`` after the time change
``t_pde = h^2 t_particle``.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._rng import INIT_STREAM, trial_rng
from .master import StepFailure
from .model import MicroParams
from .particles import (
    LabeledStateSpace,
    ParticleConfig,
    build_generator,
    evolve_mu_path,
    particle_counts,
    product_law,
    project_marginal,
    ssa_run,
)

log = logging.getLogger(__name__)


def second_difference(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.roll(u, -1, axis=-1) + np.roll(u, 1, axis=-1) - 2.0 * u


def particle_to_pde_time(t_particle, M: int):
    return np.asarray(t_particle) / M**2


def pde_to_particle_time(t_pde, M: int):
    return np.asarray(t_pde) * M**2


@dataclass(frozen=True)
class MeanFieldState:
    u: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 2:
            raise ValueError("mean-field state must be n x M")
        if np.any(u < 0) or np.any(np.abs(u.sum(axis=1) - 1.0) > 1e-10):
            raise ValueError("rows of a mean-field state must be probability vectors")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)


@dataclass
class MeanFieldTrajectory:
    times: np.ndarray
    u: np.ndarray


def _mf_rhs_array(u, D, rate):
    return D[:, None] * second_difference(u) + second_difference(u * (rate @ u))


def mf_rhs(state, micro: MicroParams) -> np.ndarray:
    u = state.u if isinstance(state, MeanFieldState) else np.asarray(state, dtype=float)
    if u.shape[0] != micro.n:
        raise ValueError(f"state has {u.shape[0]} species, parameters have {micro.n}")
    return _mf_rhs_array(u, micro.D, micro.Dij * micro.pi[None, :])


def mf_entropy(u, pi) -> float:
    """``sum_i pi_i sum_l u_i(l) log(u_i(l) M)``."""
    u = np.asarray(u, dtype=float)
    M = u.shape[-1]
    return float(np.sum(np.asarray(pi)[:, None] * u * np.log(u * M)))


def mf_dt(micro: MicroParams, cfl: float = 0.4) -> float:
    speed = 2.0 * micro.D.max() + 2.0 * (micro.Dij * micro.pi[None, :]).sum(axis=1).max()
    return cfl / speed if speed > 0 else np.inf


def mf_solve(u0, micro: MicroParams, t_end: float, sample_times=None,
             pos_floor: float = 1e-300) -> MeanFieldTrajectory:
    """RK4 integration of the quadratic master equation in the particle clock."""
    u = np.array(u0.u if isinstance(u0, MeanFieldState) else u0, dtype=float)
    MeanFieldState(u)
    if u.min() <= 0:
        raise ValueError("initial marginals must be strictly positive")
    if sample_times is None:
        sample_times = [0.0, t_end]
    sample_times = np.asarray(sample_times, dtype=float)
    rate = micro.Dij * micro.pi[None, :]
    dt_max = mf_dt(micro)
    out = np.empty((len(sample_times),) + u.shape)
    t = 0.0
    for s, target in enumerate(sample_times):
        while target - t > 1e-14 * max(1.0, target):
            dt = min(dt_max, target - t)
            for _ in range(41):
                k1 = _mf_rhs_array(u, micro.D, rate)
                k2 = _mf_rhs_array(u + 0.5 * dt * k1, micro.D, rate)
                k3 = _mf_rhs_array(u + 0.5 * dt * k2, micro.D, rate)
                k4 = _mf_rhs_array(u + dt * k3, micro.D, rate)
                new = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                if np.all(np.isfinite(new)) and new.min() > pos_floor:
                    break
                dt *= 0.5
            else:
                raise StepFailure("mean-field step kept leaving the positive cone")
            t = target if dt == target - t else t + dt
            u = new
        out[s] = u
    return MeanFieldTrajectory(sample_times, out)


# ---------------------------------------------------------------------------
# chaos diagnostics


def covariance_defect(space: LabeledStateSpace, mu, i: int, j: int) -> float:
    """``sup |mu^(e_i + e_j) - mu^(e_i) (x) mu^(e_j)|`` over pairs of sites."""
    p = [0] * space.n
    p[i] += 1
    p[j] += 1
    two = project_marginal(space, mu, p).dist
    first_i = np.zeros(space.n, dtype=int)
    first_i[i] = 1
    first_j = np.zeros(space.n, dtype=int)
    first_j[j] = 1
    ui = project_marginal(space, mu, first_i).dist
    uj = project_marginal(space, mu, first_j).dist
    return float(np.max(np.abs(two - np.multiply.outer(ui, uj))))


def _species_pairs(space: LabeledStateSpace):
    for i in range(space.n):
        for j in range(i, space.n):
            need_same = 2 if i == j else 1
            if space.counts[i] >= need_same and space.counts[j] >= 1:
                yield i, j


def oracle_covariance_defects(micro: MicroParams, M: int, u0, N_list, t_obs: float,
                              n_samples: int = 11, pairs=None) -> np.ndarray:
    """Two-particle covariance defect from exact evolution, maximised over ``[0, t_obs]``.

    The particle law starts as the product of the rows of ``u0`` and is
    evolved with the enumerated generator.  ``pairs`` lists the species
    pairs ``(i, j)`` to examine (default: every pair with enough
    particles).  Keep ``t_obs`` short: correlations are created by the
    ``1/N`` pair interaction early on, whereas at late times every defect
    relaxes to zero together with the law itself.
    """
    micro = micro.normalized()
    times = np.linspace(0.0, t_obs, n_samples)
    out = []
    for N in N_list:
        space = LabeledStateSpace.from_weights(M, micro.pi, N)
        Q = build_generator(space, micro)
        path = evolve_mu_path(space, Q, product_law(space, u0), times)
        chosen = list(_species_pairs(space)) if pairs is None else [tuple(p) for p in pairs]
        out.append(max(covariance_defect(space, mu, i, j) for mu in path for i, j in chosen))
    return np.array(out)


def loglog_slope(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@dataclass
class ChaosReport:
    N_list: list
    distances: np.ndarray
    distance_slope: float
    oracle_M: int | None = None
    oracle_N_list: list = field(default_factory=list)
    covariance_defects: np.ndarray = field(default_factory=lambda: np.zeros(0))
    covariance_slope: float = float("nan")
    trials: int = 0
    seed: int = 0

    def inversions(self) -> int:
        return int(np.sum(np.diff(self.distances) > 0))

    def rows(self):
        for N, d in zip(self.N_list, self.distances):
            yield {"N": N, "metric": "marginal_l1_distance", "value": float(d)}
        for N, d in zip(self.oracle_N_list, self.covariance_defects):
            yield {"N": N, "metric": "covariance_defect", "value": float(d)}


def _trial_marginals(args):
    micro, u0, N, t_end, times, seed, trial = args
    cfg = ParticleConfig.sample(u0, micro.pi, N, trial_rng(seed, trial, INIT_STREAM))
    traj = ssa_run(cfg, micro, t_end, seed, times, trial=trial)
    totals = traj.counts[0].sum(axis=1)
    return traj.counts / totals[None, :, None]


def averaged_marginals(micro: MicroParams, u0, N: int, times, seed: int, trials: int,
                       first_trial: int = 0, workers: int | None = None) -> np.ndarray:
    """Empirical marginals ``[s, i, k]`` averaged over SSA trials.

    Trial ``first_trial + r`` places its particles by sampling ``u0`` and
    then runs the chain to ``times[-1]``.  The result does not depend on
    ``workers``.
    """
    micro = micro.normalized()
    times = np.asarray(times, dtype=float)
    jobs = [(micro, u0, N, float(times[-1]), times, seed, first_trial + r) for r in range(trials)]
    workers = workers or _default_workers()
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(min(workers, trials)) as pool:
            freqs = list(pool.map(_trial_marginals, jobs))
    else:
        freqs = [_trial_marginals(job) for job in jobs]
    return np.mean(freqs, axis=0)


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SKTK_THREADS", "1")))
    except ValueError:
        return 1


def chaos_study(micro: MicroParams, M: int, u0, N_list, trials: int = 64, t_end: float = 1.0,
                seed: int = 0, n_samples: int = 11, oracle_M: int | None = None, oracle_u0=None,
                oracle_N_list=(), oracle_t_obs: float | None = None, oracle_pairs=None,
                workers: int | None = None) -> ChaosReport:
    """Distance between trial-averaged SSA marginals and the mean-field flow.

    For each ``N`` the ``trials`` runs start from independent placements of
    the particles according to ``u0``; the reported distance is the sup over
    sample times of the L1 distance, summed over species, between the
    averaged empirical marginals and the mean-field solution.
    """
    micro = micro.normalized()
    u0 = np.asarray(u0, dtype=float)
    u0 = u0 / u0.sum(axis=1, keepdims=True)
    N_list = [int(N) for N in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be increasing")
    for N in N_list:
        if np.any(particle_counts(micro.pi, N) < 1):
            raise ValueError(f"N={N} leaves some species without particles")
    times = np.linspace(0.0, t_end, n_samples)
    mf = mf_solve(u0, micro, t_end, times).u
    workers = workers or _default_workers()

    distances = []
    for n_idx, N in enumerate(N_list):
        avg = averaged_marginals(micro, u0, N, times, seed, trials, first_trial=n_idx * trials,
                                 workers=workers)
        dist = np.abs(avg - mf).sum(axis=(1, 2)).max()
        log.info("chaos_study: N=%d distance=%.4g", N, dist)
        distances.append(dist)
    distances = np.array(distances)

    report = ChaosReport(N_list, distances, loglog_slope(N_list, distances), trials=trials, seed=seed)
    if oracle_M is not None and len(oracle_N_list):
        ou0 = np.asarray(oracle_u0, dtype=float)
        ou0 = ou0 / ou0.sum(axis=1, keepdims=True)
        t_obs = t_end if oracle_t_obs is None else oracle_t_obs
        defects = oracle_covariance_defects(micro, oracle_M, ou0, oracle_N_list, t_obs, n_samples,
                                            oracle_pairs)
        report.oracle_M = oracle_M
        report.oracle_N_list = list(oracle_N_list)
        report.covariance_defects = defects
        report.covariance_slope = loglog_slope(oracle_N_list, defects)
    return report


def product_entropy(u, counts, M: int) -> float:
    """``sum_i c_i sum_l u_i(l) log(u_i(l) M)``: the relative entropy of a product law."""
    u = np.asarray(u, dtype=float)
    counts = np.asarray(counts, dtype=float)
    return float(np.sum(counts[:, None] * u * np.log(u * M)))
