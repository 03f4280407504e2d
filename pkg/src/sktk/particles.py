"""Reversible many-particle lattice Markov chain.

Particles of ``n`` species hop on the periodic lattice ``{0, h, ..., 1-h}``:

* each particle of species ``i`` jumps ``+h`` or ``-h`` at rate ``D_i``;
* each co-located pair of distinct particles of species ``i, j`` jumps
  *together* by the same ``+h`` or ``-h`` at rate ``D_ij / N``.

Two representations are provided.  Stochastic simulation works on occupation
numbers ``c_i(k)`` (particles are indistinguishable within a species), with
pair multiplicities ``c_i c_j`` for ``i != j`` and ``c_i (c_i - 1) / 2`` for
``i == j``.  :class:`LabeledStateSpace` enumerates labeled configurations of
tiny systems exhaustively and carries the exact generator, so that
reversibility, entropy decay and the marginal hierarchy can be checked to
machine precision.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._rng import trial_rng
from .grid import Grid
from .model import MicroParams

ENUM_CAP = 2_000_000


class CapExceeded(RuntimeError):
    """Labeled state space larger than the enumeration cap."""


class NonPositiveMeasure(ValueError):
    pass


class BadMultiIndex(ValueError):
    pass


class SymmetryViolation(ValueError):
    """Law is not exchangeable within species."""


def particle_counts(pi, N: int) -> np.ndarray:
    """``floor(pi_i N)`` for normalised weights.

    A relative guard of 1e-12 absorbs representation error such as
    ``0.29 * 100 == 28.999999999999996``.
    """
    pi = np.asarray(pi, dtype=float)
    pi = pi / pi.sum()
    return np.floor(pi * N * (1.0 + 1e-12)).astype(int)


# ---------------------------------------------------------------------------
# occupation-number representation


@dataclass(frozen=True)
class ParticleConfig:
    counts: np.ndarray
    N: int
    pi: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2:
            raise ValueError("counts must be an n x M integer matrix")
        if np.any(counts < 0):
            raise ValueError("occupation numbers must be nonnegative")
        pi = np.asarray(self.pi, dtype=float)
        pi = pi / pi.sum()
        expected = particle_counts(pi, self.N)
        if not np.array_equal(counts.sum(axis=1), expected):
            raise ValueError(
                f"species totals {counts.sum(axis=1).tolist()} differ from floor(pi N)={expected.tolist()}"
            )
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "N", int(self.N))

    @property
    def grid(self) -> Grid:
        return Grid(self.counts.shape[1])

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def at_site(cls, pi, N: int, M: int, site: int = 0) -> "ParticleConfig":
        totals = particle_counts(pi, N)
        counts = np.zeros((len(totals), M), dtype=np.int64)
        counts[:, site] = totals
        return cls(counts, N, pi)

    @classmethod
    def sample(cls, u0, pi, N: int, rng: np.random.Generator) -> "ParticleConfig":
        """Place every particle independently according to the rows of ``u0``."""
        u0 = np.asarray(u0, dtype=float)
        totals = particle_counts(pi, N)
        counts = np.stack([rng.multinomial(c, row / row.sum()) for c, row in zip(totals, u0)])
        return cls(counts, N, pi)


@dataclass
class RateTable:
    """Per-direction rates of every event class.

    ``single[i, k]`` is the rate of one species-``i`` particle at site ``k``
    stepping in a given direction; ``pair[i, j, k]`` (``i <= j``, zero
    below the diagonal) the rate of a co-located ``(i, j)`` pair at ``k``
    stepping together in a given direction.
    """

    single: np.ndarray
    pair: np.ndarray

    @property
    def total(self) -> float:
        return 2.0 * (self.single.sum() + self.pair.sum())


def _rates(counts: np.ndarray, D: np.ndarray, Dij: np.ndarray, N: int):
    single = D[:, None] * counts
    mult = counts[:, None, :] * counts[None, :, :]
    n = counts.shape[0]
    idx = np.arange(n)
    mult[idx, idx, :] = counts * (counts - 1) // 2
    pair = np.triu(np.ones((n, n)))[:, :, None] * Dij[:, :, None] * mult / N
    return single.astype(float), pair


def event_rates(config: ParticleConfig, micro: MicroParams) -> RateTable:
    if config.n != micro.n:
        raise ValueError("configuration and parameters disagree on species count")
    return RateTable(*_rates(config.counts, micro.D, micro.Dij, config.N))


@dataclass
class ParticleTrajectory:
    times: np.ndarray
    counts: np.ndarray
    n_events: int
    N: int
    pi: np.ndarray


def ssa_run(config0: ParticleConfig, micro: MicroParams, t_end: float, seed: int,
            sample_times=None, trial: int = 0, max_events: int | None = None,
            on_event=None) -> ParticleTrajectory:
    """Exact event-driven simulation (direct method) on occupation numbers.

    Parameters
    ----------
    config0 : ParticleConfig
        Initial occupation numbers.
    t_end : float
        Simulation horizon (particle clock).
    seed, trial : int
        Key of the random stream; identical keys give identical paths.
    sample_times : array_like, optional
        Increasing times in ``[0, t_end]``; defaults to ``[0, t_end]``.
    on_event : callable, optional
        Called as ``on_event(kind, i, j, site, sign, before, after)`` after
        every event (``j`` is None for single jumps).  Used by tests.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if sample_times is None:
        sample_times = [0.0, t_end]
    sample_times = np.asarray(sample_times, dtype=float)
    rng = trial_rng(seed, trial)

    counts = np.array(config0.counts)
    n, M = counts.shape
    N = config0.N
    D, Dij = micro.D, micro.Dij
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    out = np.empty((len(sample_times), n, M), dtype=np.int64)

    block = 512
    draws = rng.random((block, 3))
    used = 0
    t = 0.0
    s = 0
    n_events = 0
    while True:
        single, pair = _rates(counts, D, Dij, N)
        flat = np.concatenate([single.ravel(), pair[tuple(zip(*pairs))].ravel()]) if pairs else single.ravel()
        cum = np.cumsum(flat)
        half_total = cum[-1] if len(cum) else 0.0
        if used == block:
            draws = rng.random((block, 3))
            used = 0
        r_wait, r_pick, r_sign = draws[used]
        used += 1
        if half_total <= 0:
            t_next = np.inf
        else:
            t_next = t - math.log1p(-r_wait) / (2.0 * half_total)
        while s < len(sample_times) and sample_times[s] < t_next:
            out[s] = counts
            s += 1
        if s == len(sample_times) or t_next > t_end:
            while s < len(sample_times):
                out[s] = counts
                s += 1
            break
        t = t_next
        e = int(np.searchsorted(cum, r_pick * half_total, side="right"))
        e = min(e, len(flat) - 1)
        while flat[e] <= 0:
            e -= 1
        sign = 1 if r_sign < 0.5 else -1
        if e < n * M:
            i, k = divmod(e, M)
            dest = (k + sign) % M
            before = counts.copy() if on_event else None
            counts[i, k] -= 1
            counts[i, dest] += 1
            if on_event:
                on_event("single", i, None, k, sign, before, counts.copy())
        else:
            q, k = divmod(e - n * M, M)
            i, j = pairs[q]
            dest = (k + sign) % M
            before = counts.copy() if on_event else None
            counts[i, k] -= 1
            counts[j, k] -= 1
            counts[i, dest] += 1
            counts[j, dest] += 1
            if on_event:
                on_event("pair", i, j, k, sign, before, counts.copy())
        n_events += 1
        if max_events is not None and n_events >= max_events:
            out[s:] = counts
            break
    return ParticleTrajectory(sample_times, out, n_events, N, config0.pi)


def empirical_marginal(traj, species: int) -> np.ndarray:
    """Per-site frequencies ``c_i(k) / floor(pi_i N)`` at each sample time.

    ``traj`` may be a single trajectory or a sequence of trajectories on a
    common time grid, in which case the frequencies are averaged over them.
    """
    if isinstance(traj, ParticleTrajectory):
        trajs = [traj]
    else:
        trajs = list(traj)
    freq = [t.counts[:, species, :] / t.counts[0, species, :].sum() for t in trajs]
    return np.mean(freq, axis=0)


# ---------------------------------------------------------------------------
# labeled oracle


@dataclass
class LabeledStateSpace:
    """All labeled configurations of a tiny particle system.

    Coordinates are ordered species-major: the first ``counts[0]`` axes are
    the particles of species 0, and so on.  A law on the space is an array
    of shape ``(M,) * K`` (or its raveled C-order vector).
    """

    M: int
    counts: tuple
    N: int
    enum_cap: int = ENUM_CAP
    roster: list = field(init=False)

    def __post_init__(self):
        self.counts = tuple(int(c) for c in self.counts)
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if self.size > self.enum_cap:
            raise CapExceeded(f"{self.M}^{self.K} = {self.size} states exceeds cap {self.enum_cap}")
        self.roster = [(i, a) for i, c in enumerate(self.counts) for a in range(c)]

    @classmethod
    def from_weights(cls, M: int, pi, N: int, enum_cap: int = ENUM_CAP) -> "LabeledStateSpace":
        return cls(M, tuple(particle_counts(pi, N)), N, enum_cap)

    @property
    def grid(self) -> Grid:
        return Grid(self.M)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def K(self) -> int:
        return sum(self.counts)

    @property
    def size(self) -> int:
        return self.M ** sum(self.counts)

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.K

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(int)

    def species_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.counts)

    def coords(self) -> np.ndarray:
        """``size x K`` array of positions (site indices) of every state."""
        return np.indices(self.shape).reshape(self.K, -1).T

    def uniform(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def occupancy(self) -> np.ndarray:
        """``size x n x M`` occupation numbers of every labeled state."""
        coords = self.coords()
        occ = np.zeros((self.size, self.n, self.M), dtype=np.int64)
        rows = np.arange(self.size)
        for m, s in enumerate(self.species_of()):
            np.add.at(occ, (rows, s, coords[:, m]), 1)
        return occ


def build_generator(space: LabeledStateSpace, micro: MicroParams) -> sparse.csr_matrix:
    """Generator ``Q[x, y]`` = rate of ``x -> y``; rows sum to zero."""
    if micro.n != space.n:
        raise ValueError("space and parameters disagree on species count")
    coords = space.coords()
    species = space.species_of()
    M, K, S = space.M, space.K, space.size
    src_all, dst_all, rate_all = [], [], []

    def add(mask, moved, sign, rate):
        if rate <= 0:
            return
        rows = np.flatnonzero(mask) if mask is not None else np.arange(S)
        shifted = coords[rows].copy()
        shifted[:, moved] = (shifted[:, moved] + sign) % M
        dst = np.ravel_multi_index(shifted.T, space.shape)
        src_all.append(rows)
        dst_all.append(dst)
        rate_all.append(np.full(len(rows), rate))

    for m in range(K):
        for sign in (1, -1):
            add(None, [m], sign, micro.D[species[m]])
    for m, mm in itertools.combinations(range(K), 2):
        together = coords[:, m] == coords[:, mm]
        rate = micro.Dij[species[m], species[mm]] / space.N
        for sign in (1, -1):
            add(together, [m, mm], sign, rate)

    if src_all:
        src = np.concatenate(src_all)
        dst = np.concatenate(dst_all)
        val = np.concatenate(rate_all)
    else:
        src = dst = np.zeros(0, dtype=int)
        val = np.zeros(0)
    Q = sparse.coo_matrix((val, (src, dst)), shape=(S, S)).tocsr()
    Q.sum_duplicates()
    out_rate = np.asarray(Q.sum(axis=1)).ravel()
    Q = Q - sparse.diags(out_rate)
    return sparse.csr_matrix(Q)


def forward_action(Q, mu: np.ndarray) -> np.ndarray:
    """``d mu / dt`` of the Kolmogorov forward equation."""
    return Q.T @ mu


def _rk4_path(Q, mu0, times, dt_max):
    QT = sparse.csr_matrix(Q.T)
    mu = np.array(mu0, dtype=float)
    out = np.empty((len(times), len(mu)))
    t = 0.0
    for s, target in enumerate(times):
        while target - t > 1e-15 * max(1.0, target):
            dt = min(dt_max, target - t)
            k1 = QT @ mu
            k2 = QT @ (mu + 0.5 * dt * k1)
            k3 = QT @ (mu + 0.5 * dt * k2)
            k4 = QT @ (mu + dt * k3)
            mu = mu + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = target if dt == target - t else t + dt
        out[s] = mu
    return out


def _max_rate(Q) -> float:
    d = np.abs(Q.diagonal())
    return float(d.max()) if d.size else 0.0


def evolve_mu_path(space: LabeledStateSpace, Q, mu0, times) -> np.ndarray:
    """Laws at each of the increasing ``times`` (starting from ``t=0``)."""
    mu0 = np.asarray(mu0, dtype=float).ravel()
    if mu0.size != space.size:
        raise ValueError("law does not match the state space")
    times = np.asarray(times, dtype=float)
    rate = _max_rate(Q)
    dt_max = 0.1 / rate if rate > 0 else np.inf
    return _rk4_path(Q, mu0, times, dt_max)


def evolve_mu(space: LabeledStateSpace, Q, mu0, t: float) -> np.ndarray:
    return evolve_mu_path(space, Q, mu0, [t])[-1]


def micro_entropy(space: LabeledStateSpace, mu) -> float:
    """Relative entropy of ``mu`` with respect to the uniform law,
    ``sum_x mu(x) log(mu(x) M^K)``."""
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.min() <= 0:
        raise NonPositiveMeasure("entropy needs a strictly positive law")
    return float(np.sum(mu * np.log(mu)) + space.K * math.log(space.M))


@dataclass
class Marginal:
    p: tuple
    dist: np.ndarray


def _check_p(space: LabeledStateSpace, p) -> tuple:
    p = tuple(int(v) for v in p)
    if len(p) != space.n or any(v < 0 or v > c for v, c in zip(p, space.counts)):
        raise BadMultiIndex(f"multi-index {p} incompatible with particle counts {space.counts}")
    return p


def project_marginal(space: LabeledStateSpace, mu, p) -> Marginal:
    """Keep the first ``p_i`` particles of each species, sum out the rest."""
    p = _check_p(space, p)
    arr = np.asarray(mu, dtype=float).reshape(space.shape)
    drop = [int(off + a) for off, c, pi_ in zip(space.offsets(), space.counts, p) for a in range(pi_, c)]
    return Marginal(p, arr.sum(axis=tuple(drop)) if drop else arr.copy())


def product_law(space: LabeledStateSpace, u) -> np.ndarray:
    """``mu(x) = prod_(i,a) u_i(x_i^a)`` with ``u`` an ``n x M`` row-stochastic matrix."""
    u = np.asarray(u, dtype=float)
    mu = np.ones(())
    for s in space.species_of():
        mu = np.multiply.outer(mu, u[s])
    return mu.ravel()


def _species_permutations(space: LabeledStateSpace):
    blocks = []
    for off, c in zip(space.offsets(), space.counts):
        blocks.append([tuple(off + np.array(perm)) for perm in itertools.permutations(range(c))])
    for combo in itertools.product(*blocks):
        yield tuple(int(a) for block in combo for a in block)


def symmetrize(space: LabeledStateSpace, mu) -> np.ndarray:
    """Average ``mu`` over all within-species relabelings."""
    arr = np.asarray(mu, dtype=float).reshape(space.shape)
    perms = list(_species_permutations(space))
    return (sum(np.transpose(arr, perm) for perm in perms) / len(perms)).ravel()


def symmetry_defect(space: LabeledStateSpace, mu) -> float:
    arr = np.asarray(mu, dtype=float).reshape(space.shape)
    worst = 0.0
    for off, c in zip(space.offsets(), space.counts):
        for a in range(c - 1):
            swapped = np.swapaxes(arr, off + a, off + a + 1)
            worst = max(worst, float(np.max(np.abs(swapped - arr))))
    return worst


def _second_difference(arr, axes, mask=None):
    """``f(x + e) + f(x - e) - 2 f(x)`` with ``e`` a unit shift on all ``axes``."""
    plus = np.roll(arr, [-1] * len(axes), axis=axes)
    minus = np.roll(arr, [1] * len(axes), axis=axes)
    out = plus + minus - 2.0 * arr
    return out if mask is None else out * mask


def _diagonal_mask(ndim: int, a: int, b: int, M: int) -> np.ndarray:
    ia = np.arange(M).reshape([M if d == a else 1 for d in range(ndim)])
    ib = np.arange(M).reshape([M if d == b else 1 for d in range(ndim)])
    return (ia == ib).astype(float)


def hierarchy_rhs(space: LabeledStateSpace, micro: MicroParams, mu, p) -> np.ndarray:
    """Time derivative of the ``p``-marginal from the closed terms I + II + III.

    I is linear diffusion of the retained particles, II their mutual pair
    jumps, and III the pair jumps with one of the ``floor(pi_j N) - p_j``
    particles that were summed out, expressed through the ``p + e_j``
    marginal with the extra particle placed on the partner's site.
    """
    p = _check_p(space, p)
    M, N = space.M, space.N
    marg = project_marginal(space, mu, p).dist
    ndim = marg.ndim
    offs = np.concatenate([[0], np.cumsum(p)[:-1]]).astype(int)
    species = np.repeat(np.arange(space.n), p)
    out = np.zeros_like(marg)

    for a in range(ndim):
        out += micro.D[species[a]] * _second_difference(marg, [a])
    for a, b in itertools.combinations(range(ndim), 2):
        rate = micro.Dij[species[a], species[b]] / N
        if rate:
            out += rate * _second_difference(marg, [a, b], _diagonal_mask(ndim, a, b, M))

    for j in range(space.n):
        remaining = space.counts[j] - p[j]
        if remaining == 0:
            continue
        bigger = list(p)
        bigger[j] += 1
        ext = project_marginal(space, mu, bigger).dist
        new_axis = int(offs[j] + p[j])
        for a in range(ndim):
            rate = micro.Dij[species[a], j] * remaining / N
            if not rate:
                continue
            a_ext = a if a < new_axis else a + 1
            mask = _diagonal_mask(ndim + 1, a_ext, new_axis, M)
            out += rate * _second_difference(ext, [a_ext, new_axis], mask).sum(axis=new_axis)
    return out


def bbgky_check(space: LabeledStateSpace, micro: MicroParams, mu, p, sym_tol: float = 1e-12) -> float:
    """Max-norm gap between the projected generator action and I + II + III."""
    mu = np.asarray(mu, dtype=float).ravel()
    if symmetry_defect(space, mu) > sym_tol:
        raise SymmetryViolation("law is not exchangeable within species")
    Q = build_generator(space, micro)
    direct = project_marginal(space, forward_action(Q, mu), p).dist
    closed = hierarchy_rhs(space, micro, mu, p)
    return float(np.max(np.abs(direct - closed))) if direct.size else 0.0


def occupancy_law(space: LabeledStateSpace, mu) -> dict:
    """Push a labeled law forward to occupation numbers (keys are byte strings)."""
    mu = np.asarray(mu, dtype=float).ravel()
    occ = space.occupancy().reshape(space.size, -1)
    law: dict = {}
    for row, w in zip(occ, mu):
        key = row.tobytes()
        law[key] = law.get(key, 0.0) + w
    return law
