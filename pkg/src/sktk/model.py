"""Model parameters for detailed-balanced SKT cross-diffusion.

Two parametrisations are kept side by side:

* :class:`ModelParams` -- the macroscopic coefficients ``(D_i, A_ij, pi_i)`` of
  ``du_i/dt = Lap(D_i u_i + sum_j A_ij u_i u_j)``;
* :class:`MicroParams` -- the particle-level rates ``(D_i, D_ij, pi_i)`` with a
  symmetric pair rate matrix ``D_ij``.

They are related by ``A_ij = D_ij * pi_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL_DB = 1e-12


class DimensionError(ValueError):
    """Parameter arrays have inconsistent shapes."""


class DetailedBalanceError(ValueError):
    """Coefficients fail ``pi_i A_ij = pi_j A_ji``."""


class InvalidModelError(ValueError):
    """Parameters violate one or more model invariants."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(report.violations))


def _as_readonly(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_shapes(n: int, D: np.ndarray, mat: np.ndarray, pi: np.ndarray, mat_name: str):
    if n < 1:
        raise DimensionError(f"species count must be positive, got {n}")
    if D.shape != (n,):
        raise DimensionError(f"D has shape {D.shape}, expected ({n},)")
    if pi.shape != (n,):
        raise DimensionError(f"pi has shape {pi.shape}, expected ({n},)")
    if mat.shape != (n, n):
        raise DimensionError(f"{mat_name} has shape {mat.shape}, expected ({n}, {n})")


@dataclass(frozen=True)
class ModelParams:
    """Macroscopic coefficients.

    Construction only checks shapes; use :func:`validate` (or
    :meth:`require_valid`) for the sign and detailed-balance invariants.
    """

    D: np.ndarray
    A: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "D", _as_readonly(self.D, 1, "D"))
        object.__setattr__(self, "A", _as_readonly(self.A, 2, "A"))
        object.__setattr__(self, "pi", _as_readonly(self.pi, 1, "pi"))
        _check_shapes(self.n, self.D, self.A, self.pi, "A")

    @property
    def n(self) -> int:
        return len(self.D)

    @property
    def a_tilde(self) -> np.ndarray:
        """Symmetric matrix ``pi_i A_ij``."""
        return self.pi[:, None] * self.A

    def require_valid(self, tol_db: float = DEFAULT_TOL_DB) -> "ModelParams":
        report = validate(self, tol_db)
        if not report:
            raise InvalidModelError(report)
        return self

    def to_dict(self) -> dict:
        return {"D": self.D.tolist(), "A": self.A.tolist(), "pi": self.pi.tolist()}


@dataclass(frozen=True)
class MicroParams:
    """Particle-level rates; ``Dij`` is symmetrised on construction."""

    D: np.ndarray
    Dij: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        D = _as_readonly(self.D, 1, "D")
        Dij = np.array(self.Dij, dtype=float)
        pi = _as_readonly(self.pi, 1, "pi")
        _check_shapes(len(D), D, Dij, pi, "Dij")
        if np.any(D < 0) or np.any(Dij < 0):
            raise ValueError("jump rates must be nonnegative")
        if np.any(pi <= 0):
            raise ValueError("weights pi must be strictly positive")
        Dij = 0.5 * (Dij + Dij.T)
        Dij.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "Dij", Dij)
        object.__setattr__(self, "pi", pi)

    @property
    def n(self) -> int:
        return len(self.D)

    def normalized(self) -> "MicroParams":
        """Copy with weights rescaled to sum to one (particle fractions)."""
        return MicroParams(self.D, self.Dij, self.pi / self.pi.sum())

    def to_dict(self) -> dict:
        return {"D": self.D.tolist(), "Dij": self.Dij.tolist(), "pi": self.pi.tolist()}


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.violations

    @property
    def valid(self) -> bool:
        return not self.violations


def detailed_balance_defect(params: ModelParams) -> np.ndarray:
    """Matrix of ``|pi_i A_ij - pi_j A_ji| / max(1, |pi_i A_ij|)``."""
    at = params.a_tilde
    return np.abs(at - at.T) / np.maximum(1.0, np.abs(at))


def validate(params: ModelParams, tol_db: float = DEFAULT_TOL_DB) -> ValidationReport:
    """Check every model invariant and list the violations.

    An empty (falsy-free) report means the parameters are usable by the
    solver.
    """
    report = ValidationReport()
    if np.any(params.D < 0):
        report.violations.append(f"negative diffusion rate D={params.D.tolist()}")
    if np.any(params.pi <= 0):
        report.violations.append(f"weights pi must be strictly positive, got {params.pi.tolist()}")
    if np.any(params.A < 0):
        report.violations.append("cross-diffusion coefficients A_ij must be nonnegative")
    diag = np.diag(params.A)
    for i in np.flatnonzero(diag <= 0):
        report.violations.append(f"self-diffusion A[{i}][{i}]={diag[i]} must be strictly positive")
    defect = detailed_balance_defect(params)
    n = params.n
    for i in range(n):
        for j in range(i + 1, n):
            if defect[i, j] > tol_db:
                report.violations.append(
                    f"detailed balance pi_i A_ij = pi_j A_ji violated for (i, j)=({i}, {j}): "
                    f"{float(params.pi[i] * params.A[i, j])!r} != {float(params.pi[j] * params.A[j, i])!r}"
                )
    return report


def micro_to_macro(micro: MicroParams) -> ModelParams:
    """``A_ij = D_ij * pi_j``; detailed balance holds by construction."""
    return ModelParams(D=micro.D, A=micro.Dij * micro.pi[None, :], pi=micro.pi)


def macro_to_micro(params: ModelParams, tol_db: float = DEFAULT_TOL_DB) -> MicroParams:
    """Inverse of :func:`micro_to_macro`, ``D_ij = A_ij / pi_j``.

    Raises
    ------
    DetailedBalanceError
        If ``params`` does not satisfy detailed balance within ``tol_db``.
    """
    if np.any(detailed_balance_defect(params) > tol_db):
        raise DetailedBalanceError("coefficients violate pi_i A_ij = pi_j A_ji")
    return MicroParams(D=params.D, Dij=params.A / params.pi[None, :], pi=params.pi)
