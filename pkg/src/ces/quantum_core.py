"""Two-qubit state algebra for the three element states.

All states are 4x4 density matrices in the computational basis
``|00>, |01>, |10>, |11>``.  The first tensor factor belongs to user ``a``,
the second to user ``b``.

Equatorial measurements are parametrised by an angle ``theta``.  User ``a``
measures ``cos(theta) X + sin(theta) Y``; user ``b`` measures the conjugate
observable ``cos(theta) X - sin(theta) Y``.  With this convention the
correlation of ``|phi+>`` is ``cos(theta_a - theta_b)`` and the CHSH
combination below reaches ``+2*sqrt(2)`` for ``|phi+>``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "EmptySampleError",
    "DensityMatrix",
    "ElementStateKind",
    "MeasurementSetting",
    "CorrelationEstimate",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_X_PLUS_Y",
    "SIGMA_X_MINUS_Y",
    "TIME_BASIS",
    "CHSH_SETTINGS_A",
    "CHSH_SETTINGS_B",
    "element_state",
    "outcome_probabilities",
    "correlation",
    "correlation_from_counts",
    "correlation_exact",
    "chsh",
    "sample_outcome",
    "sample_outcomes",
    "fringe_curve",
]

TWO_PI = 2.0 * math.pi
EXACT_TOL = 1e-12
PSD_TOL = 1e-10


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class EmptySampleError(ValueError):
    """A statistic was requested from zero samples."""


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated 4x4 two-qubit density matrix."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.shape != (4, 4):
            raise DomainError(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.allclose(m, m.conj().T, rtol=0.0, atol=EXACT_TOL):
            raise DomainError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > EXACT_TOL:
            raise DomainError(f"density matrix trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise DomainError("density matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


class ElementStateKind(enum.IntEnum):
    """The three states the source can emit; the value is the trit."""

    PHI_PLUS = 0
    PHI_MINUS = 1
    MIXED_R = 2

    @classmethod
    def from_trit(cls, trit: int) -> "ElementStateKind":
        return cls(int(trit))

    @property
    def trit(self) -> int:
        return int(self.value)


@dataclass(frozen=True)
class MeasurementSetting:
    """Projective measurement: equatorial at ``angle`` or the time (Z) basis."""

    angle: float = 0.0
    time_basis: bool = False

    def __post_init__(self):
        if self.time_basis:
            object.__setattr__(self, "angle", 0.0)
        else:
            a = math.fmod(float(self.angle), TWO_PI)
            if a < 0:
                a += TWO_PI
            # fold values that round up to 2*pi back onto 0
            if a >= TWO_PI:
                a = 0.0
            object.__setattr__(self, "angle", a)

    @classmethod
    def equatorial(cls, angle: float) -> "MeasurementSetting":
        return cls(angle=angle)

    @property
    def milliradians(self) -> int:
        return int(round(self.angle * 1000.0))

    def projectors(self, conjugate: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Return the (+1, -1) eigenprojectors of the single-qubit observable."""
        if self.time_basis:
            return np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)
        theta = -self.angle if conjugate else self.angle
        phase = np.exp(1j * theta)
        plus = np.array([1.0, phase]) / math.sqrt(2.0)
        minus = np.array([1.0, -phase]) / math.sqrt(2.0)
        return np.outer(plus, plus.conj()), np.outer(minus, minus.conj())

    def label(self) -> str:
        if self.time_basis:
            return "Z"
        for name, setting in _NAMED.items():
            if math.isclose(setting.angle, self.angle, abs_tol=1e-12):
                return name
        return f"{self.angle:.6f}"


SIGMA_X = MeasurementSetting(0.0)
SIGMA_Y = MeasurementSetting(math.pi / 2)
SIGMA_X_PLUS_Y = MeasurementSetting(math.pi / 4)
SIGMA_X_MINUS_Y = MeasurementSetting(-math.pi / 4)
TIME_BASIS = MeasurementSetting(time_basis=True)

_NAMED = {"X": SIGMA_X, "Y": SIGMA_Y, "X+Y": SIGMA_X_PLUS_Y, "X-Y": SIGMA_X_MINUS_Y}

CHSH_SETTINGS_A = (SIGMA_X, SIGMA_Y)
CHSH_SETTINGS_B = (SIGMA_X_PLUS_Y, SIGMA_X_MINUS_Y)
# (a, b, sign) triples of the CHSH combination
CHSH_TERMS = (
    (SIGMA_X, SIGMA_X_PLUS_Y, 1.0),
    (SIGMA_Y, SIGMA_X_PLUS_Y, 1.0),
    (SIGMA_X, SIGMA_X_MINUS_Y, 1.0),
    (SIGMA_Y, SIGMA_X_MINUS_Y, -1.0),
)


@dataclass(frozen=True)
class CorrelationEstimate:
    n_pp: int = 0
    n_mm: int = 0
    n_pm: int = 0
    n_mp: int = 0
    E: float = 0.0
    stderr: float = 0.0

    @property
    def total(self) -> int:
        return self.n_pp + self.n_mm + self.n_pm + self.n_mp


_PHI_PLUS = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)
_PHI_MINUS = np.array([1.0, 0.0, 0.0, -1.0]) / math.sqrt(2.0)


def _check_visibility(v: float) -> float:
    v = float(v)
    if not 0.0 <= v <= 1.0 or math.isnan(v):
        raise DomainError(f"visibility must lie in [0, 1], got {v!r}")
    return v


def element_state(kind: ElementStateKind | int, v: float = 1.0) -> DensityMatrix:
    """Density matrix emitted for ``kind``.

    The two Bell states are Werner-mixed with visibility ``v``.  The mixed
    state ``R = (|00><00| + |11><11|)/2`` is returned as is.
    """
    v = _check_visibility(v)
    kind = ElementStateKind(int(kind))
    if kind is ElementStateKind.MIXED_R:
        return DensityMatrix(np.diag([0.5, 0.0, 0.0, 0.5]))
    psi = _PHI_PLUS if kind is ElementStateKind.PHI_PLUS else _PHI_MINUS
    rho = v * np.outer(psi, psi.conj()) + (1.0 - v) * np.eye(4) / 4.0
    return DensityMatrix(rho)


def _as_rho(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.entries
    return DensityMatrix(rho).entries


def outcome_probabilities(rho, a: MeasurementSetting, b: MeasurementSetting) -> np.ndarray:
    """Born-rule probabilities ``(p_pp, p_pm, p_mp, p_mm)`` for settings ``a`` and ``b``."""
    m = _as_rho(rho)
    pa = a.projectors()
    pb = b.projectors(conjugate=True)
    probs = np.array(
        [np.trace(m @ np.kron(pa[i], pb[j])).real for i in (0, 1) for j in (0, 1)]
    )
    # round-off only; a valid state never goes further negative than this
    probs[np.abs(probs) < EXACT_TOL] = 0.0
    return probs


def correlation_exact(probs) -> CorrelationEstimate:
    p_pp, p_pm, p_mp, p_mm = (float(x) for x in probs)
    if min(p_pp, p_pm, p_mp, p_mm) < 0:
        raise DomainError("probabilities must be non-negative")
    if p_pp + p_pm + p_mp + p_mm <= 0:
        raise EmptySampleError("probabilities sum to zero")
    return CorrelationEstimate(E=p_pp + p_mm - p_pm - p_mp, stderr=0.0)


def correlation_from_counts(n_pp: int, n_pm: int, n_mp: int, n_mm: int) -> CorrelationEstimate:
    """Correlation of observed coincidence counts with its binomial standard error.

    Each coincidence contributes +1 (``++``/``--``) or -1 (``+-``/``-+``), so
    the variance of the mean is ``(1 - E**2) / n``.
    """
    counts = [int(n_pp), int(n_pm), int(n_mp), int(n_mm)]
    if min(counts) < 0:
        raise DomainError("counts must be non-negative")
    total = sum(counts)
    if total == 0:
        raise EmptySampleError("no coincidences recorded")
    e = (counts[0] + counts[3] - counts[1] - counts[2]) / total
    stderr = math.sqrt(max(1.0 - e * e, 0.0) / total)
    return CorrelationEstimate(
        n_pp=counts[0], n_mm=counts[3], n_pm=counts[1], n_mp=counts[2], E=e, stderr=stderr
    )


def correlation(values, *, counts: bool | None = None) -> CorrelationEstimate:
    """Correlation from a ``(pp, pm, mp, mm)`` quadruple.

    Integer quadruples are treated as counts unless ``counts=False``.
    """
    vals = list(values)
    if len(vals) != 4:
        raise DomainError("expected a quadruple (pp, pm, mp, mm)")
    if counts is None:
        counts = all(isinstance(x, (int, np.integer)) for x in vals)
    if counts:
        return correlation_from_counts(*vals)
    return correlation_exact(vals)


def chsh(rho) -> float:
    """CHSH value ``E(X,X+Y) + E(Y,X+Y) + E(X,X-Y) - E(Y,X-Y)``."""
    m = _as_rho(rho)
    return sum(
        sign * correlation_exact(outcome_probabilities(m, a, b)).E for a, b, sign in CHSH_TERMS
    )


def sample_outcomes(probs, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw outcome indices 0..3 (``pp, pm, mp, mm``).

    ``probs`` is either one quadruple or an ``(n, 4)`` array with one row per
    draw.  The index splits as ``a = idx >> 1`` and ``b = idx & 1`` where
    0 means ``+``.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim == 1:
        n = 1 if size is None else int(size)
        cdf = np.cumsum(p)
        u = rng.random(n) * cdf[-1]
        out = np.searchsorted(cdf, u, side="right")
    else:
        cdf = np.cumsum(p, axis=1)
        u = rng.random(p.shape[0]) * cdf[:, -1]
        out = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(out, 3).astype(np.int8)


def sample_outcome(rho, a: MeasurementSetting, b: MeasurementSetting, rng: np.random.Generator):
    """Single ``(outcome_a, outcome_b)`` pair as ``'+'``/``'-'`` symbols."""
    idx = int(sample_outcomes(outcome_probabilities(rho, a, b), rng)[0])
    return ("+-"[idx >> 1], "+-"[idx & 1])


def fringe_curve(v: float, phase_offset: float = 0.0, n_points: int = 64, port: int = 1):
    """Coincidence probability of the two-photon fringe over one period.

    Returns ``(phi, p)`` arrays; ``port=2`` gives the complementary output.
    """
    v = _check_visibility(v)
    if n_points < 2:
        raise DomainError("need at least two fringe points")
    phi = np.arange(n_points) * (TWO_PI / n_points)
    sign = 1.0 if port == 1 else -1.0
    return phi, (1.0 + sign * v * np.cos(phi + phase_offset)) / 4.0
