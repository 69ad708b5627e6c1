"""Two-mode polarization algebra.

States are written in the H/V basis of a left-handed frame whose z axis
always points along the propagation direction. In that frame
``L = (H + iV)/sqrt(2)`` and ``R = (H - iV)/sqrt(2)``, and ``S3 > 0`` for L.
Readers working in a right-handed convention must negate S3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ATOL = 1e-12
PSD_SLACK = 1e-9

_SQRT1_2 = 1.0 / np.sqrt(2.0)

_BASIS = {
    "H": (1.0 + 0j, 0j),
    "V": (0j, 1.0 + 0j),
    "D": (_SQRT1_2 + 0j, _SQRT1_2 + 0j),
    "A": (_SQRT1_2 + 0j, -_SQRT1_2 + 0j),
    "L": (_SQRT1_2 + 0j, 1j * _SQRT1_2),
    "R": (_SQRT1_2 + 0j, -1j * _SQRT1_2),
}

STATE_LABELS = tuple(_BASIS)


class NumericalDomainError(ValueError):
    """Raised when a matrix leaves the physical domain (e.g. not PSD)."""


@dataclass(frozen=True)
class JonesVector:
    h: complex
    v: complex

    @classmethod
    def from_array(cls, a) -> JonesVector:
        a = np.asarray(a, dtype=complex)
        return cls(complex(a[0]), complex(a[1]))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.h, self.v], dtype=complex)

    @property
    def intensity(self) -> float:
        return abs(self.h) ** 2 + abs(self.v) ** 2

    def normalized(self) -> JonesVector:
        n = np.sqrt(self.intensity)
        if n == 0:
            raise NumericalDomainError("cannot normalize a zero vector")
        return JonesVector(self.h / n, self.v / n)

    def canonical(self) -> JonesVector:
        """Fix the global phase so that the H amplitude is real and >= 0.

        If the H amplitude vanishes, the V amplitude is made real instead.
        Only used for display and serialization.
        """
        if abs(self.h) >= ATOL:
            ph = self.h.conjugate() / abs(self.h)
            return JonesVector(complex(abs(self.h), 0.0), self.v * ph)
        if abs(self.v) >= ATOL:
            ph = self.v.conjugate() / abs(self.v)
            return JonesVector(self.h * ph, complex(abs(self.v), 0.0))
        return self

    def serialize(self) -> tuple[float, float, float, float]:
        """(re h, im h, re v, im v) of the canonical form."""
        c = self.canonical()
        return (c.h.real, c.h.imag, c.v.real, c.v.imag)


@dataclass(frozen=True, eq=False)
class JonesOperator:
    matrix: np.ndarray
    unitary: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"Jones operator must be 2x2, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("Jones operator has non-finite entries")
        if self.unitary and not np.allclose(m.conj().T @ m, np.eye(2), atol=ATOL, rtol=0):
            raise ValueError("operator flagged unitary but M^dagger M != I")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other: JonesOperator) -> JonesOperator:
        return JonesOperator(self.matrix @ other.matrix, self.unitary and other.unitary)

    @property
    def dagger(self) -> JonesOperator:
        return JonesOperator(self.matrix.conj().T, self.unitary)


@dataclass(frozen=True, eq=False)
class CoherencyMatrix:
    """2x2 Hermitian PSD matrix ``J = <E E^dagger>``; trace is the intensity."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"coherency matrix must be 2x2, got {m.shape}")
        if not np.allclose(m, m.conj().T, atol=ATOL, rtol=0):
            raise NumericalDomainError("coherency matrix is not Hermitian")
        if m.trace().real <= 0:
            raise NumericalDomainError("coherency matrix has non-positive trace")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def intensity(self) -> float:
        return float(self.matrix.trace().real)

    def normalized(self) -> CoherencyMatrix:
        return CoherencyMatrix(self.matrix / self.intensity)


@dataclass(frozen=True)
class StokesVector:
    s0: float
    s1: float
    s2: float
    s3: float

    @property
    def array(self) -> np.ndarray:
        return np.array([self.s0, self.s1, self.s2, self.s3])

    @property
    def dop(self) -> float:
        return float(np.sqrt(self.s1**2 + self.s2**2 + self.s3**2) / self.s0)


def make_state(label: str) -> JonesVector:
    try:
        h, v = _BASIS[label.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown state label {label!r}; expected one of {STATE_LABELS}") from None
    return JonesVector(h, v)


def superposition(alpha: complex, beta: complex) -> JonesVector:
    """Normalized ``alpha|H> + beta|V>``."""
    return JonesVector(complex(alpha), complex(beta)).normalized()


def apply(op: JonesOperator, s: JonesVector) -> JonesVector:
    out = JonesVector.from_array(op.matrix @ s.array)
    # lossy elements legitimately return sub-normalized vectors
    return out.normalized() if op.unitary else out


def fidelity(a: JonesVector, b: JonesVector) -> float:
    """|<a|b>|^2 for normalized states (inputs are normalized defensively)."""
    va, vb = a.array, b.array
    num = abs(np.vdot(va, vb)) ** 2
    return float(min(1.0, num / (np.vdot(va, va).real * np.vdot(vb, vb).real)))


def to_coherency(s: JonesVector) -> CoherencyMatrix:
    a = s.array
    return CoherencyMatrix(np.outer(a, a.conj()))


def stokes_from_matrix(j: np.ndarray) -> np.ndarray:
    """Stokes parameters of one or many coherency matrices (shape ``(..., 2, 2)``)."""
    j = np.asarray(j)
    jhh = j[..., 0, 0].real
    jvv = j[..., 1, 1].real
    jvh = j[..., 1, 0]
    return np.stack([jhh + jvv, jhh - jvv, 2.0 * jvh.real, 2.0 * jvh.imag], axis=-1)


def to_stokes(c: CoherencyMatrix) -> StokesVector:
    return StokesVector(*(float(x) for x in stokes_from_matrix(c.matrix)))


def dop(c: CoherencyMatrix) -> float:
    eig = np.linalg.eigvalsh(c.matrix)
    if eig[0] < -PSD_SLACK:
        raise NumericalDomainError(f"coherency matrix not PSD (min eigenvalue {eig[0]:.3e})")
    return float(min(1.0, to_stokes(c).dop))


def dop_array(j: np.ndarray) -> np.ndarray:
    s = stokes_from_matrix(j)
    return np.sqrt((s[..., 1:] ** 2).sum(axis=-1)) / s[..., 0]


def from_stokes(s: StokesVector) -> CoherencyMatrix:
    jvh = 0.5 * (s.s2 + 1j * s.s3)
    m = 0.5 * np.array([[s.s0 + s.s1, 2 * jvh.conjugate()], [2 * jvh, s.s0 - s.s1]])
    return CoherencyMatrix(m)


# Named operators

IDENTITY = JonesOperator(np.eye(2), unitary=True)
SIGMA_Y = JonesOperator(np.array([[0, -1j], [1j, 0]]), unitary=True)
I_SIGMA_Y = JonesOperator(1j * SIGMA_Y.matrix, unitary=True)


def phase_retarder(delta: float) -> JonesOperator:
    """diag(1, e^{i delta}): relative phase on the V component."""
    return JonesOperator(np.diag([1.0, np.exp(1j * delta)]), unitary=True)


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def waveplate(theta: float, retardance: float) -> JonesOperator:
    """Linear retarder with its slow axis at ``theta`` from H."""
    r = rotation(theta)
    return JonesOperator(r @ np.diag([1.0, np.exp(1j * retardance)]) @ r.T, unitary=True)
