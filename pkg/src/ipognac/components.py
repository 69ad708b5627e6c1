"""Models of the individual optical elements.

Every element exposes a Jones action for monochromatic pure states. Elements
that matter for finite coherence additionally act on a :class:`Field`, a sum
of delayed amplitude terms from which the coherency matrix of a pulse with a
Gaussian spectrum follows in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .polarization import (
    ATOL,
    CoherencyMatrix,
    JonesOperator,
    JonesVector,
    apply,
    phase_retarder,
)

C_LIGHT = 299_792_458.0
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SpectralModel:
    wavelength: float = 1550e-9
    coherence_time: float = 2e-12

    def __post_init__(self):
        if not self.coherence_time > 0:
            raise ValueError("coherence_time must be > 0")

    def gamma(self, tau) -> np.ndarray:
        """Modulus of the complex degree of coherence at delay ``tau``."""
        if np.isinf(self.coherence_time):
            return np.ones_like(np.asarray(tau, dtype=float))
        x = np.asarray(tau, dtype=float) / self.coherence_time
        return np.exp(-0.5 * x * x)


MONOCHROMATIC = SpectralModel(coherence_time=np.inf)


@dataclass(frozen=True)
class PmfSegment:
    """Polarization-maintaining fiber with its slow axis along V.

    ``delta`` is the birefringent phase (V relative to H) and ``group_delay``
    the differential group delay between the axes.
    """

    length: float = 1.0
    delta: float = 0.0
    group_delay: float = 0.0
    dphase_dT: float = 0.0
    temperature_offset: float = 0.0

    def __post_init__(self):
        if self.group_delay < 0:
            raise ValueError("group_delay must be >= 0")

    @classmethod
    def from_fiber(cls, length: float, delta_n: float, wavelength: float = 1550e-9,
                   dphase_dT: float = 0.0, temperature_offset: float = 0.0) -> PmfSegment:
        return cls(
            length=length,
            delta=TWO_PI * delta_n * length / wavelength,
            group_delay=delta_n * length / C_LIGHT,
            dphase_dT=dphase_dT,
            temperature_offset=temperature_offset,
        )

    @property
    def phase(self) -> float:
        return self.delta + self.dphase_dT * self.temperature_offset

    @property
    def reported_phase(self) -> float:
        return float(np.mod(self.phase, TWO_PI))


@dataclass(frozen=True)
class PhaseModulator:
    v_halfpi: float = 3.0
    sigma_phi: float = 0.015
    window: float = 0.0

    def __post_init__(self):
        if not self.v_halfpi > 0:
            raise ValueError("v_halfpi must be > 0")
        if self.sigma_phi < 0:
            raise ValueError("sigma_phi must be >= 0")

    def phase(self, voltage):
        return 0.5 * np.pi * np.asarray(voltage, dtype=float) / self.v_halfpi

    def noise_rms(self, voltage):
        """Phase noise RMS of a window driven at ``voltage``; undriven windows are noiseless."""
        return self.sigma_phi * np.abs(np.asarray(voltage, dtype=float)) / self.v_halfpi


@dataclass(frozen=True)
class FiberPbs:
    extinction: float = 1e-3

    def __post_init__(self):
        if not 0 <= self.extinction < 1:
            raise ValueError("extinction must be in [0, 1)")


@dataclass(frozen=True)
class FreeSpaceBs:
    transmittance: float = 0.5
    reflectance: float = 0.5

    def __post_init__(self):
        if self.transmittance < 0 or self.reflectance < 0:
            raise ValueError("T and R must be >= 0")
        if self.transmittance + self.reflectance > 1 + ATOL:
            raise ValueError("T + R must be <= 1")


@dataclass(frozen=True)
class SmfUnitary:
    """Arbitrary SU(2) polarization transformation, ZYZ Euler angles."""

    theta1: float = 0.0
    theta2: float = 0.0
    theta3: float = 0.0
    drift_rate: float = 0.0

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3])

    @property
    def operator(self) -> JonesOperator:
        return JonesOperator(smf_matrix(self.theta1, self.theta2, self.theta3), unitary=True)

    @classmethod
    def haar(cls, rng: np.random.Generator, drift_rate: float = 0.0) -> SmfUnitary:
        a, c = rng.uniform(0.0, TWO_PI, size=2)
        b = np.arccos(1.0 - 2.0 * rng.uniform())
        return cls(float(a), float(b), float(c), drift_rate)


def smf_matrix(a, b, c) -> np.ndarray:
    """Rz(a) Ry(b) Rz(c) with half-angle SU(2) convention; broadcasts over angles."""
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, c)))
    cb, sb = np.cos(b / 2), np.sin(b / 2)
    m = np.empty(a.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = np.exp(-0.5j * (a + c)) * cb
    m[..., 0, 1] = -np.exp(-0.5j * (a - c)) * sb
    m[..., 1, 0] = np.exp(0.5j * (a - c)) * sb
    m[..., 1, 1] = np.exp(0.5j * (a + c)) * cb
    return m


# Field bookkeeping for finite coherence


@dataclass(frozen=True)
class Term:
    amp: np.ndarray  # shape (..., 2)
    delay: float = 0.0
    mode: int = 0


@dataclass(frozen=True)
class Field:
    """Sum of delayed partial fields.

    Terms with equal ``mode`` are mutually coherent up to their delay
    difference; terms of different modes never interfere.
    """

    terms: tuple[Term, ...] = field(default_factory=tuple)

    @classmethod
    def from_state(cls, s) -> Field:
        a = s.array if isinstance(s, JonesVector) else np.asarray(s, dtype=complex)
        return cls((Term(a),))

    def map(self, m: np.ndarray) -> Field:
        """Apply the same (broadcastable) 2x2 matrix to every term."""
        return Field(tuple(replace(t, amp=_matvec(m, t.amp)) for t in self.terms))

    def __add__(self, other: Field) -> Field:
        return Field(self.terms + other.terms)

    def scaled(self, k) -> Field:
        return Field(tuple(replace(t, amp=t.amp * k) for t in self.terms))

    def coherency(self, spectral: SpectralModel = MONOCHROMATIC) -> np.ndarray:
        terms = self.terms
        shape = np.broadcast_shapes(*(t.amp.shape for t in terms))
        j = np.zeros(shape[:-1] + (2, 2), dtype=complex)
        for k in terms:
            for l in terms:
                if k.mode != l.mode:
                    continue
                g = spectral.gamma(k.delay - l.delay)
                j = j + g * k.amp[..., :, None] * l.amp[..., None, :].conj()
        return j

    def jones(self) -> np.ndarray:
        """Coherent sum of mode-0 terms (monochromatic limit)."""
        return sum(t.amp for t in self.terms if t.mode == 0)

    @property
    def max_mode(self) -> int:
        return max((t.mode for t in self.terms), default=0)


def _matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", m, v)


# Element actions


def pmf_matrix(seg: PmfSegment) -> np.ndarray:
    return phase_retarder(seg.phase).matrix


def pmf_phase(seg: PmfSegment, s: JonesVector) -> JonesVector:
    return apply(phase_retarder(seg.phase), s)


def pmf_field(seg: PmfSegment, f: Field) -> Field:
    """Slow (V) component acquires the phase and the differential group delay."""
    out = []
    eph = np.exp(1j * seg.phase)
    for t in f.terms:
        h = t.amp * np.array([1.0, 0.0])
        v = t.amp * np.array([0.0, eph])
        out.append(Term(h, t.delay, t.mode))
        out.append(Term(v, t.delay + seg.group_delay, t.mode))
    return Field(tuple(out))


def pmf_coherency(seg: PmfSegment, spec: SpectralModel, c: CoherencyMatrix) -> CoherencyMatrix:
    g = spec.gamma(seg.group_delay) * np.exp(1j * seg.phase)
    m = np.array(c.matrix)
    m[1, 0] *= g
    m[0, 1] *= np.conj(g)
    return CoherencyMatrix(m)


def pbs_split(p: FiberPbs, s: JonesVector) -> tuple[np.ndarray, np.ndarray]:
    """Split into the H port and V port.

    Returns ``(ideal, leaked)``: ``ideal[0]``/``ideal[1]`` are the amplitudes
    routed correctly into the H/V port, ``leaked[0]``/``leaked[1]`` the
    cross-talk amplitudes entering the H/V port on the orthogonal fiber axis.
    Leaked light is incoherent with the ideal light, so port intensities add.
    """
    a = s.array
    keep = np.sqrt(1.0 - p.extinction)
    leak = np.sqrt(p.extinction)
    return keep * a, leak * a[::-1]


def port_intensities(ideal: np.ndarray, leaked: np.ndarray) -> np.ndarray:
    return np.abs(ideal) ** 2 + np.abs(leaked) ** 2


def bs_matrix(b: FreeSpaceBs, path: str) -> np.ndarray:
    if path == "forward-transmit":
        return np.sqrt(b.transmittance) * np.eye(2)
    if path == "return-reflect":
        # the reflection's pi shift acts on H relative to V
        return np.sqrt(b.reflectance) * np.diag([-1.0, 1.0])
    raise ValueError(f"unknown beam-splitter path {path!r}")


def bs_interact(b: FreeSpaceBs, s: JonesVector, path: str) -> JonesVector:
    return apply(JonesOperator(bs_matrix(b, path)), s)


def smf_apply(u: SmfUnitary, s: JonesVector) -> JonesVector:
    return apply(u.operator, s)


def smf_drift(u: SmfUnitary, dt: float, rng: np.random.Generator) -> SmfUnitary:
    """Advance the Euler angles by a Gaussian random walk over ``dt`` seconds.

    ``drift_rate`` is the RMS angle diffusion per sqrt(hour).
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if u.drift_rate == 0 or dt == 0:
        return u
    step = rng.standard_normal(3) * u.drift_rate * np.sqrt(dt / 3600.0)
    a, b, c = u.angles + step
    return replace(u, theta1=float(a), theta2=float(b), theta3=float(c))
