"""Free-space measurement station and SNSPD click statistics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .components import SmfUnitary, smf_drift
from .polarization import (
    CoherencyMatrix,
    JonesOperator,
    JonesVector,
    fidelity,
    make_state,
    waveplate,
)

# waveplate angles (QWP, HWP); only the QWP changes between bases
_ANGLES = {"K": (0.5 * np.pi, np.pi / 8), "C": (0.25 * np.pi, np.pi / 8)}
BASIS_STATES = {"K": ("L", "R"), "C": ("D", "A")}

RECORD_DTYPE = np.dtype([("pulse", np.int64), ("detector", np.int8), ("timestamp", np.float64)])


@dataclass(frozen=True)
class MeasurementStation:
    basis: str
    qwp: float
    hwp: float

    @property
    def operator(self) -> JonesOperator:
        return waveplate(self.hwp, np.pi) @ waveplate(self.qwp, 0.5 * np.pi)

    @property
    def projectors(self) -> np.ndarray:
        """Projectors onto the states routed to detector 0 and detector 1."""
        s = self.operator.matrix
        rows = s.conj()  # row i of S is <e_i|S, so b_i = S^dagger e_i
        return np.einsum("ij,ik->ijk", rows, rows.conj())

    def routed_state(self, detector: int) -> JonesVector:
        return JonesVector.from_array(self.operator.matrix.conj().T[:, detector])


def station_for_basis(basis: str) -> MeasurementStation:
    try:
        q, h = _ANGLES[basis]
    except KeyError:
        raise ValueError(f"unknown basis {basis!r}; expected 'K' or 'C'") from None
    return MeasurementStation(basis, q, h)


def projection_probs(station: MeasurementStation, s) -> tuple[float, float]:
    if isinstance(s, JonesVector):
        a = station.operator.matrix @ s.array
        p = np.abs(a) ** 2
    else:
        m = s.matrix if isinstance(s, CoherencyMatrix) else np.asarray(s)
        p = projection_probs_array(station, m)
    return float(p[0]), float(p[1])


def projection_probs_array(station: MeasurementStation, j: np.ndarray) -> np.ndarray:
    """``Tr(P_i J)`` for coherency matrices of shape ``(..., 2, 2)``; returns ``(..., 2)``."""
    return np.einsum("dij,...ji->...d", station.projectors, j).real


@dataclass(frozen=True)
class SnspdModel:
    """Threshold detector whose efficiency depends on the arriving polarization.

    Light from the PBS port (``port_state``) reaches the nanowire through a
    fiber ``smf``; the efficiency is maximal for ``preferred``.
    """

    eta: float = 0.85
    eps_pol: float = 0.02
    dark_hz: float = 0.0
    smf: SmfUnitary = field(default_factory=SmfUnitary)
    port_state: JonesVector = field(default_factory=lambda: make_state("H"))
    preferred: JonesVector = field(default_factory=lambda: make_state("H"))

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must be in [0, 1]")
        if not 0 <= self.eps_pol <= 1:
            raise ValueError("eps_pol must be in [0, 1]")
        if self.dark_hz < 0:
            raise ValueError("dark_hz must be >= 0")

    @property
    def efficiency(self) -> float:
        f = fidelity(self.preferred, JonesVector.from_array(self.smf.operator.matrix @ self.port_state.array))
        return self.eta * (1.0 - self.eps_pol * (1.0 - f))


def aligned_pair(eta: float = 0.85, eps_pol: float = 0.02, dark_hz: float = 0.0,
                 drift_rate: float = 0.0) -> tuple[SnspdModel, SnspdModel]:
    """Detector pair with fibers initially aligned for maximum efficiency."""
    d0 = SnspdModel(eta, eps_pol, dark_hz, SmfUnitary(drift_rate=drift_rate), make_state("H"))
    d1 = SnspdModel(eta, eps_pol, dark_hz, SmfUnitary(0.0, np.pi, 0.0, drift_rate), make_state("V"))
    return d0, d1


def receiver_drift_step(pair, dt: float, rng: np.random.Generator):
    if dt < 0:
        raise ValueError("dt must be >= 0")
    return tuple(replace(d, smf=smf_drift(d.smf, dt, rng)) for d in pair)


def outcome_probs(j: np.ndarray, station: MeasurementStation, mu: float, loss: float,
                  efficiencies, dark_hz, gate: float) -> np.ndarray:
    """Per-pulse probabilities of (no click, only 0, only 1, both).

    ``j`` holds unit-trace coherency matrices. Phase-randomized coherent
    pulses give independent Poisson photon numbers at the two detectors.
    """
    p = projection_probs_array(station, j)
    mean = mu * loss * p * np.asarray(efficiencies) + np.asarray(dark_hz) * gate
    q = np.exp(-mean)  # no-click probability per detector
    q0, q1 = q[..., 0], q[..., 1]
    return np.stack([q0 * q1, (1 - q0) * q1, q0 * (1 - q1), (1 - q0) * (1 - q1)], axis=-1)


def detect(states, mu: float, loss: float, pair, station: MeasurementStation, gate: float,
           rng: np.random.Generator, pulse_index=None, period: float | None = None) -> np.ndarray:
    """Sample detection records for a batch of pulses.

    ``states`` is a JonesVector, a CoherencyMatrix or an array of unit-trace
    coherency matrices ``(n, 2, 2)``. Each pulse carries Poisson(mu*loss)
    photons, routed by the station and thinned by detector efficiency; dark
    counts are Poisson(dark_hz * gate) per detector. Double clicks produce
    two records.
    """
    if not mu >= 0:
        raise ValueError("mu must be >= 0")
    if not 0 <= loss <= 1:
        raise ValueError("loss (channel transmittance) must be in [0, 1]")
    if isinstance(states, JonesVector):
        j = np.outer(states.array, states.array.conj())[None]
    elif isinstance(states, CoherencyMatrix):
        j = states.normalized().matrix[None]
    else:
        j = np.asarray(states)
        if j.ndim == 2:
            j = j[None]
    n = j.shape[0]
    idx = np.arange(n, dtype=np.int64) if pulse_index is None else np.asarray(pulse_index, dtype=np.int64)
    period = gate if period is None else period

    p = np.clip(projection_probs_array(station, j), 0.0, 1.0)
    photons = rng.poisson(mu * loss, size=n)
    to0 = rng.binomial(photons, p[:, 0] / np.maximum(p.sum(axis=1), 1e-300))
    routed = np.stack([to0, photons - to0], axis=1)
    eff = np.array([d.efficiency for d in pair])
    signal = rng.binomial(routed, eff) > 0
    dark = rng.poisson(np.array([d.dark_hz for d in pair]) * gate, size=(n, 2)) > 0
    dark_time = rng.uniform(0.0, gate, size=(n, 2))

    clicked = signal | dark
    rows, det = np.nonzero(clicked)
    t = idx[rows] * period + np.where(signal[rows, det], 0.0, dark_time[rows, det])
    rec = np.empty(rows.size, dtype=RECORD_DTYPE)
    rec["pulse"] = idx[rows]
    rec["detector"] = det
    rec["timestamp"] = t
    return np.sort(rec, order=("timestamp", "detector"))
