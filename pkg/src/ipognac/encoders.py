"""Polarization encoders: the self-compensating Sagnac encoder and two baselines.

All three map a pair of modulator phases (or a drive voltage, for the
in-line modulator) to an emitted field. The Sagnac encoders are built stage
by stage so element imperfections enter where they physically occur.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import timing
from .components import (
    MONOCHROMATIC,
    Field,
    FiberPbs,
    FreeSpaceBs,
    PhaseModulator,
    PmfSegment,
    SmfUnitary,
    SpectralModel,
    Term,
    bs_matrix,
    pmf_field,
    smf_matrix,
)
from .polarization import CoherencyMatrix, JonesVector, make_state


def _sagnac_field(pbs: FiberPbs, phi_e, phi_l, f: Field) -> Field:
    """Fiber PBS, counter-propagating loop and recombination.

    V enters the clockwise arm (modulator, then delay line) and H the
    counter-clockwise arm (delay line, then modulator). On recombination the
    clockwise light leaves as H and the counter-clockwise light as -V, so the
    unmodulated loop is ``i sigma_y``. A fraction ``extinction`` of each arm
    leaks into the orthogonal output polarization on its own incoherent mode;
    the cross-talk at the splitting pass is lost.
    """
    keep = np.sqrt(1.0 - pbs.extinction)
    leak = np.sqrt(pbs.extinction)
    e_early = np.exp(1j * np.asarray(phi_e, dtype=float))
    e_late = np.exp(1j * np.asarray(phi_l, dtype=float))
    out = []
    for t in f.terms:
        cw = keep * t.amp[..., 1] * e_early
        ccw = keep * t.amp[..., 0] * e_late
        zero = np.zeros_like(cw * ccw)
        base = 3 * t.mode
        out.append(Term(np.stack([keep * cw + zero, -keep * ccw + zero], axis=-1), t.delay, base))
        if pbs.extinction > 0:
            out.append(Term(np.stack([zero, leak * cw + zero], axis=-1), t.delay, base + 1))
            out.append(Term(np.stack([-leak * ccw + zero, zero], axis=-1), t.delay, base + 2))
    return Field(tuple(out))


def _normalized(j: np.ndarray) -> np.ndarray:
    tr = np.trace(j, axis1=-2, axis2=-1).real
    return j / tr[..., None, None]


@dataclass(frozen=True)
class IpognacEncoder:
    input_state: JonesVector = field(default_factory=lambda: make_state("D"))
    lead_pmf: PmfSegment = field(default_factory=PmfSegment)
    modulator: PhaseModulator = field(default_factory=PhaseModulator)
    pbs: FiberPbs = field(default_factory=FiberPbs)
    bs: FreeSpaceBs = field(default_factory=FreeSpaceBs)
    loop: timing.LoopGeometry = field(default_factory=timing.LoopGeometry)

    kind = "ipognac"

    def __post_init__(self):
        if abs(self.input_state.intensity - 1.0) > 1e-12:
            raise ValueError("input state must be normalized")

    def field_out(self, phi_e, phi_l, *, lead: bool = True, stop: str = "output") -> Field:
        f = Field.from_state(self.input_state).map(bs_matrix(self.bs, "forward-transmit"))
        if lead:
            f = pmf_field(self.lead_pmf, f)
        f = _sagnac_field(self.pbs, phi_e, phi_l, f)
        if stop == "loop":
            return f
        if lead:
            # return pass through the same fiber: V is still on the slow axis
            f = pmf_field(self.lead_pmf, f)
        return f.map(bs_matrix(self.bs, "return-reflect"))

    def emitted_coherency(self, phi_e, phi_l, spectral: SpectralModel = MONOCHROMATIC) -> np.ndarray:
        """Unit-trace output coherency, broadcasting over the phase arrays."""
        return _normalized(self.field_out(phi_e, phi_l).coherency(spectral))

    def voltages(self, label: str) -> tuple[float, float]:
        return timing.voltages_for(label, self.modulator)


def ipognac_intermediate(enc: IpognacEncoder, phi_e: float, phi_l: float) -> JonesVector:
    """State leaving the fiber PBS after the loop, before the return pass."""
    return JonesVector.from_array(enc.field_out(phi_e, phi_l, stop="loop").jones())


def ipognac_output(enc: IpognacEncoder, phi_e: float, phi_l: float) -> JonesVector:
    """Emitted state (carries the beam-splitter and PBS throughput)."""
    return JonesVector.from_array(enc.field_out(phi_e, phi_l).jones())


def sagnac_bare(enc: IpognacEncoder, s: JonesVector) -> JonesVector:
    """Unmodulated PBS + loop acting on ``s``."""
    return JonesVector.from_array(_sagnac_field(enc.pbs, 0.0, 0.0, Field.from_state(s)).jones())


def ipognac_output_coherency(enc: IpognacEncoder, spec: SpectralModel,
                             phi_e: float, phi_l: float, *, lead: bool = True) -> CoherencyMatrix:
    return CoherencyMatrix(enc.field_out(phi_e, phi_l, lead=lead).coherency(spec))


def uncompensated_double_pass(seg: PmfSegment, spec: SpectralModel,
                              s: JonesVector | None = None) -> CoherencyMatrix:
    """Two passes through the PMF on the same axes: delays add instead of cancelling."""
    f = Field.from_state(s if s is not None else make_state("D"))
    f = pmf_field(seg, pmf_field(seg, f))
    return CoherencyMatrix(f.coherency(spec))


@dataclass(frozen=True)
class PognacEncoder:
    """Sagnac encoder fed and read out through single-mode fiber.

    The input polarization controller is assumed calibrated, so the PBS sees
    the balanced state ``pc_state``. The output fiber applies ``smf``; when
    ``calibrated`` the receiver undoes ``calibration`` (defaults to ``smf``).
    """

    smf: SmfUnitary = field(default_factory=SmfUnitary)
    calibrated: bool = False
    calibration: SmfUnitary | None = None
    modulator: PhaseModulator = field(default_factory=PhaseModulator)
    pbs: FiberPbs = field(default_factory=FiberPbs)
    pc_state: JonesVector = field(default_factory=lambda: make_state("A"))

    kind = "pognac"

    def field_out(self, phi_e, phi_l) -> Field:
        f = _sagnac_field(self.pbs, phi_e, phi_l, Field.from_state(self.pc_state))
        f = f.map(smf_matrix(*self.smf.angles))
        if self.calibrated:
            cal = self.calibration if self.calibration is not None else self.smf
            f = f.map(smf_matrix(*cal.angles).conj().T)
        return f

    def emitted_coherency(self, phi_e, phi_l, spectral: SpectralModel = MONOCHROMATIC) -> np.ndarray:
        return _normalized(self.field_out(phi_e, phi_l).coherency(spectral))

    def voltages(self, label: str) -> tuple[float, float]:
        return timing.voltages_for(label, self.modulator)


def pognac_output(enc: PognacEncoder, phi_e: float, phi_l: float) -> JonesVector:
    return JonesVector.from_array(enc.field_out(phi_e, phi_l).jones())


@dataclass(frozen=True)
class InlineEncoder:
    """Birefringent phase modulator driven directly, input at 45 degrees.

    Only the early phase is used; ``pmd`` is the differential group delay of
    the crystal.
    """

    modulator: PhaseModulator = field(default_factory=PhaseModulator)
    pmd: float = 0.5e-12
    spectral: SpectralModel = field(default_factory=SpectralModel)
    input_state: JonesVector = field(default_factory=lambda: make_state("D"))

    kind = "inline"

    def __post_init__(self):
        if self.pmd < 0:
            raise ValueError("pmd must be >= 0")

    def field_out(self, phi) -> Field:
        phi = np.asarray(phi, dtype=float)
        a = self.input_state.array
        h = a * np.array([1.0, 0.0]) * np.ones(phi.shape + (1,))
        v = a * np.array([0.0, 1.0]) * np.exp(1j * phi)[..., None]
        return Field((Term(h, 0.0), Term(v, self.pmd)))

    def emitted_coherency(self, phi_e, phi_l=0.0, spectral: SpectralModel | None = None) -> np.ndarray:
        return _normalized(self.field_out(phi_e).coherency(spectral or self.spectral))

    def voltages(self, label: str) -> tuple[float, float]:
        rel = timing.TARGET_PHASE.get(label)
        if rel is None:
            raise ValueError(f"cannot encode symbol {label!r}")
        return float(np.sign(rel)) * self.modulator.v_halfpi, 0.0


def inline_output(enc: InlineEncoder, voltage: float) -> CoherencyMatrix:
    phi = float(enc.modulator.phase(voltage))
    return CoherencyMatrix(enc.field_out(phi).coherency(enc.spectral))


Encoder = IpognacEncoder | PognacEncoder | InlineEncoder
