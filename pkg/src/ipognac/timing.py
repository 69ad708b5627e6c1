"""Pulse train and modulator-window scheduling.

Inside the loop the clockwise pulse reaches the modulator first and the
counter-clockwise pulse follows after the loop asymmetry ``dt``. Driving the
modulator in a window around one transit or the other sets the early or the
late phase independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .components import C_LIGHT, PhaseModulator
from .rng import CounterStream

# relative phase phi_late - phi_early that produces each target state
TARGET_PHASE = {"D": 0.0, "L": 0.5 * np.pi, "R": -0.5 * np.pi}

_REL_TOL = 1e-12


class ScheduleError(ValueError):
    def __init__(self, report: ScheduleReport):
        self.report = report
        super().__init__("invalid modulation schedule:\n" + report.describe())


@dataclass(frozen=True)
class PulseTrain:
    rate: float = 5e7
    fwhm: float = 270e-12
    phase_randomized: bool = True

    def __post_init__(self):
        if not self.rate > 0 or not self.fwhm > 0:
            raise ValueError("rate and fwhm must be > 0")
        if not self.period > self.fwhm:
            raise ValueError(f"period {self.period:g} s must exceed the pulse FWHM {self.fwhm:g} s")

    @property
    def period(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class LoopGeometry:
    delta_l: float = 1.0
    n_f: float = 1.467
    formula: str = "physical"

    def __post_init__(self):
        if self.formula not in ("physical", "inverse"):
            raise ValueError(f"timing formula must be 'physical' or 'inverse', got {self.formula!r}")

    @property
    def asymmetry(self) -> float:
        return loop_asymmetry(self)


def loop_asymmetry(g: LoopGeometry) -> float:
    """Delay between the CW and CCW transits of the modulator, in seconds.

    ``formula='physical'`` is the transit time ``n_f * dL / c`` through the
    extra fiber; ``formula='inverse'`` evaluates ``dL / (n_f * c)``.
    """
    if not g.delta_l > 0:
        raise ValueError(f"loop imbalance must be > 0, got {g.delta_l}")
    if not g.n_f >= 1:
        raise ValueError(f"slow-axis index must be >= 1, got {g.n_f}")
    if g.formula == "inverse":
        return g.delta_l / (g.n_f * C_LIGHT)
    return g.n_f * g.delta_l / C_LIGHT


@dataclass(frozen=True)
class ScheduleEntry:
    index: int
    label: str
    v_early: float
    v_late: float
    early_start: float
    late_start: float
    width: float


@dataclass(frozen=True, eq=False)
class ModulationSchedule:
    """Per-pulse modulator windows.

    Window starts are offsets from the clockwise transit of that pulse.
    """

    index: np.ndarray
    labels: tuple[str, ...]
    v_early: np.ndarray
    v_late: np.ndarray
    early_start: np.ndarray
    late_start: np.ndarray
    width: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    def entry(self, i: int) -> ScheduleEntry:
        if not 0 <= i < len(self):
            raise IndexError(f"schedule has {len(self)} entries, got index {i}")
        return ScheduleEntry(
            int(self.index[i]), self.labels[i], float(self.v_early[i]), float(self.v_late[i]),
            float(self.early_start[i]), float(self.late_start[i]), float(self.width[i]),
        )


@dataclass(frozen=True)
class Violation:
    constraint: str
    pulse_indices: tuple[int, ...]
    detail: str


@dataclass(frozen=True)
class ScheduleReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def describe(self) -> str:
        if self.ok:
            return "ok"
        lines = []
        for v in self.violations:
            idx = ", ".join(str(i) for i in v.pulse_indices[:10])
            more = f" (+{len(v.pulse_indices) - 10} more)" if len(v.pulse_indices) > 10 else ""
            lines.append(f"{v.constraint}: pulses [{idx}]{more}: {v.detail}")
        return "\n".join(lines)


def voltages_for(label: str, mod: PhaseModulator) -> tuple[float, float]:
    """(early, late) drive voltages for one target state."""
    try:
        rel = TARGET_PHASE[label]
    except KeyError:
        raise ValueError(f"cannot encode symbol {label!r}; alphabet is {sorted(TARGET_PHASE)}") from None
    if rel > 0:
        return 0.0, mod.v_halfpi
    if rel < 0:
        return mod.v_halfpi, 0.0
    return 0.0, 0.0


def schedule_for_sequence(
    train: PulseTrain,
    g: LoopGeometry,
    mod: PhaseModulator,
    targets: Sequence[str],
    *,
    start_index: int = 0,
    guard: float | None = None,
    jitter: float = 0.0,
) -> ModulationSchedule:
    targets = list(targets)
    if not targets:
        raise ValueError("target sequence is empty")
    volts = [voltages_for(t, mod) for t in targets]
    n = len(targets)
    dt = loop_asymmetry(g)
    margin = (train.fwhm / 2 if guard is None else guard) + jitter
    width = train.fwhm + 2 * margin
    sched = ModulationSchedule(
        index=np.arange(start_index, start_index + n, dtype=np.int64),
        labels=tuple(targets),
        v_early=np.array([v[0] for v in volts]),
        v_late=np.array([v[1] for v in volts]),
        early_start=np.full(n, -width / 2),
        late_start=np.full(n, dt - width / 2),
        width=np.full(n, width),
    )
    report = validate_schedule(sched, train, g, jitter=jitter)
    if not report.ok:
        raise ScheduleError(report)
    return sched


def validate_schedule(s: ModulationSchedule, train: PulseTrain, g: LoopGeometry,
                      jitter: float = 0.0) -> ScheduleReport:
    dt = loop_asymmetry(g)
    half = train.fwhm / 2
    need = half + jitter
    tol = _REL_TOL * train.period
    early_end = s.early_start + s.width
    late_end = s.late_start + s.width
    checks = [
        ("window exceeds period", s.width > train.period + tol,
         f"window width exceeds the pulse period {train.period:.4g} s"),
        ("windows not within one period", late_end - s.early_start > train.period + tol,
         f"early and late windows span more than one period {train.period:.4g} s"),
        ("windows overlap", early_end > s.late_start + tol,
         "early window ends after the late window starts"),
        ("windows overlap pulse transits",
         (early_end > dt - half + tol) | (s.late_start < half - tol),
         f"a window covers the other direction's transit (loop asymmetry {dt:.4g} s, FWHM {train.fwhm:.4g} s)"),
        ("insufficient margin",
         (s.early_start > -half - need + tol) | (early_end < half + need - tol)
         | (s.late_start > dt - half - need + tol) | (late_end < dt + half + need - tol),
         f"window must cover its transit with margin >= {need:.4g} s"),
    ]
    out = []
    for name, mask, detail in checks:
        bad = np.flatnonzero(np.asarray(mask))
        if bad.size:
            out.append(Violation(name, tuple(int(s.index[i]) for i in bad), detail))
    return ScheduleReport(out)


def effective_phases(s: ModulationSchedule, index, mod: PhaseModulator, stream: CounterStream):
    """Realized (phi_early, phi_late) for schedule entries ``index``.

    Noise is drawn from ``stream`` keyed by the global pulse index, so the
    result does not depend on evaluation order.
    """
    idx = np.asarray(index)
    if np.any(idx < 0) or np.any(idx >= len(s)):
        raise IndexError(f"schedule has {len(s)} entries")
    ve, vl = s.v_early[idx], s.v_late[idx]
    pulse = s.index[idx]
    phi_e = mod.phase(ve) + mod.noise_rms(ve) * stream.normal(pulse, 0)
    phi_l = mod.phase(vl) + mod.noise_rms(vl) * stream.normal(pulse, 1)
    if idx.ndim == 0:
        return float(phi_e), float(phi_l)
    return phi_e, phi_l
