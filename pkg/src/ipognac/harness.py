"""End-to-end three-state QKD runs: encoder, channel, receiver, sifting, QBER.

A run is evaluated in three steps: a sequential pass advancing the drift
models bin by bin, independent sampling of every bin from its own seeded
stream, and an ordered merge. Bins can therefore be sampled concurrently
without changing the result.

Two sampling modes exist. ``pulse`` simulates every pulse (modulator noise,
photon routing, clicks, timestamps). ``fast`` computes the per-pulse outcome
distribution once (averaging the modulator noise by Gauss-Hermite
quadrature) and draws the per-bin outcome counts from a multinomial, which
has the same distribution but costs nothing per pulse.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import stats

from . import rng as rngmod
from .components import (
    FiberPbs,
    FreeSpaceBs,
    PhaseModulator,
    PmfSegment,
    SmfUnitary,
    SpectralModel,
    smf_drift,
)
from .config import ExperimentConfig, format_value
from .encoders import InlineEncoder, IpognacEncoder, PognacEncoder
from .polarization import dop_array, make_state
from .receiver import (
    BASIS_STATES,
    aligned_pair,
    detect,
    outcome_probs,
    receiver_drift_step,
    station_for_basis,
)
from .timing import LoopGeometry, PulseTrain, effective_phases, schedule_for_sequence

CSV_HEADER = ("bin_start_s", "sifted", "errors", "qber", "qber_std")


@dataclass(frozen=True)
class QberSample:
    bin_start: float
    sifted: int
    errors: int
    qber: float | None
    std: float | None


@dataclass(frozen=True)
class RunSummary:
    basis: str
    encoder: str
    n_bins: int
    mean_qber: float | None
    sem_qber: float | None
    pooled_qber: float | None
    pooled_std: float | None
    total_sifted: int
    total_errors: int
    slope_per_hour: float | None
    slope_stderr: float | None
    seed: int
    config: dict = field(default_factory=dict, repr=False)

    @property
    def slope_consistent_with_zero(self) -> bool:
        """Two-sided test of a zero trend at 95% confidence."""
        if self.slope_per_hour is None or self.slope_stderr in (None, 0.0):
            return True
        dof = max(self.n_bins - 2, 1)
        return abs(self.slope_per_hour) <= stats.t.ppf(0.975, dof) * self.slope_stderr

    def to_text(self) -> str:
        rows = {
            "basis": self.basis,
            "encoder": self.encoder,
            "seed": self.seed,
            "n_bins": self.n_bins,
            "total_sifted": self.total_sifted,
            "total_errors": self.total_errors,
            "mean_qber": self.mean_qber,
            "sem_qber": self.sem_qber,
            "pooled_qber": self.pooled_qber,
            "pooled_std": self.pooled_std,
            "slope_per_hour": self.slope_per_hour,
            "slope_stderr": self.slope_stderr,
        }
        lines = [f"{k}={'' if v is None else format_value(v)}" for k, v in rows.items()]
        lines += [f"config.{k}={format_value(v)}" for k, v in self.config.items()]
        return "\n".join(lines) + "\n"


def qber_estimate(errors: int, sifted: int) -> tuple[float | None, float | None]:
    """QBER and its binomial standard deviation; ``(None, None)`` when nothing was sifted."""
    if sifted < 0 or errors < 0:
        raise ValueError("counts must be non-negative")
    if errors > sifted:
        raise ValueError(f"errors ({errors}) exceed sifted events ({sifted})")
    if sifted == 0:
        return None, None
    q = errors / sifted
    return q, math.sqrt(q * (1.0 - q) / sifted)


# building blocks from a config


def spectral_model(cfg: ExperimentConfig) -> SpectralModel:
    return SpectralModel(cfg.source.wavelength_m, cfg.source.tau_c_s)


def modulator(cfg: ExperimentConfig) -> PhaseModulator:
    return PhaseModulator(cfg.modulator.v_halfpi, cfg.modulator.sigma_phi)


def smf_unitary(cfg: ExperimentConfig) -> SmfUnitary:
    if cfg.smf.haar:
        return SmfUnitary.haar(rngmod.generator(cfg.run.seed, rngmod.HAAR), cfg.smf.drift_rate)
    return SmfUnitary(cfg.smf.theta1, cfg.smf.theta2, cfg.smf.theta3, cfg.smf.drift_rate)


def build_encoder(cfg: ExperimentConfig, smf: SmfUnitary | None = None):
    mod = modulator(cfg)
    pbs = FiberPbs(cfg.pbs.extinction)
    kind = cfg.encoder.kind
    if kind == "ipognac":
        return IpognacEncoder(
            input_state=make_state(cfg.source.input),
            lead_pmf=PmfSegment(length=cfg.pmf.length_m, delta=cfg.pmf.delta_rad,
                                group_delay=cfg.pmf.group_delay_s, dphase_dT=cfg.pmf.dphase_dt),
            modulator=mod,
            pbs=pbs,
            bs=FreeSpaceBs(cfg.bs.t, cfg.bs.r),
            loop=loop_geometry(cfg),
        )
    if kind == "pognac":
        u0 = smf_unitary(cfg)
        return PognacEncoder(smf=smf or u0, calibrated=cfg.encoder.calibrated, calibration=u0,
                             modulator=mod, pbs=pbs)
    return InlineEncoder(modulator=mod, pmd=cfg.inline.pmd_s, spectral=spectral_model(cfg),
                         input_state=make_state(cfg.source.input))


def loop_geometry(cfg: ExperimentConfig) -> LoopGeometry:
    return LoopGeometry(cfg.loop.delta_l_m, cfg.loop.n_f, cfg.timing.formula)


def pulse_train(cfg: ExperimentConfig) -> PulseTrain:
    return PulseTrain(cfg.source.rate_hz, cfg.source.fwhm_s, cfg.source.phase_randomized)


def transmittance(cfg: ExperimentConfig) -> float:
    return 10.0 ** (-cfg.channel.loss_db / 10.0)


def label_alphabet(cfg: ExperimentConfig) -> list[str]:
    return ["L", "R", "D"] if cfg.pattern == ["RANDOM"] else list(dict.fromkeys(cfg.pattern))


def drive_voltages(cfg: ExperimentConfig, encoder) -> dict[str, tuple[float, float]]:
    """Voltages per symbol; Sagnac encoders validate their modulator timing."""
    labels = label_alphabet(cfg)
    if encoder.kind == "inline":
        return {lab: encoder.voltages(lab) for lab in labels}
    sched = schedule_for_sequence(pulse_train(cfg), loop_geometry(cfg), encoder.modulator, labels,
                                  jitter=cfg.timing.jitter_s)
    return {lab: (float(sched.v_early[i]), float(sched.v_late[i])) for i, lab in enumerate(labels)}


def phase_nodes(mod: PhaseModulator, v_early: float, v_late: float, order: int):
    """Quadrature nodes and weights for the noisy (phi_early, phi_late) pair."""
    axes = []
    for v in (v_early, v_late):
        s = float(mod.noise_rms(v))
        mean = float(mod.phase(v))
        if s == 0 or order == 1:
            axes.append((np.array([mean]), np.array([1.0])))
        else:
            x, w = hermegauss(order)
            axes.append((mean + s * x, w / w.sum()))
    (pe, we), (pl, wl) = axes
    phi_e, phi_l = np.meshgrid(pe, pl, indexing="ij")
    return phi_e.ravel(), phi_l.ravel(), np.outer(we, wl).ravel()


# run plumbing


@dataclass(frozen=True)
class _BinContext:
    index: int
    start_pulse: int
    stop_pulse: int
    efficiencies: tuple[float, float]
    pair: tuple
    encoder: object


def _pattern_counts(pattern: Sequence[str], start: int, stop: int) -> dict[str, int]:
    m = len(pattern)
    out: dict[str, int] = {}
    for j, lab in enumerate(pattern):
        def upto(x):
            return max(0, (x - j + m - 1) // m)

        out[lab] = out.get(lab, 0) + upto(stop) - upto(start)
    return out


def _random_labels(cfg: ExperimentConfig, pulses: np.ndarray) -> np.ndarray:
    u = rngmod.CounterStream(cfg.run.seed, rngmod.BIN).uniform(pulses, lane=7)
    pk = cfg.run.p_key
    return np.where(u < pk / 2, "L", np.where(u < pk, "R", "D"))


class _Run:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.basis = cfg.receiver.basis
        self.station = station_for_basis(self.basis)
        self.spectral = spectral_model(cfg)
        self.mu = cfg.source.mu
        self.loss = transmittance(cfg)
        self.period = 1.0 / cfg.source.rate_hz
        self.gate = self.period
        self.pulses_per_bin = int(round(cfg.source.rate_hz * cfg.run.bin_s))
        self.n_bins = int(math.floor(cfg.run.duration_s / cfg.run.bin_s + 1e-9))
        self.encoder0 = build_encoder(cfg)
        self.volts = drive_voltages(cfg, self.encoder0)
        self.nodes = {lab: phase_nodes(self.encoder0.modulator, *v, cfg.run.quadrature)
                      for lab, v in self.volts.items()}
        self._cache: dict = {}
        if cfg.run.mode == "pulse" and self.pulses_per_bin > cfg.run.max_pulses_per_bin:
            from .config import ConfigError

            raise ConfigError("run.mode", f"{self.pulses_per_bin} pulses per bin exceeds "
                              f"run.max_pulses_per_bin; use run.mode = fast")

    def drift_pass(self) -> list[_BinContext]:
        cfg = self.cfg
        s = cfg.snspd
        pair = aligned_pair(s.eta, s.eps_pol, s.dark_hz, s.drift_rate if cfg.run.drift else 0.0)
        drift_rng = rngmod.generator(cfg.run.seed, rngmod.DRIFT)
        smf_rng = rngmod.generator(cfg.run.seed, rngmod.SMF)
        encoder = self.encoder0
        out = []
        for b in range(self.n_bins):
            out.append(_BinContext(b, b * self.pulses_per_bin, (b + 1) * self.pulses_per_bin,
                                   tuple(d.efficiency for d in pair), pair, encoder))
            pair = receiver_drift_step(pair, cfg.run.bin_s, drift_rng)
            if encoder.kind == "pognac" and cfg.run.drift:
                encoder = replace(encoder, smf=smf_drift(encoder.smf, cfg.run.bin_s, smf_rng))
        return out

    def outcome_table(self, ctx: _BinContext) -> dict[str, np.ndarray]:
        """Noise-averaged (none, only0, only1, both) probabilities per symbol."""
        coh = self._cache.get(ctx.encoder)
        if coh is None:
            coh = {lab: ctx.encoder.emitted_coherency(pe, pl, self.spectral)
                   for lab, (pe, pl, _) in self.nodes.items()}
            self._cache[ctx.encoder] = coh
        dark = [d.dark_hz for d in ctx.pair]
        return {
            lab: self.nodes[lab][2] @ outcome_probs(j, self.station, self.mu, self.loss,
                                                    ctx.efficiencies, dark, self.gate)
            for lab, j in coh.items()
        }

    def sample_fast(self, ctx: _BinContext) -> tuple[int, int]:
        cfg = self.cfg
        g = rngmod.generator(cfg.run.seed, rngmod.BIN, ctx.index)
        table = self.outcome_table(ctx)
        if cfg.pattern == ["RANDOM"]:
            pk = cfg.run.p_key
            n = g.multinomial(ctx.stop_pulse - ctx.start_pulse, [pk / 2, pk / 2, 1 - pk])
            counts = dict(zip(("L", "R", "D"), (int(x) for x in n)))
        else:
            counts = _pattern_counts(cfg.pattern, ctx.start_pulse, ctx.stop_pulse)
        sifted = errors = 0
        for lab in sorted(counts):
            n = counts[lab]
            if lab not in BASIS_STATES[self.basis] or n == 0:
                continue
            p = table[lab]
            _, only0, only1, both = g.multinomial(n, p / p.sum())
            right = BASIS_STATES[self.basis].index(lab)
            wrong_only = only1 if right == 0 else only0
            sifted += only0 + only1
            errors += wrong_only
            if cfg.receiver.double_click == "random" and both:
                to_wrong = g.binomial(both, 0.5)
                sifted += both
                errors += to_wrong
        return int(sifted), int(errors)

    def labels_for(self, start: int, stop: int) -> np.ndarray:
        pulses = np.arange(start, stop, dtype=np.int64)
        if self.cfg.pattern == ["RANDOM"]:
            return _random_labels(self.cfg, pulses)
        pat = np.array(self.cfg.pattern)
        return pat[pulses % len(pat)]

    def sample_pulses(self, ctx: _BinContext) -> tuple[int, int]:
        cfg = self.cfg
        g = rngmod.generator(cfg.run.seed, rngmod.BIN, ctx.index)
        labels = self.labels_for(ctx.start_pulse, ctx.stop_pulse)
        mod = ctx.encoder.modulator
        stream = rngmod.CounterStream(cfg.run.seed, rngmod.PHASE)
        if ctx.encoder.kind == "inline":
            v = np.array([self.volts[lab][0] for lab in labels])
            pulses = np.arange(ctx.start_pulse, ctx.stop_pulse)
            phi_e = mod.phase(v) + mod.noise_rms(v) * stream.normal(pulses, 0)
            phi_l = np.zeros_like(phi_e)
        else:
            sched = schedule_for_sequence(pulse_train(cfg), loop_geometry(cfg), mod, labels.tolist(),
                                          start_index=ctx.start_pulse, jitter=cfg.timing.jitter_s)
            phi_e, phi_l = effective_phases(sched, np.arange(len(sched)), mod, stream)
        j = ctx.encoder.emitted_coherency(phi_e, phi_l, self.spectral)
        records = detect(j, self.mu, self.loss, ctx.pair, self.station, self.gate, g,
                         pulse_index=np.arange(ctx.start_pulse, ctx.stop_pulse), period=self.period)
        return sift(labels, self.basis, records, start=ctx.start_pulse,
                    double_click=cfg.receiver.double_click, rng=g)

    def sample(self, ctx: _BinContext) -> QberSample:
        if self.cfg.run.mode == "pulse":
            sifted, errors = self.sample_pulses(ctx)
        else:
            sifted, errors = self.sample_fast(ctx)
        q, s = qber_estimate(errors, sifted)
        return QberSample(ctx.index * self.cfg.run.bin_s, sifted, errors, q, s)


def sift(labels, basis: str, records: np.ndarray, *, start: int = 0, double_click: str = "discard",
         rng: np.random.Generator | None = None) -> tuple[int, int]:
    """Sifted and error counts from detection records.

    ``labels[k]`` is the symbol sent in pulse ``start + k``. Pulses whose
    symbol is not in the measured basis are dropped; so are double clicks,
    unless ``double_click='random'`` assigns them to a random detector.
    """
    labels = np.asarray(labels)
    n = len(labels)
    clicks = np.zeros((n, 2), dtype=bool)
    if len(records):
        clicks[records["pulse"] - start, records["detector"]] = True
    b0, b1 = BASIS_STATES[basis]
    right = np.full(n, -1)
    right[labels == b0] = 0
    right[labels == b1] = 1
    in_basis = right >= 0
    single = clicks[:, 0] ^ clicks[:, 1]
    hit = np.where(clicks[:, 0], 0, 1)
    sel = in_basis & single
    sifted = int(sel.sum())
    errors = int((hit[sel] != right[sel]).sum())
    if double_click == "random":
        both = in_basis & clicks[:, 0] & clicks[:, 1]
        nb = int(both.sum())
        if nb:
            if rng is None:
                raise ValueError("random double-click assignment needs an rng")
            pick = rng.integers(0, 2, size=nb)
            sifted += nb
            errors += int((pick != right[both]).sum())
    elif double_click != "discard":
        raise ValueError(f"unknown double-click policy {double_click!r}")
    return sifted, errors


def summarize(cfg: ExperimentConfig, samples: list[QberSample]) -> RunSummary:
    valid = [s for s in samples if s.qber is not None]
    total_s = sum(s.sifted for s in samples)
    total_e = sum(s.errors for s in samples)
    pooled, pooled_std = qber_estimate(total_e, total_s)
    mean = sem = slope = slope_se = None
    if valid:
        q = np.array([s.qber for s in valid])
        mean = float(q.mean())
        sem = float(q.std(ddof=1) / math.sqrt(len(q))) if len(q) > 1 else None
        if len(q) > 2:
            hours = np.array([s.bin_start for s in valid]) / 3600.0
            fit = stats.linregress(hours, q)
            slope, slope_se = float(fit.slope), float(fit.stderr)
    return RunSummary(
        basis=cfg.receiver.basis,
        encoder=cfg.encoder.kind + ("-calibrated" if cfg.encoder.kind == "pognac" and cfg.encoder.calibrated else ""),
        n_bins=len(samples),
        mean_qber=mean,
        sem_qber=sem,
        pooled_qber=pooled,
        pooled_std=pooled_std,
        total_sifted=total_s,
        total_errors=total_e,
        slope_per_hour=slope,
        slope_stderr=slope_se,
        seed=cfg.run.seed,
        config=cfg.to_flat(),
    )


def run_experiment(cfg: ExperimentConfig) -> tuple[list[QberSample], RunSummary]:
    run = _Run(cfg)
    contexts = run.drift_pass()
    if cfg.run.workers > 1:
        with ThreadPoolExecutor(cfg.run.workers) as pool:
            samples = list(pool.map(run.sample, contexts))
    else:
        samples = [run.sample(c) for c in contexts]
    return samples, summarize(cfg, samples)


def expected_qber(cfg: ExperimentConfig) -> float:
    """Noise-free expectation of the pooled QBER at t = 0 (no sampling, no drift)."""
    run = _Run(cfg)
    ctx = _BinContext(0, 0, run.pulses_per_bin, (0.0, 0.0), (), run.encoder0)
    s = cfg.snspd
    pair = aligned_pair(s.eta, s.eps_pol, s.dark_hz)
    ctx = replace(ctx, pair=pair, efficiencies=tuple(d.efficiency for d in pair))
    table = run.outcome_table(ctx)
    alphabet = label_alphabet(cfg)
    if cfg.pattern == ["RANDOM"]:
        pk = cfg.run.p_key
        weight = {"L": pk / 2, "R": pk / 2, "D": 1 - pk}
    else:
        weight = {lab: cfg.pattern.count(lab) for lab in alphabet}
    sifted = errors = 0.0
    for lab in alphabet:
        if lab not in BASIS_STATES[run.basis]:
            continue
        _, only0, only1, both = table[lab]
        right = BASIS_STATES[run.basis].index(lab)
        wrong = only1 if right == 0 else only0
        sifted += weight[lab] * (only0 + only1)
        errors += weight[lab] * wrong
        if cfg.receiver.double_click == "random":
            sifted += weight[lab] * both
            errors += weight[lab] * both / 2
    return errors / sifted


def output_dop(cfg: ExperimentConfig, encoder=None) -> float:
    """Mean DOP of the emitted (noise-free) states over the symbol alphabet."""
    encoder = encoder or build_encoder(cfg)
    volts = drive_voltages(cfg, encoder)
    mod = encoder.modulator
    vals = [dop_array(encoder.emitted_coherency(float(mod.phase(ve)), float(mod.phase(vl)),
                                                spectral_model(cfg))) for ve, vl in volts.values()]
    return float(np.mean(vals))


# serialization


def write_csv(samples: Sequence[QberSample], fh) -> None:
    fh.write(",".join(CSV_HEADER) + "\n")
    for s in samples:
        row = [format_value(float(s.bin_start)), str(s.sifted), str(s.errors),
               "" if s.qber is None else format_value(float(s.qber)),
               "" if s.std is None else format_value(float(s.std))]
        fh.write(",".join(row) + "\n")


def csv_text(samples: Sequence[QberSample]) -> str:
    buf = io.StringIO()
    write_csv(samples, buf)
    return buf.getvalue()


def read_csv(fh) -> list[QberSample]:
    reader = csv.DictReader(fh)
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(QberSample(
            float(row["bin_start_s"]), int(row["sifted"]), int(row["errors"]),
            float(row["qber"]) if row["qber"] else None,
            float(row["qber_std"]) if row["qber_std"] else None,
        ))
    return out


# encoder comparison

COMPARISON_VARIANTS = (
    ("ipognac", {"encoder.kind": "ipognac"}),
    ("pognac-uncalibrated", {"encoder.kind": "pognac", "encoder.calibrated": False}),
    ("pognac-calibrated", {"encoder.kind": "pognac", "encoder.calibrated": True}),
    ("inline", {"encoder.kind": "inline"}),
)


@dataclass(frozen=True)
class ComparisonRow:
    encoder: str
    q_k: float | None
    q_c: float | None
    dop: float


def compare_encoders(cfg: ExperimentConfig) -> list[ComparisonRow]:
    rows = []
    for name, over in COMPARISON_VARIANTS:
        q = {}
        for basis in ("K", "C"):
            c = ExperimentConfig.from_flat({**over, "receiver.basis": basis}, cfg)
            q[basis] = run_experiment(c)[1].pooled_qber
        rows.append(ComparisonRow(name, q["K"], q["C"], output_dop(ExperimentConfig.from_flat(over, cfg))))
    return rows


def haar_pognac_qber(cfg: ExperimentConfig, n_unitaries: int = 100) -> np.ndarray:
    """Pooled QBER of the uncalibrated SMF-output encoder for independent Haar unitaries."""
    g = rngmod.generator(cfg.run.seed, rngmod.HAAR, 1)
    base = ExperimentConfig.from_flat({"encoder.kind": "pognac", "encoder.calibrated": False}, cfg)
    out = []
    for _ in range(n_unitaries):
        u = SmfUnitary.haar(g)
        c = ExperimentConfig.from_flat({"smf.theta1": u.theta1, "smf.theta2": u.theta2,
                                        "smf.theta3": u.theta3, "smf.haar": False}, base)
        out.append(run_experiment(c)[1].pooled_qber)
    return np.array(out)


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    lines = ["encoder,q_k,q_c,dop"]
    for r in rows:
        cells = [r.encoder] + ["" if v is None else format_value(float(v)) for v in (r.q_k, r.q_c, r.dop)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# sweeps


def parse_sweep_values(text: str) -> list[str]:
    text = text.strip()
    if ":" in text and "," not in text:
        lo, hi, num = text.split(":")
        return [format_value(float(x)) for x in np.linspace(float(lo), float(hi), int(num))]
    return [v.strip() for v in text.split(",") if v.strip()]


@dataclass(frozen=True)
class SweepPoint:
    value: str
    summary: RunSummary


def sweep(cfg: ExperimentConfig, key: str | None = None, values: Sequence[str] | None = None) -> list[SweepPoint]:
    from .config import ConfigError

    key = key or cfg.sweep.key
    if not key:
        raise ConfigError("sweep.key", "no sweep key given")
    values = list(values) if values is not None else parse_sweep_values(cfg.sweep.values)
    if not values:
        raise ConfigError("sweep.values", "no sweep values given")
    out = []
    for v in values:
        c = ExperimentConfig.from_flat({key: v}, cfg)
        out.append(SweepPoint(v, run_experiment(c)[1]))
    return out


def sweep_csv(key: str, points: Sequence[SweepPoint]) -> str:
    lines = [f"{key},mean_qber,pooled_qber,pooled_std,total_sifted"]
    for p in points:
        s = p.summary
        cells = [p.value] + ["" if v is None else format_value(float(v))
                             for v in (s.mean_qber, s.pooled_qber, s.pooled_std)] + [str(s.total_sifted)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
