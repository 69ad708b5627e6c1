"""Experiment configuration.

Config files are flat ``section.key = value`` lines with ``#`` comments.
Every key has a typed default; unknown keys and unparsable values raise
:class:`ConfigError` naming the key.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping

ENV_CONFIG = "IPOGNAC_CONFIG"

# imperfection defaults chosen by scripts/fit_imperfections.py (see docs/fit.md);
# FIT_EPS_POL is fixed, not fitted
FIT_EXTINCTION = 5e-4
FIT_SIGMA_PHI = 0.065
FIT_EPS_POL = 0.02
FIT_DARK_HZ = 100.0

ALIASES = {"pattern": "run.pattern", "seed": "run.seed"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


@dataclass(frozen=True)
class SourceConfig:
    rate_hz: float = 5e7
    fwhm_s: float = 270e-12
    mu: float = 0.5
    phase_randomized: bool = True
    tau_c_s: float = 2e-12
    wavelength_m: float = 1550e-9
    input: str = "D"


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "ipognac"
    calibrated: bool = False


@dataclass(frozen=True)
class PmfConfig:
    delta_rad: float = 0.0
    group_delay_s: float = 5e-12
    length_m: float = 1.0
    dphase_dt: float = 0.0


@dataclass(frozen=True)
class PbsConfig:
    extinction: float = FIT_EXTINCTION


@dataclass(frozen=True)
class BsConfig:
    t: float = 0.5
    r: float = 0.5


@dataclass(frozen=True)
class SmfConfig:
    theta1: float = 0.0
    theta2: float = 0.0
    theta3: float = 0.0
    drift_rate: float = 0.0
    haar: bool = True


@dataclass(frozen=True)
class InlineConfig:
    pmd_s: float = 0.5e-12


@dataclass(frozen=True)
class LoopConfig:
    delta_l_m: float = 1.0
    n_f: float = 1.467


@dataclass(frozen=True)
class TimingConfig:
    formula: str = "physical"
    jitter_s: float = 0.0


@dataclass(frozen=True)
class ModulatorConfig:
    v_halfpi: float = 3.0
    sigma_phi: float = FIT_SIGMA_PHI


@dataclass(frozen=True)
class ChannelConfig:
    loss_db: float = 20.0


@dataclass(frozen=True)
class ReceiverConfig:
    basis: str = "K"
    double_click: str = "discard"


@dataclass(frozen=True)
class SnspdConfig:
    eta: float = 0.85
    eps_pol: float = FIT_EPS_POL
    dark_hz: float = FIT_DARK_HZ
    drift_rate: float = 0.05
    drift_bound: float = 0.02


@dataclass(frozen=True)
class RunConfig:
    duration_s: float = 3600.0
    bin_s: float = 60.0
    seed: int = 0
    pattern: str = "L,R,D"
    p_key: float = 2.0 / 3.0
    mode: str = "fast"
    drift: bool = True
    workers: int = 1
    quadrature: int = 16
    max_pulses_per_bin: int = 5_000_000


@dataclass(frozen=True)
class SweepConfig:
    key: str = ""
    values: str = ""


_CHOICES = {
    ("encoder", "kind"): ("ipognac", "pognac", "inline"),
    ("timing", "formula"): ("physical", "inverse"),
    ("receiver", "basis"): ("K", "C"),
    ("receiver", "double_click"): ("discard", "random"),
    ("run", "mode"): ("fast", "pulse"),
    ("source", "input"): ("H", "V", "D", "A", "L", "R"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    pmf: PmfConfig = field(default_factory=PmfConfig)
    pbs: PbsConfig = field(default_factory=PbsConfig)
    bs: BsConfig = field(default_factory=BsConfig)
    smf: SmfConfig = field(default_factory=SmfConfig)
    inline: InlineConfig = field(default_factory=InlineConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    modulator: ModulatorConfig = field(default_factory=ModulatorConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    snspd: SnspdConfig = field(default_factory=SnspdConfig)
    run: RunConfig = field(default_factory=RunConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        _validate(self)

    def to_flat(self) -> dict[str, object]:
        out = {}
        for sec in fields(self):
            sub = getattr(self, sec.name)
            for f in fields(sub):
                out[f"{sec.name}.{f.name}"] = getattr(sub, f.name)
        return out

    @classmethod
    def from_flat(cls, values: Mapping[str, object], base: ExperimentConfig | None = None) -> ExperimentConfig:
        base = base or cls()
        sections: dict[str, dict[str, object]] = {}
        for raw_key, raw in values.items():
            key = ALIASES.get(raw_key.strip(), raw_key.strip())
            sec, _, name = key.partition(".")
            sub = getattr(base, sec, None) if sec in _SECTIONS else None
            if sub is None or name not in {f.name for f in fields(sub)}:
                raise ConfigError(key, "unknown key")
            default = getattr(type(sub)(), name)
            sections.setdefault(sec, {})[name] = _coerce(key, raw, default)
        kwargs = {sec: replace(getattr(base, sec), **vals) for sec, vals in sections.items()}
        return replace(base, **kwargs)

    def with_overrides(self, **flat) -> ExperimentConfig:
        """Override by dotted key, written with ``__`` for the dot."""
        return ExperimentConfig.from_flat({k.replace("__", "."): v for k, v in flat.items()}, self)

    @property
    def pattern(self) -> list[str]:
        return [s.strip().upper() for s in self.run.pattern.split(",") if s.strip()]


_SECTIONS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, raw: object, default: object) -> object:
    if not isinstance(raw, str):
        if isinstance(default, bool):
            if not isinstance(raw, bool):
                raise ConfigError(key, f"expected a boolean, got {raw!r}")
            return raw
        if isinstance(default, int):
            if isinstance(raw, bool) or int(raw) != raw:
                raise ConfigError(key, f"expected an integer, got {raw!r}")
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text, 0)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {type(default).__name__}") from None
    return text


def _validate(cfg: ExperimentConfig) -> None:
    def need(cond: bool, key: str, msg: str):
        if not cond:
            raise ConfigError(key, msg)

    for (sec, name), allowed in _CHOICES.items():
        val = getattr(getattr(cfg, sec), name)
        need(val in allowed, f"{sec}.{name}", f"must be one of {allowed}, got {val!r}")
    s = cfg.source
    need(s.rate_hz > 0, "source.rate_hz", "must be > 0")
    need(s.fwhm_s > 0, "source.fwhm_s", "must be > 0")
    need(1.0 / s.rate_hz > s.fwhm_s, "source.fwhm_s", "pulse FWHM must be shorter than the period")
    need(s.mu >= 0, "source.mu", "must be >= 0")
    need(s.tau_c_s > 0, "source.tau_c_s", "must be > 0")
    need(cfg.pmf.group_delay_s >= 0, "pmf.group_delay_s", "must be >= 0")
    need(0 <= cfg.pbs.extinction < 1, "pbs.extinction", "must be in [0, 1)")
    need(cfg.bs.t >= 0 and cfg.bs.r >= 0 and cfg.bs.t + cfg.bs.r <= 1 + 1e-12, "bs.t", "need T, R >= 0 and T + R <= 1")
    need(cfg.inline.pmd_s >= 0, "inline.pmd_s", "must be >= 0")
    need(cfg.loop.delta_l_m > 0, "loop.delta_l_m", "must be > 0")
    need(cfg.loop.n_f >= 1, "loop.n_f", "must be >= 1")
    need(cfg.timing.jitter_s >= 0, "timing.jitter_s", "must be >= 0")
    need(cfg.modulator.v_halfpi > 0, "modulator.v_halfpi", "must be > 0")
    need(cfg.modulator.sigma_phi >= 0, "modulator.sigma_phi", "must be >= 0")
    need(cfg.channel.loss_db >= 0, "channel.loss_db", "must be >= 0")
    need(0 <= cfg.snspd.eta <= 1, "snspd.eta", "must be in [0, 1]")
    need(0 <= cfg.snspd.eps_pol <= 1, "snspd.eps_pol", "must be in [0, 1]")
    need(cfg.snspd.dark_hz >= 0, "snspd.dark_hz", "must be >= 0")
    need(cfg.snspd.drift_rate >= 0, "snspd.drift_rate", "must be >= 0")
    need(cfg.smf.drift_rate >= 0, "smf.drift_rate", "must be >= 0")
    r = cfg.run
    need(r.bin_s > 0, "run.bin_s", "must be > 0")
    need(r.duration_s >= r.bin_s, "run.duration_s", "must be >= run.bin_s")
    need(0 <= r.seed < 2**64, "run.seed", "must be an unsigned 64-bit integer")
    need(0 <= r.p_key <= 1, "run.p_key", "must be in [0, 1]")
    need(r.workers >= 1, "run.workers", "must be >= 1")
    need(r.quadrature >= 1, "run.quadrature", "must be >= 1")
    pattern = cfg.pattern
    need(bool(pattern), "run.pattern", "must not be empty")
    if pattern != ["RANDOM"]:
        bad = [p for p in pattern if p not in ("D", "L", "R")]
        need(not bad, "run.pattern", f"symbols {bad} not in the D/L/R alphabet (or use 'random')")


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        out[key.strip()] = value.strip()
    return out


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(item, "override must look like key=value")
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | os.PathLike | None = None, overrides: Mapping[str, object] | None = None,
                seed: int | None = None) -> ExperimentConfig:
    """Defaults, then the config file (or ``$IPOGNAC_CONFIG``), then overrides, then seed."""
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    cfg = ExperimentConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("--config", f"file not found: {p}")
        cfg = ExperimentConfig.from_flat(parse_config_text(p.read_text()), cfg)
    if overrides:
        cfg = ExperimentConfig.from_flat(overrides, cfg)
    if seed is not None:
        cfg = ExperimentConfig.from_flat({"run.seed": seed}, cfg)
    return cfg


def format_value(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in cfg.to_flat().items())
