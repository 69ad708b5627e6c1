import pytest

from ipognac.config import (
    ENV_CONFIG,
    ConfigError,
    ExperimentConfig,
    dump_config,
    format_value,
    load_config,
    parse_config_text,
    parse_overrides,
)


def test_defaults_valid_and_flat_round_trip():
    cfg = ExperimentConfig()
    flat = cfg.to_flat()
    assert flat["run.pattern"] == "L,R,D" and flat["receiver.basis"] == "K"
    assert ExperimentConfig.from_flat({k: format_value(v) for k, v in flat.items()}) == cfg
    assert ExperimentConfig.from_flat(parse_config_text(dump_config(cfg))) == cfg


def test_file_with_comments(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# run\nrun.duration_s = 120  # two bins\n\nreceiver.basis=C\nsmf.haar = false\n")
    cfg = load_config(p)
    assert cfg.run.duration_s == 120.0 and cfg.receiver.basis == "C" and cfg.smf.haar is False


def test_precedence_file_overrides_seed(tmp_path, monkeypatch):
    p = tmp_path / "c.cfg"
    p.write_text("run.seed = 3\nsnspd.dark_hz = 10\n")
    monkeypatch.setenv(ENV_CONFIG, str(p))
    cfg = load_config(None, {"snspd.dark_hz": "20", "seed": "5"})
    assert cfg.snspd.dark_hz == 20.0 and cfg.run.seed == 5
    assert load_config(None, None, seed=9).run.seed == 9
    assert load_config(None).snspd.dark_hz == 10.0


def test_aliases():
    cfg = ExperimentConfig.from_flat({"pattern": "d, l"})
    assert cfg.pattern == ["D", "L"]


@pytest.mark.parametrize("flat,key", [
    ({"run.bogus": "1"}, "run.bogus"),
    ({"nosection": "1"}, "nosection"),
    ({"snspd.eta": "high"}, "snspd.eta"),
    ({"snspd.eta": "1.5"}, "snspd.eta"),
    ({"run.bin_s": "0"}, "run.bin_s"),
    ({"run.duration_s": "10"}, "run.duration_s"),
    ({"encoder.kind": "faraday"}, "encoder.kind"),
    ({"run.pattern": "L,A"}, "run.pattern"),
    ({"run.seed": "-1"}, "run.seed"),
    ({"smf.haar": "maybe"}, "smf.haar"),
    ({"source.rate_hz": "1e10"}, "source.fwhm_s"),
    ({"pbs.extinction": "1"}, "pbs.extinction"),
])
def test_errors_name_the_key(flat, key):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_flat(flat)
    assert exc.value.key == key
    assert key in str(exc.value)


def test_typed_values_from_python():
    cfg = ExperimentConfig.from_flat({"run.workers": 2, "smf.haar": False, "snspd.dark_hz": 5})
    assert cfg.run.workers == 2 and cfg.smf.haar is False and cfg.snspd.dark_hz == 5.0
    with pytest.raises(ConfigError):
        ExperimentConfig.from_flat({"smf.haar": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_flat({"run.workers": 1.5})


def test_parse_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError):
        parse_overrides(["novalue"])
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert float(format_value(0.1)) == 0.1
    assert format_value(True) == "true" and format_value(7) == "7"


def test_with_overrides():
    cfg = ExperimentConfig().with_overrides(receiver__basis="C", run__seed=4)
    assert cfg.receiver.basis == "C" and cfg.run.seed == 4
