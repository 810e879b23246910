import pytest

from qnslab.config import ConfigError, default_config, dump_config, load_config, parse_config


def test_defaults_validate():
    cfg = default_config()
    assert cfg.torus.points == 32 and cfg.frac.beta == 0.8
    assert cfg.formats == ["json"]


def test_round_trip_through_text():
    cfg = parse_config("[grid]\nN = 64\n[family]\ndivergence_free = yes\n[output]\nformats = json, csv\n")
    again = parse_config(dump_config(cfg))
    assert again.as_dict() == cfg.as_dict()
    assert again.grid["N"] == 64 and again.family["divergence_free"] is True
    assert again.formats == ["json", "csv"]


@pytest.mark.parametrize(
    "text",
    [
        "[grid]\nfoo = 1\n",
        "[nonsense]\nx = 1\n",
        "[grid]\nN = 12\n",
        "[grid]\nN = many\n",
        "[params]\nalpha = 0.9\nbeta = 0.8\n",
        "[family]\ndivergence_free = maybe\n",
        "[output]\nformats = pdf\n",
        "[suite]\ntolerances = 0\n",
        "not a config",
    ],
    ids=["unknown_key", "unknown_section", "bad_grid_size", "unparsable_int", "alpha_above_beta", "bad_bool", "bad_format", "zero_tolerance", "no_section"],
)
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_keys_are_case_sensitive():
    cfg = parse_config("[grid]\nn = 3\nN = 16\n")
    assert cfg.grid["n"] == 3 and cfg.grid["N"] == 16


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
