"""Tests for defaults, config files and flag overrides."""

from unittest.mock import patch

import pytest

from src.config.config import Config
from src.config.schema import SCHEMA, parse_config, read_config_file
from src.errors import ConfigError, UsageError


@pytest.fixture
def config_file(tmp_path):
    def write(text):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        return path

    return write


class TestDefaults:
    """Built-in defaults."""

    def test_every_key_has_a_default(self):
        assert set(Config.get_defaults()) == set(SCHEMA)

    def test_defaults_pass_validation(self):
        settings = parse_config()
        assert settings["window_len"] == 48
        assert settings["vote_count"] == 16
        assert settings["kernel_size"] == 5
        assert settings["lr"] == pytest.approx(1e-4)
        assert settings["lambda_corr"] == settings["lambda_f"] == pytest.approx(0.5)
        assert settings.source is None
        assert settings.overridden == ()

    def test_runtime_output_dir_from_environment(self):
        with patch.dict("os.environ", {"CATS_OUTPUT_DIR": "/tmp/cats-out"}):
            assert Config.get_runtime_settings()["output_dir"] == "/tmp/cats-out"


class TestConfigFile:
    """``key = value`` files."""

    def test_comments_and_blank_lines(self, config_file):
        path = config_file("# run\n\nwindow_len = 24   # shorter\nadapter = linear\n")
        assert read_config_file(path) == {"window_len": "24", "adapter": "linear"}

    def test_values_are_typed(self, config_file):
        path = config_file(
            "window_len = 24\nnormalize_ranking = yes\ngat_widths = 4, 8\nmissing_label_penalty = none\n"
        )
        settings = parse_config(path)
        assert settings["window_len"] == 24
        assert settings["normalize_ranking"] is True
        assert settings["gat_widths"] == [4, 8]
        assert settings["missing_label_penalty"] is None
        assert settings.source == str(path)
        assert set(settings.overridden) == {"window_len", "normalize_ranking", "gat_widths", "missing_label_penalty"}

    def test_unknown_key(self, config_file):
        with pytest.raises(ConfigError, match="unknown-key"):
            parse_config(config_file("learning_rate = 0.1\n"))

    def test_duplicate_key(self, config_file):
        with pytest.raises(ConfigError, match="duplicate-key"):
            parse_config(config_file("seed = 1\nseed = 2\n"))

    def test_line_without_equals(self, config_file):
        with pytest.raises(ConfigError, match="type-error"):
            parse_config(config_file("window_len 24\n"))

    @pytest.mark.parametrize(
        "line",
        ["window_len = abc", "window_len = 0", "kernel_size = 4", "adapter = lora", "ar_coef = 1.0", "lr = 0"],
    )
    def test_invalid_values(self, config_file, line):
        with pytest.raises(ConfigError, match="type-error"):
            parse_config(config_file(line + "\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_config(tmp_path / "absent.cfg")

    def test_config_error_is_usage_error(self):
        assert issubclass(ConfigError, UsageError)
        assert issubclass(ConfigError, ValueError)


class TestOverrides:
    """Flag values layered over the file."""

    def test_flags_win_over_file(self, config_file):
        settings = parse_config(config_file("window_len = 24\nstride = 2\n"), {"window_len": "12", "lr": None})
        assert settings["window_len"] == 12
        assert settings["stride"] == 2
        assert settings["lr"] == pytest.approx(1e-4)

    def test_typed_overrides(self):
        assert parse_config(None, {"theta": 1, "n_seeds": 3.0})["n_seeds"] == 3

    def test_fractional_integer(self):
        with pytest.raises(ConfigError):
            parse_config(None, {"n_seeds": 2.5})

    def test_negative_loss_weight(self):
        with pytest.raises(ConfigError):
            parse_config(None, {"lambda_corr": "-1"})

    def test_window_shorter_than_kernel(self):
        with pytest.raises(ConfigError, match="kernel_size"):
            parse_config(None, {"window_len": "3", "kernel_size": "5"})

    def test_heads_must_divide_width(self):
        with pytest.raises(ConfigError, match="n_heads"):
            parse_config(None, {"d_model": "10", "n_heads": "4"})

    def test_with_overrides_validates(self):
        settings = parse_config()
        updated = settings.with_overrides(adapter="linear", lambda_corr=0.0)
        assert updated["adapter"] == "linear"
        assert settings["adapter"] == "cats"
        assert "lambda_corr" in updated.overridden
        with pytest.raises(ConfigError):
            settings.with_overrides(window_len=2)

    def test_unknown_lookup(self):
        with pytest.raises(ConfigError):
            parse_config()["learning_rate"]


class TestEcho:
    """Echo and hash of the effective configuration."""

    def test_echo_excludes_workers(self):
        echo = parse_config(None, {"workers": 3}).echo()
        assert "workers" not in echo
        assert list(echo) == sorted(echo)

    def test_hash_ignores_seed_and_workers(self):
        base = parse_config().config_hash()
        assert len(base) == 12
        assert parse_config(None, {"seed": 7}).config_hash() == base
        assert parse_config(None, {"workers": 4}).config_hash() == base

    def test_hash_changes_with_settings(self):
        assert parse_config(None, {"lr": 0.01}).config_hash() != parse_config().config_hash()
