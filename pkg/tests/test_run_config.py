"""
Tests for the run configuration and environment settings
"""
import pytest

import config.settings as settings
from config.run_config import apply_overrides, parse_config
from config.settings import load_defaults
from services.errors import ConfigError, ConfigParseError, ConfigValidationError
from services.minimize import SolveOptions
from services.model import ModelParams


class TestDefaults:
    """Test default loading"""

    def test_shipped_file_holds_every_section(self):
        """Test config.yaml is the mapping every run key is merged onto"""
        defaults = load_defaults()
        assert set(defaults) == {"grid", "model", "solve", "output", "verify", "kernel_info"}
        assert defaults["grid"] == {"L": 8.0, "N": 32}
        assert defaults["solve"]["initializer"] is None

    def test_missing_file(self, tmp_path):
        """Test a missing defaults file falls back to the shipped values"""
        assert load_defaults(str(tmp_path / "missing.yaml")) == load_defaults()

    def test_broken_file(self, tmp_path):
        """Test an unparsable defaults file falls back to the shipped values"""
        path = tmp_path / "broken.yaml"
        path.write_text("grid: {L: 8\n")
        assert load_defaults(str(path)) == load_defaults()

    def test_unusable_shipped_file(self, tmp_path, monkeypatch):
        """Test losing the shipped defaults is a configuration error"""
        path = tmp_path / "config.yaml"
        path.write_text("- not a mapping\n")
        monkeypatch.setattr(settings, "DEFAULTS_PATH", str(path))
        with pytest.raises(ConfigError, match="shipped defaults"):
            settings.load_defaults(str(path))

    def test_code_defaults_agree(self):
        """Test the solver option defaults match the shipped file"""
        config = parse_config("")
        assert config.solve == SolveOptions()
        assert config.params == ModelParams()

    def test_empty_document(self):
        """Test an empty document yields the reference configuration"""
        config = parse_config("")
        assert config.grid.half_length == 8.0
        assert config.grid.points_per_axis == 32
        assert config.params == ModelParams()
        assert config.solve.max_iters == 5000
        assert config.solve.initializer is None
        assert config.verify.trials == 100
        assert config.output_directory is None

    def test_partial_section_merged(self):
        """Test a partial section keeps its other defaults"""
        config = parse_config("model:\n  q: 2.5\n  potential:\n    omega: 0.0\n")
        assert config.model.q == 2.5
        assert config.model.a == 1.0
        assert config.model.omega == 0.0
        assert config.model.v0 == 1.0

    def test_logpower_drops_exponent(self):
        """Test the logpower kind ignores p"""
        config = parse_config("model:\n  nonlinearity: logpower\n  p: 9\n")
        assert config.model.p is None
        assert config.params.nonlinearity.kind == "logpower"


class TestValidation:
    """Test rejected documents"""

    @pytest.mark.parametrize("text,key", [
        ("model:\n  p: 6.5\n", "model.p"),
        ("model:\n  p: 4\n", "model.p"),
        ("model:\n  q: 0\n", "model.q"),
        ("model:\n  a: -1\n", "model.a"),
        ("model:\n  nonlinearity: cubic\n", "model.nonlinearity"),
        ("model:\n  potential:\n    v0: 0\n", "model.potential.v0"),
        ("grid:\n  N: 33\n", "grid.N"),
        ("grid:\n  N: 512\n", "grid.N"),
        ("grid:\n  L: .inf\n", "grid.L"),
        ("solve:\n  max_iters: true\n", "solve.max_iters"),
        ("solve:\n  shrink: 1.0\n", "solve.shrink"),
        ("solve:\n  initializer: file\n", "solve.init_path"),
        ("solve:\n  seed: -3\n", "solve.seed"),
        ("verify:\n  trials: 0\n", "verify.trials"),
        ("kernel_info:\n  factor: 1\n", "kernel_info.factor"),
        ("grid:\n  M: 3\n", "grid.M"),
        ("plot: true\n", "plot"),
        ("grid: 5\n", "grid"),
    ])
    def test_invalid_values(self, text, key):
        """Test each violation names its key"""
        with pytest.raises(ConfigValidationError) as exc_info:
            parse_config(text)
        assert exc_info.value.key == key
        assert exc_info.value.to_dict()["key"] == key

    def test_local_limit_needs_flag(self):
        """Test q = 0 is accepted once the local limit is allowed"""
        config = parse_config("model:\n  q: 0\n", allow_local=True)
        assert config.model.q == 0.0
        assert config.allow_local

    def test_yaml_syntax_error(self):
        """Test malformed YAML reports a line"""
        with pytest.raises(ConfigParseError) as exc_info:
            parse_config("grid:\n  L: 8\nmodel: {a: 1\n")
        assert isinstance(exc_info.value.line, int)
        assert exc_info.value.to_dict()["error"] == "config_parse_error"

    def test_non_mapping_document(self):
        """Test a list document is refused"""
        with pytest.raises(ConfigParseError) as exc_info:
            parse_config("- 1\n- 2\n")
        assert exc_info.value.line == 1


class TestOverrides:
    """Test command-line overrides"""

    def test_overrides_applied(self):
        """Test seed, N, max_iters and output directory overrides"""
        base = parse_config("")
        config = apply_overrides(base, seed=9, grid_n=16, max_iters=10, out="runs/x")
        assert config.solve.seed == 9
        assert config.grid.points_per_axis == 16
        assert config.solve.max_iters == 10
        assert config.output_directory == "runs/x"
        assert base.solve.seed == 0
        assert base.grid.points_per_axis == 32

    def test_overrides_validated(self):
        """Test an odd grid override is rejected"""
        with pytest.raises(ConfigValidationError, match="grid.N"):
            apply_overrides(parse_config(""), grid_n=15)

    def test_to_dict_is_a_copy(self):
        """Test the serialized configuration cannot alter the run"""
        config = parse_config("")
        data = config.to_dict()
        data["grid"]["N"] = 64
        assert config.raw["grid"]["N"] == 32


class TestThreads:
    """Test the SBP_THREADS environment variable"""

    @pytest.mark.parametrize("raw,expected", [("4", 4), ("0", 1), ("-2", 1), ("many", 1)])
    def test_parsing(self, monkeypatch, raw, expected):
        """Test worker counts are clamped to at least one"""
        monkeypatch.setenv("SBP_THREADS", raw)
        assert settings._threads_from_env() == expected

    def test_unset(self, monkeypatch):
        """Test the default is a single worker"""
        monkeypatch.delenv("SBP_THREADS", raising=False)
        assert settings._threads_from_env() == 1
