"""Config parsing and cross-field validation tests."""

import pytest

from fragvqa.config import load_pipeline_config, parse_toml_subset
from fragvqa.errors import ConfigError


class TestTomlSubset:
    def test_sections_and_scalars(self):
        doc = parse_toml_subset(
            """
            # pipeline settings
            [frag]
            patch_size = 16
            target_size = 224
            [backend]
            kind = "toy"
            mean = [0.45, 0.45, 0.45]
            flag = true
            ratio = 0.5
            """
        )
        assert doc["frag"]["patch_size"] == 16
        assert doc["backend"]["kind"] == "toy"
        assert doc["backend"]["mean"] == [0.45, 0.45, 0.45]
        assert doc["backend"]["flag"] is True
        assert doc["backend"]["ratio"] == 0.5

    def test_rejects_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_toml_subset("[a]\njust a line\n")

    def test_rejects_bad_value(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_toml_subset("k = @nope\n")

    def test_unterminated_string(self):
        with pytest.raises(ConfigError, match="unterminated"):
            parse_toml_subset('k = "oops\n')


class TestPipelineConfig:
    def test_defaults(self):
        cfg = load_pipeline_config(None)
        assert cfg.frag.patch_size == 16
        assert cfg.frag.target_size == 224
        assert cfg.backend.input_size == 224
        assert cfg.backend.fused_dim == 9984

    def test_file_plus_overrides(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(
            "[frag]\npatch_size = 8\ntarget_size = 64\n"
            "[backend]\nkind = \"toy\"\nspatial_dim = 16\n"
            "[train]\nepochs = 5\nlr0 = 0.05\n"
        )
        cfg = load_pipeline_config(str(path), patch_size=4)
        assert cfg.frag.patch_size == 4  # CLI override wins
        assert cfg.frag.target_size == 64
        assert cfg.backend.spatial_dim == 16
        assert cfg.backend.input_size == 64  # follows target size
        assert cfg.train.epochs == 5

    def test_cross_field_violation_rejected(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("[backend]\nkind = \"toy\"\ninput_size = 128\n")
        with pytest.raises(ConfigError, match="input_size"):
            load_pipeline_config(str(path))

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("[frag]\npatchsize = 16\n")
        with pytest.raises(ConfigError, match="unknown"):
            load_pipeline_config(str(path))

    def test_neural_requires_models_dir(self):
        with pytest.raises(ConfigError, match="models-dir"):
            load_pipeline_config(None, backend_kind="neural")

    def test_models_dir_env_fallback(self, tmp_path, monkeypatch):
        import json
        manifest = {"motion_model": "m.pt", "spatial_model": "s.pt",
                    "slow_dim": 4, "fast_dim": 2, "spatial_dim": 3,
                    "clip_len": 8, "slow_subsample": 4,
                    "mean": [0, 0, 0], "std": [1, 1, 1]}
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        monkeypatch.setenv("FRAGVQA_MODELS_DIR", str(tmp_path))
        cfg = load_pipeline_config(None, backend_kind="neural")
        assert cfg.backend.spatial_dim == 3
        assert cfg.models_dir == str(tmp_path)

    def test_sampling_alias(self):
        cfg = load_pipeline_config(None, sampling="every-other")
        assert cfg.chunk.sampling == "every_other_frame"

    def test_missing_config_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            load_pipeline_config("/nonexistent/cfg.toml")
