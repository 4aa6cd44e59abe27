import json
import os

import pytest
from pydantic import ValidationError

from app import config as config_module
from app.config import apply_overrides, load_config
from app.errors import ConfigError, GeometryError
from app.models import (
    IrisGeometry,
    ManifestEntry,
    PipelineConfig,
    Scenario,
    TikhonovParams,
    default_psf_size,
)


class TestIrisGeometry:
    def test_aliases_and_defaults(self):
        g = IrisGeometry(cx=120, cy=100, r_pupil=30, r_iris=90)
        assert (g.center_x, g.center_y, g.pupil_radius, g.iris_radius) == (120, 100, 30, 90)
        assert g.span_deg == (180.0, 360.0)
        assert g.span_width == 180.0
        assert g.estimated is False

    @pytest.mark.parametrize("r_pupil, r_iris", [(0, 50), (50, 50), (60, 50), (-1, 10)])
    def test_degenerate_radii(self, r_pupil, r_iris):
        with pytest.raises(GeometryError):
            IrisGeometry(cx=0, cy=0, r_pupil=r_pupil, r_iris=r_iris).check()

    def test_bad_span(self):
        with pytest.raises(GeometryError):
            IrisGeometry(cx=0, cy=0, r_pupil=5, r_iris=10, span_deg=(200, 100)).check()
        with pytest.raises(GeometryError):
            IrisGeometry(cx=0, cy=0, r_pupil=5, r_iris=10, span_deg=(0, 400)).check()


class TestManifestEntry:
    def test_eye_and_session_normalized(self):
        e = ManifestEntry(subject_id="007", eye="left", session="vl", path="a.png")
        assert e.eye == "L"
        assert e.session == "VL"
        assert e.class_id == "007_L"

    def test_left_and_right_are_different_classes(self):
        left = ManifestEntry(subject_id="007", eye="L", session="VL", path="a.png")
        right = ManifestEntry(subject_id="007", eye="R", session="VL", path="b.png")
        assert left.class_id != right.class_id

    def test_invalid_eye(self):
        with pytest.raises(ValidationError):
            ManifestEntry(subject_id="1", eye="X", session="VL", path="a.png")


class TestTikhonovParams:
    def test_defaults(self):
        p = TikhonovParams()
        assert p.lam == 0.8
        assert p.psf_variance == 25.0
        assert p.kernel_size == 31

    def test_lambda_alias(self):
        assert TikhonovParams.model_validate({"lambda": 0.3}).lam == 0.3

    def test_even_size_rejected(self):
        with pytest.raises(ValidationError):
            TikhonovParams(psf_size=4)

    @pytest.mark.parametrize("variance", [0.01, 1.0, 2.0, 25.0, 100.0])
    def test_default_size_is_odd(self, variance):
        size = default_psf_size(variance)
        assert size % 2 == 1
        assert size >= 3


class TestPipelineConfig:
    def test_defaults(self):
        c = PipelineConfig()
        assert c.strip_shape == (150, 300)
        assert (c.n_samples, c.bits, c.min_area) == (100, 8, 30)
        assert c.align == "off"
        assert c.epsilon_floor is True

    def test_presets_and_overrides(self):
        assert PipelineConfig(unwrap_preset="capture").strip_shape == (256, 512)
        assert PipelineConfig(unwrap_preset="arc1deg").strip_shape == (150, 180)
        assert PipelineConfig(unwrap_cols=200).strip_shape == (150, 200)

    def test_shift_search_alias(self):
        assert PipelineConfig(align="shift-search").align == "shift"

    @pytest.mark.parametrize("field, value", [("bits", 0), ("bits", 17), ("n_samples", 4), ("threads", 0)])
    def test_out_of_range(self, field, value):
        with pytest.raises(ValidationError):
            PipelineConfig(**{field: value})


class TestScenario:
    def test_k_must_be_below_n(self):
        assert Scenario(k_train=4, n_per_class=5).repetitions == 20
        with pytest.raises(ValidationError):
            Scenario(k_train=5, n_per_class=5)


class TestLoadConfig:
    def _write(self, path, payload):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)
        return str(path)

    def test_reads_file(self, tmp_path):
        path = self._write(tmp_path / "cfg.json", {"bits": 6, "tikhonov": {"lambda": 0.5}})
        cfg = load_config(path)
        assert cfg.bits == 6
        assert cfg.tikhonov.lam == 0.5

    def test_cached_until_modified(self, tmp_path):
        path = self._write(tmp_path / "cfg.json", {"bits": 6})
        first = load_config(path)
        assert load_config(path) is first

        self._write(tmp_path / "cfg.json", {"bits": 4})
        stamp = os.path.getmtime(path) + 5
        os.utime(path, (stamp, stamp))
        assert load_config(path).bits == 4

    def test_missing_explicit_path(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.json"))

    def test_missing_default_path_uses_defaults(self, tmp_path, monkeypatch):
        monkeypatch.setattr(config_module, "DEFAULT_CONFIG_PATH", str(tmp_path / "absent.json"))
        assert load_config() == PipelineConfig(threads=config_module.DEFAULT_THREADS)

    def test_unparsable(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_shipped_config_matches_defaults(self):
        here = os.path.dirname(os.path.abspath(__file__))
        cfg = load_config(os.path.join(here, os.pardir, "configs", "pipeline.json"))
        defaults = PipelineConfig(threads=cfg.threads)
        assert cfg == defaults


class TestApplyOverrides:
    def test_none_values_ignored(self):
        cfg = apply_overrides(PipelineConfig(), {"bits": None, "align": None})
        assert cfg == PipelineConfig()

    def test_tikhonov_keys_nested(self):
        cfg = apply_overrides(PipelineConfig(), {"lam": 0.2, "psf_variance": 9.0, "bits": 4})
        assert cfg.tikhonov.lam == 0.2
        assert cfg.tikhonov.psf_variance == 9.0
        assert cfg.bits == 4

    def test_invalid_override(self):
        with pytest.raises(ValidationError):
            apply_overrides(PipelineConfig(), {"bits": 99})
