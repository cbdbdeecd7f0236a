import pytest

from gnss_mlwls.config import ConfigError, config_from_dict, dump_config, load_config


def test_empty_document_is_default():
    cfg = config_from_dict({})
    assert cfg.seed == 0 and cfg.constellations == ["GPS", "BeiDou"]
    assert cfg.features.elevation_mask_deg == 15.0
    assert cfg.sweep.grid() == [float(b) for b in range(1, 201)]
    assert cfg.labeling.enumeration_cap == 16 and cfg.labeling.beam_width == 8


def test_partial_model_override_keeps_defaults():
    cfg = config_from_dict({"model": {"adaboost": {"n_learners": 7}, "per_constellation": {"GPS": {"learning_rate": 1.0}}}})
    assert cfg.model.adaboost["n_learners"] == 7 and cfg.model.adaboost["learning_rate"] == 0.5
    assert cfg.model.params("GPS")["learning_rate"] == 1.0
    assert cfg.model.params("BeiDou")["learning_rate"] == 0.5


@pytest.mark.parametrize("doc,match", [
    ({"sead": 1}, "sead"),
    ({"solver": {"tolerance": 1}}, "solver.tolerance"),
    ({"constellations": ["Galileo"]}, "Galileo"),
    ({"constellations": ["GPS", "GPS"]}, "repeats"),
    ({"model": {"kind": "svm"}}, "model.kind"),
    ({"activation": {"kind": "sigmoid", "b": 0}}, "activation"),
    ({"sweep": {"b_grid": []}}, "grid"),
    ({"sweep": {"mode": "train"}}, "mode"),
    ({"features": {"elevation_mask_deg": 95}}, "mask"),
    ({"features": {"clock_grouping": "mixed"}}, "features"),
    ({"model": {"adaboost": {"depth": 2}}}, "adaboost"),
    ({"threads": 0}, "threads"),
    ({"train": "x"}, "mapping"),
])
def test_invalid_documents(doc, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(doc)


def test_yaml_roundtrip_and_relative_paths(tmp_path):
    (tmp_path / "exp.yaml").write_text("seed: 5\noutput_dir: results\ntrain:\n  canonical: data/a.csv\n")
    cfg = load_config(tmp_path / "exp.yaml")
    assert cfg.out == tmp_path / "results"
    assert cfg.path(cfg.train.canonical) == tmp_path / "data" / "a.csv"
    again = tmp_path / "again.yaml"
    again.write_text(dump_config(cfg))
    assert load_config(again).to_dict() == cfg.to_dict()


def test_unreadable_or_invalid_yaml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("seed: [1,\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(tmp_path / "bad.yaml")
