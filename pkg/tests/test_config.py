import pytest

from shapereader.config import ConfigError, PipelineConfig, load_config


def test_defaults_are_valid():
    cfg = load_config(None)
    cfg.validate()
    assert cfg == PipelineConfig()


def test_load_from_file(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text(
        "# comment line\n"
        "theta_backtrace = 0.75\n"
        "scales = 1, 2, 3  # inline comment\n"
        "edge_threshold = auto\n"
        "bp_iterations = 6\n"
    )
    cfg = load_config(str(p))
    assert cfg.theta_backtrace == 0.75
    assert cfg.scales == (1, 2, 3)
    assert cfg.edge_threshold is None
    assert cfg.bp_iterations == 6


def test_env_var_path(tmp_path, monkeypatch):
    p = tmp_path / "cfg.txt"
    p.write_text("gamma = 2.5\n")
    monkeypatch.setenv("SHAPEREADER_CONFIG", str(p))
    assert load_config(None).gamma == 2.5


def test_explicit_path_beats_env(tmp_path, monkeypatch):
    a = tmp_path / "a.txt"
    a.write_text("gamma = 2.0\n")
    b = tmp_path / "b.txt"
    b.write_text("gamma = 4.0\n")
    monkeypatch.setenv("SHAPEREADER_CONFIG", str(a))
    assert load_config(str(b)).gamma == 4.0


def test_overrides_beat_file(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("k_best = 3\n")
    cfg = load_config(str(p), overrides={"k_best": 9})
    assert cfg.k_best == 9


def test_none_overrides_skipped():
    assert load_config(None, overrides={"k_best": None}).k_best == PipelineConfig().k_best


@pytest.mark.parametrize(
    "text",
    [
        "unknown_key = 1\n",
        "k_best\n",
        "k_best = many\n",
        "scales = 1 two\n",
        "theta_backtrace = 1.5\n",
        "bp_damping = 1.0\n",
        "gamma = 0.5\n",
        "scales = \n",
    ],
)
def test_bad_configs_rejected(tmp_path, text):
    p = tmp_path / "cfg.txt"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_missing_file_rejected():
    with pytest.raises(ConfigError):
        load_config("/no/such/file")


def test_unknown_override_rejected():
    with pytest.raises(ConfigError):
        load_config(None, overrides={"nope": 1})
