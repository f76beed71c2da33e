import pytest

from amclab import config as cfgmod


def test_sections_flatten_and_comments(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("# comment\n[train]\nepochs = 5  # inline\n[channel]\nprofile=umi\n")
    cfg = cfgmod.load(f)
    assert cfg["train.epochs"] == "5" and cfg["channel.profile"] == "umi"
    assert cfg["train.lr"] == cfgmod.DEFAULTS["train.lr"]


def test_include_layering(tmp_path):
    (tmp_path / "base.cfg").write_text("[train]\nepochs = 5\nlr = 0.01\n")
    (tmp_path / "run.cfg").write_text("include = base.cfg\n[train]\nepochs = 7\n")
    cfg = cfgmod.load(tmp_path / "run.cfg", {"train.lr": "0.5"})
    assert cfg["train.epochs"] == "7" and cfg["train.lr"] == "0.5"


def test_nested_and_repeated_include_rejected(tmp_path):
    (tmp_path / "c.cfg").write_text("[train]\nepochs = 1\n")
    (tmp_path / "b.cfg").write_text("include = c.cfg\n")
    (tmp_path / "a.cfg").write_text("include = b.cfg\n")
    with pytest.raises(cfgmod.ConfigError, match="may not include"):
        cfgmod.load(tmp_path / "a.cfg")
    (tmp_path / "d.cfg").write_text("include = c.cfg\ninclude = c.cfg\n")
    with pytest.raises(cfgmod.ConfigError, match="only one include"):
        cfgmod.load(tmp_path / "d.cfg")


def test_unknown_keys_and_bad_lines(tmp_path):
    with pytest.raises(cfgmod.ConfigError, match="unknown config keys: train.epoch"):
        cfgmod.load(None, {"train.epoch": "3"})
    f = tmp_path / "bad.cfg"
    f.write_text("[train]\njust words\n")
    with pytest.raises(cfgmod.ConfigError, match="line 2"):
        cfgmod.load(f)


def test_digest_stable_and_sensitive():
    a = cfgmod.load()
    assert cfgmod.digest(a) == cfgmod.digest(dict(reversed(list(a.items()))))
    assert cfgmod.digest(a) != cfgmod.digest(cfgmod.load(None, {"train.seed": "1"}))


def test_typed_getters(monkeypatch):
    cfg = cfgmod.load()
    assert cfgmod.get_range(cfg, "channel.snr_range") == (10.0, 30.0)
    assert cfgmod.get_ints(cfg, "eval.seeds") == [0, 1, 2]
    assert cfgmod.get_floats(cfg, "eval.velocities")[0] == 40.0
    monkeypatch.setenv("AMCLAB_OUT_DIR", "/tmp/x")
    assert cfgmod.env_path("out_dir") == "/tmp/x"
