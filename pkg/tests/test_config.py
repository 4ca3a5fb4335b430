import re
from importlib import resources

import pytest
import yaml

from dreamrace.config import RunConfig, config_from_dict, dump_config, load_config
from dreamrace.errors import ConfigurationError


def test_bundled_default_matches_code_defaults():
    assert load_config("default").to_dict() == RunConfig().to_dict()


def test_every_key_documented_with_provenance():
    text = resources.files("dreamrace").joinpath("configs/default.yaml").read_text()
    documented = {}
    section = None
    for line in text.splitlines():
        if re.match(r"^[a-z_]+:\s*$", line):
            section = line.rstrip(":").strip()
            documented[section] = {}
        elif m := re.match(r"^  ([a-z_A-Z0-9]+):", line):
            assert re.search(r"#\s*\[(published|dreamer|choice)\]", line), line
            documented[section][m.group(1)] = True
    for name, values in RunConfig().to_dict().items():
        assert set(values) == set(documented[name]), name


def test_round_trip_through_yaml():
    cfg = RunConfig().with_overrides(run={"env_steps": 123, "seeds": [4, 5]}, ppo={"frame_stack": 3})
    again = config_from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg and again.run.seeds == (4, 5)


def test_derived_fields_follow_sources():
    cfg = RunConfig().with_overrides(camera={"height": 8, "width": 12}, run={"track": "circle"})
    assert cfg.obs_dim == 8 * 12 * 3 and cfg.env.track == "circle"


@pytest.mark.parametrize("data", [
    {"nonsense": {}},
    {"run": {"no_such_key": 1}},
    {"world_model": {"obs_dim": 5}},
    {"run": {"algorithm": "sac"}},
    {"run": {"env_steps": -1}},
    {"ppo": {"frame_stack": 2}},
    {"run": "not a mapping"},
])
def test_invalid_config_rejected(data):
    with pytest.raises(ConfigurationError):
        config_from_dict(data)


def test_load_from_file_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("run:\n  env_steps: 7\nreward:\n  b2: 0.02\nworld_model:\n  lr: 1e-4\n")
    cfg = load_config(path, {"run": {"log_every": 3}})
    assert (cfg.run.env_steps, cfg.reward.b2, cfg.run.log_every) == (7, 0.02, 3)
    assert cfg.world_model.lr == 1e-4
    assert cfg.world_model.hidden == RunConfig().world_model.hidden


def test_bad_yaml_and_missing_source(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("run: [unclosed\n")
    with pytest.raises(ConfigurationError):
        load_config(bad)
    with pytest.raises(ConfigurationError):
        load_config("no_such_config_anywhere")
    top = tmp_path / "list.yaml"
    top.write_text("- 1\n")
    with pytest.raises(ConfigurationError):
        load_config(top)


def test_output_root_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv("DREAMRACE_OUTPUT_ROOT", raising=False)
    assert str(RunConfig().output_root()) == "runs"
    monkeypatch.setenv("DREAMRACE_OUTPUT_ROOT", str(tmp_path / "env"))
    assert RunConfig().output_root() == tmp_path / "env"
    cfg = RunConfig().with_overrides(run={"output_dir": str(tmp_path / "cfg")})
    assert cfg.run_dir(3) == tmp_path / "cfg" / "run_dreamer_seed3"
