import math

import pytest

from activemocap.scenario import ConfigError, Scenario, load_scenario, scenario_from_dict, scenario_to_dict


def test_defaults():
    s = Scenario()
    assert s.k == 3 and s.d_des == 8.0 and s.h_des == 8.0
    assert s.r_des == pytest.approx(math.hypot(8, 8))
    assert s.mpc.steps == 16 and s.world.dt == 0.1


def test_partial_override_keeps_other_defaults():
    s = scenario_from_dict({"k": 5, "fields": {"static": {"d_max": 6.0}}, "channel": {"loss": 0.25}})
    assert s.k == 5
    assert s.fields.static.d_max == 6.0
    assert s.fields.static.d_min == Scenario().fields.static.d_min
    assert s.fields.dynamic == Scenario().fields.dynamic
    assert s.channel.loss == 0.25 and s.channel.delay == Scenario().channel.delay


def test_roundtrip():
    s = scenario_from_dict({"k": 4, "world": {"obstacles": [{"center": [1, 2, 0], "radius": 0.5}]},
                            "mpc": {"w_vel": [0.02, 0.02, 0.02]}})
    assert scenario_from_dict(scenario_to_dict(s)) == s
    assert scenario_from_dict(scenario_to_dict(Scenario())) == Scenario()


@pytest.mark.parametrize("data, path", [
    ({"k": "three"}, "scenario.k"),
    ({"mpc": {"horizon": "x"}}, "scenario.mpc.horizon"),
    ({"fields": {"static": {"bogus": 1}}}, "scenario.fields.static.bogus"),
    ({"world": {"obstacles": [{"radius": 1.0}]}}, "scenario.world.obstacles[0]"),
    ({"world": {"obstacles": {"count": 3}}}, "scenario.world.obstacles"),
    ({"noiseless": 1}, "scenario.noiseless"),
    ({"channel": {"loss": 2.0}}, "scenario.channel"),
    ({"k": 0}, "scenario.k"),
    ({"version": 7}, "version"),
])
def test_errors_carry_field_path(data, path):
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(data)
    assert str(exc.value).startswith(path)


def test_yaml_load(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("version: 1\nk: 5\nperson:\n  mode: random_walk\nobstacles:\n  count: 8\n")
    s = load_scenario(p)
    assert s.k == 5 and s.person.mode == "random_walk" and s.obstacles.count == 8
    empty = tmp_path / "e.yaml"
    empty.write_text("")
    assert load_scenario(empty) == Scenario()


def test_with_seed_sets_world_and_channel():
    s = Scenario().with_seed(17)
    assert s.seed == 17 and s.channel.seed == 17
