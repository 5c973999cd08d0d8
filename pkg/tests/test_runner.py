import numpy as np
import pytest

from activemocap import presets
from activemocap.cli import main
from activemocap.metrics import read_csv
from activemocap.mpc import desired_surface_point
from activemocap.runner import run_scenario
from activemocap.scenario import ConfigError, scenario_from_dict


def _scenario(**kw):
    return scenario_from_dict(kw)


def test_single_mav_noiseless_converges_to_surface_point():
    s = _scenario(k=1, noiseless=True, world={"duration": 40.0})
    m = run_scenario(s)
    final = np.array([m.column(c)[-1] for c in ("x_0", "y_0", "z_0")])
    goal = desired_surface_point(final, np.zeros(3), s.d_des, s.h_des)
    assert np.linalg.norm(final - goal) < 0.5


def test_lossless_replicas_agree_per_tick():
    s = _scenario(k=3, channel={"loss": 0.0, "delay": 0.0, "jitter": 0.0}, world={"duration": 20.0},
                  person={"mode": "random_walk"})
    m = run_scenario(s)
    assert m.summary["max_replica_spread"] < 1e-9
    assert m.summary["max_replica_trace_spread"] < 1e-9


def test_more_mavs_shrink_fused_trace():
    base = dict(world={"duration": 30.0}, person={"mode": "random_walk"})
    for seed in range(2):
        one = run_scenario(_scenario(k=1, **base).with_seed(seed)).summary["mean_fused_trace"]
        three = run_scenario(_scenario(k=3, **base).with_seed(seed)).summary["mean_fused_trace"]
        assert three < one


def test_walking_person_stays_in_frame():
    m = run_scenario(_scenario(k=3, person={"mode": "random_walk"}, world={"duration": 60.0}))
    assert m.summary["in_frame_fraction"] >= 0.9


def test_same_seed_same_csv(tmp_path):
    s = _scenario(k=3, world={"duration": 10.0}, person={"mode": "random_walk"}, obstacles={"count": 4},
                  channel={"loss": 0.3}).with_seed(11)
    a, _ = run_scenario(s).write(tmp_path / "a")
    b, _ = run_scenario(s).write(tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    c, _ = run_scenario(s.with_seed(12)).write(tmp_path / "c")
    assert a.read_bytes() != c.read_bytes()


def test_mismatched_dt_rejected():
    with pytest.raises(ConfigError):
        run_scenario(_scenario(world={"dt": 0.05}))


def test_preset_formation_matches_direct_run(tmp_path):
    base = _scenario(k=3, world={"duration": 8.0})
    rows = presets.preset_formation(base, trials=1, seed=5, out=tmp_path)
    assert [r["person"] for r in rows] == ["stationary", "walking"]
    direct, _ = run_scenario(presets.stationary(base).with_seed(5)).write(tmp_path / "direct")
    via = tmp_path / "formation" / "person_stationary" / "seed_5" / "metrics.csv"
    assert via.read_bytes() == direct.read_bytes()
    assert (tmp_path / "formation" / "table.csv").exists()


def test_parallel_equals_serial():
    ss = [_scenario(k=2, world={"duration": 3.0}).with_seed(i) for i in range(2)]
    serial = presets.run_many(ss, 1)
    par = presets.run_many(ss, 2)
    assert [m.rows for m in serial] == [m.rows for m in par]


def test_cli_run_and_preset(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("k: 2\nperson:\n  mode: random_walk\n")
    assert main(["run", "--config", str(cfg), "--duration", "3", "--seed", "4", "--out", str(tmp_path / "r")]) == 0
    cols, rows = read_csv(tmp_path / "r" / "metrics.csv")
    assert len(rows) == 31 and "x_1" in cols
    assert (tmp_path / "r" / "summary.json").exists()
    assert main(["obstacles", "--counts", "0", "2", "--k", "2", "--trials", "1", "--duration", "2",
                 "--out", str(tmp_path / "o")]) == 0
    assert "mean_error" in capsys.readouterr().out
    assert (tmp_path / "o" / "obstacles" / "table.csv").exists()
    bad = tmp_path / "bad.yaml"
    bad.write_text("k: many\n")
    assert main(["run", "--config", str(bad)]) == 2
