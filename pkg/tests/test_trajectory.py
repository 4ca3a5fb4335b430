import numpy as np
import pytest

from dreamrace.agents import RandomAgent
from dreamrace.config import RunConfig
from dreamrace.env.env import EnvState
from dreamrace.env.track import load_track
from dreamrace.errors import TrajectoryParseError
from dreamrace.evaluate import evaluate_agent
from dreamrace.quad import QuadState, quat_from_euler
from dreamrace.trajectory import (
    COLUMNS,
    TrajectoryRecorder,
    load_trajectory,
    parse_trajectory,
    replay_rewards,
)


def scripted(n=5, track="single_gate"):
    rec = TrajectoryRecorder(load_track(track), 0.02, {"note": "hand made"})
    rng = np.random.default_rng(0)

    def state(k):
        q = quat_from_euler(0.1 * k, -0.05 * k, 0.3)
        return EnvState(quad=QuadState(rng.normal(size=3), q, rng.normal(size=3)), step_count=k, target_index=0)

    rec.start(state(0))
    for k in range(1, n):
        rec.add(state(k), rng.uniform(-1, 1, 4), rng.normal(size=3), float(rng.normal()))
    return rec


def test_text_round_trip_is_exact():
    rec = scripted()
    traj = parse_trajectory(rec.to_text(extra=1))
    assert len(traj) == 5 and traj.meta["note"] == "hand made" and traj.meta["extra"] == 1
    for k, row in enumerate(rec.rows):
        assert traj.t[k] == row[1]
        assert traj.p[k].tolist() == list(row[2:5])
        assert traj.q[k].tolist() == list(row[5:9])
        assert traj.action[k].tolist() == list(row[12:16])
        assert traj.reward[k] == row[19]
    assert traj.track == load_track("single_gate")
    assert traj.logged_return == sum(r[19] for r in rec.rows[1:])


def test_save_and_load(tmp_path):
    path = scripted().save(tmp_path / "sub" / "t.csv")
    assert len(load_trajectory(path)) == 5


@pytest.mark.parametrize("mutate, line", [
    (lambda ls: ls[1:], 1),
    (lambda ls: ["# {broken"] + ls[1:], 1),
    (lambda ls: ['# {"dt": 0.02}'] + ls[1:], 1),
    (lambda ls: ls[:1] + ["step,t"] + ls[2:], 2),
    (lambda ls: ls[:3] + ["1,2,3"] + ls[4:], 4),
    (lambda ls: ls[:4] + [ls[4].replace(ls[4].split(",")[2], "abc", 1)] + ls[5:], 5),
    (lambda ls: ls[:2], None),
])
def test_malformed_files_raise_with_line(mutate, line):
    lines = scripted().to_text().splitlines()
    with pytest.raises(TrajectoryParseError) as info:
        parse_trajectory("\n".join(mutate(lines)))
    if line is not None:
        assert f"line {line}" in str(info.value)


def test_bad_embedded_track():
    lines = scripted().to_text().splitlines()
    lines[0] = '# {"dt": 0.02, "track_yaml": "name: x\\n"}'
    with pytest.raises(TrajectoryParseError, match="line 1"):
        parse_trajectory("\n".join(lines))


def test_header_matches_columns():
    assert scripted().to_text().splitlines()[1].split(",") == list(COLUMNS)


@pytest.mark.parametrize("track", ["single_gate", "circle", "figure8_decoy"])
def test_replaying_exported_episodes_reproduces_logged_return(track):
    cfg = RunConfig().with_overrides(run={"track": track}, env={"max_steps": 120})
    _, reports = evaluate_agent(RandomAgent(), cfg, 4, seed=5, mode="sample", record=True)
    for rep in reports:
        traj = parse_trajectory(rep["trajectory"].to_text())
        replayed = replay_rewards(traj, cfg.reward, cfg.env.drone_radius)
        np.testing.assert_array_equal(replayed[1:], traj.reward[1:])
        total = 0.0
        for r in replayed[1:]:
            total += r
        assert total == rep["return"] == traj.logged_return
