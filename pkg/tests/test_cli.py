import csv
import json

import pytest
import yaml

from conftest import SCENARIOS
from idnp.commands.campaign import sweep_points
from idnp.constant import EXIT_CODES
from idnp.models.scenario import SweepSpec
from idnp.types.exceptions import ScenarioError
from idnp.utils.core import IdnpCore
from idnp.utils.helper import load_scenario

FREE_SPACE = str(SCENARIOS / "free_space.yaml")
NARROW_PASSAGE = str(SCENARIOS / "narrow_passage.json")


def run_cli(*argv: str) -> int:
    return IdnpCore().run(list(argv))


def test_run_writes_outputs(tmp_path):
    code = run_cli("run", "--scenario", FREE_SPACE, "--out", str(tmp_path), "--svg", "on")
    assert code == 0

    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "Feasible"
    assert summary["exit_code"] == 0
    assert summary["seed"] == 0
    assert summary["iterations"] == 1
    assert summary["final_time"] > 0

    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record["iteration"] == 1
    assert record["vertex_counts"] == [36] * 11

    with open(tmp_path / "trajectory.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "x_1", "x_2", "x_3", "x_4", "u_1", "u_2"]
    assert float(rows[1][0]) == 0.0
    assert rows[-1][-2:] == ["", ""]

    assert (tmp_path / "iter_1.svg").exists()
    assert (tmp_path / "idnp.log").exists()


def test_run_without_snapshots(tmp_path):
    assert run_cli("run", "--scenario", FREE_SPACE, "--out", str(tmp_path), "--svg", "off") == 0
    assert not list(tmp_path.glob("iter_*.svg"))


def test_full_nlp_exit_code(tmp_path):
    scenario = load_scenario(FREE_SPACE)
    params = scenario.parameters.model_copy(update={"full_nlp_budget": 0.0, "seed": 42})
    path = tmp_path / "no_budget.json"
    path.write_text(scenario.model_copy(update={"parameters": params}).model_dump_json())

    code = run_cli("run", "--scenario", str(path), "--mode", "full-nlp", "--out", str(tmp_path))
    assert code == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "IterLimit"
    assert summary["seed"] == 42
    assert not (tmp_path / "trajectory.csv").exists()


def test_infeasible_exit_code(tmp_path):
    scenario = load_scenario(FREE_SPACE)
    path = tmp_path / "far_goal.json"
    goal = scenario.goal.model_copy(update={"center": [30.0, 30.0]})
    far = scenario.model_copy(update={"goal": goal})
    path.write_text(far.model_dump_json())
    assert run_cli("run", "--scenario", str(path), "--out", str(tmp_path), "--svg", "off") == 2


def test_missing_scenario(tmp_path):
    assert run_cli("run", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)) == 1
    assert not (tmp_path / "summary.json").exists()


def test_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "model": "PointMass2D",\n  "goal": {\n}')
    assert run_cli("validate", "--scenario", str(path)) == 1

    with pytest.raises(ScenarioError) as info:
        load_scenario(path)
    assert info.value.line == 4


def test_validation_error_points_at_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(
        "model: PointMass2D\n"
        "initial_state: [1.0, 1.0, 0.0, 0.0]\n"
        "goal:\n"
        "  center: [8.0, 7.0]\n"
        "  radius: -1.0\n"
    )
    with pytest.raises(ScenarioError) as info:
        load_scenario(path)
    assert info.value.line == 5
    assert "radius" in info.value.message


def test_unknown_arguments():
    assert run_cli("plan") == 1
    assert run_cli("run", "--mode", "adaptive") == 1


def test_validate(capsys):
    assert run_cli("validate", "--scenario", NARROW_PASSAGE) == 0
    out = capsys.readouterr().out
    assert "2 obstacle(s)" in out
    assert "M = 20, N = 200" in out
    assert "121 controls x 10 steps" in out


def test_sweep_points():
    sweep = SweepSpec(lower=[0.5, 0.5], upper=[3.5, 9.5], points=[5, 5])
    points = sweep_points(sweep)
    assert len(points) == 25
    assert points[0].tolist() == [0.5, 0.5]
    assert points[1].tolist() == [0.5, 2.75]
    assert points[-1].tolist() == [3.5, 9.5]

    single = sweep_points(SweepSpec(lower=[1.0], upper=[3.0], points=[1]))
    assert [p.tolist() for p in single] == [[2.0]]


def test_campaign_needs_sweep(tmp_path):
    scenario = load_scenario(FREE_SPACE)
    path = tmp_path / "no_sweep.json"
    path.write_text(scenario.model_copy(update={"sweep": None}).model_dump_json())
    assert run_cli("campaign", "--scenario", str(path), "--out", str(tmp_path)) == 1


def test_scenario_round_trip(tmp_path):
    for source in (FREE_SPACE, NARROW_PASSAGE):
        scenario = load_scenario(source)

        as_json = tmp_path / "copy.json"
        as_json.write_text(scenario.model_dump_json(indent=2))
        assert load_scenario(as_json) == scenario

        as_yaml = tmp_path / "copy.yaml"
        as_yaml.write_text(yaml.safe_dump(scenario.model_dump(mode="json")))
        assert load_scenario(as_yaml) == scenario


def read_campaign(path) -> list[dict[str, str]]:
    with open(path / "campaign.csv", newline="") as f:
        return list(csv.DictReader(f))


def assert_exit_codes_match(rows: list[dict[str, str]]) -> None:
    for row in rows:
        if row["status"] == "Skipped":
            assert row["exit_code"] == ""
        else:
            assert int(row["exit_code"]) == EXIT_CODES[row["status"]]


@pytest.mark.slow
def test_campaign_inline(tmp_path, capsys):
    scenario = load_scenario(FREE_SPACE)
    params = scenario.parameters.model_copy(update={"seed": 100})
    path = tmp_path / "seeded.json"
    path.write_text(scenario.model_copy(update={"parameters": params}).model_dump_json())

    code = run_cli(
        "campaign",
        "--scenario",
        str(path),
        "--modes",
        "adaptive",
        "--workers",
        "1",
        "--max-iters",
        "2",
        "--out",
        str(tmp_path),
    )
    assert code == 0

    rows = read_campaign(tmp_path)
    assert len(rows) == 9
    assert [int(r["seed"]) for r in rows] == list(range(100, 109))
    assert {r["mode"] for r in rows} == {"adaptive"}
    assert {r["variant"] for r in rows} == {"StepWeighted"}
    assert rows[0]["w"] == "1 1"
    assert_exit_codes_match(rows)
    assert "adaptive (StepWeighted):" in capsys.readouterr().out


@pytest.mark.slow
def test_campaign_adaptive_dominates_fixed(tmp_path, capsys):
    code = run_cli(
        "campaign",
        "--scenario",
        NARROW_PASSAGE,
        "--modes",
        "adaptive",
        "fixed",
        "--variants",
        "StepWeighted",
        "Unweighted",
        "--out",
        str(tmp_path),
    )
    assert code == 0

    rows = read_campaign(tmp_path)
    assert len(rows) == 25 * 2 * 2
    assert_exit_codes_match(rows)

    solved = {"adaptive": set(), "fixed": set()}
    for row in rows:
        if row["status"] == "Feasible":
            solved[row["mode"]].add((row["seed"], row["variant"]))
    assert solved["fixed"] <= solved["adaptive"]
    assert len(solved["adaptive"]) > len(solved["fixed"])

    out = capsys.readouterr().out
    for variant in ("StepWeighted", "Unweighted"):
        assert f"fixed ({variant}):" in out
