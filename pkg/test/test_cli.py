import json

import pytest

import cli
from cli import EXIT_FAILURE, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, main
from features import save_pool
from policy import Policy, load_policy, save_policy

BEHIND = """(define (problem behind) (:domain spanner)
  (:objects l0 l1 - location s1 - spanner n1 - nut)
  (:init (link l0 l1) (at-man l1) (spanner-at s1 l0) (useable s1) (nut-at n1 l1) (loose n1))
  (:goal (tightened n1)))
"""

DONE = """(define (problem done) (:domain gripper)
  (:objects b1 - ball left right - gripper)
  (:init (at-robby rooma) (free left) (free right) (at b1 roomb))
  (:goal (at b1 roomb)))
"""


@pytest.fixture
def run(tmp_path):
    def invoke(*argv):
        return main(["--config-dir", str(tmp_path / "conf"), *map(str, argv)])
    return invoke


@pytest.fixture
def gripper_dir(tmp_path, run):
    out = tmp_path / "gripper"
    assert run("generate", "gripper", "--sizes", 2, 3, 4, "--out", out) == EXIT_OK
    return out


def test_generate_prints_paths(tmp_path, run, capsys):
    assert run("generate", "gripper", "--sizes", 1, 2, "--out", tmp_path / "g") == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [line.rsplit("/", 1)[-1] for line in lines] == ["domain.pddl", "gripper-001.pddl", "gripper-002.pddl"]


def test_plan_to_stdout(tmp_path, run, capsys):
    run("generate", "gripper", "--sizes", 1, "--out", tmp_path / "g")
    capsys.readouterr()
    assert run("plan", tmp_path / "g" / "domain.pddl", tmp_path / "g" / "gripper-001.pddl") == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("(pick b1 rooma")


def test_plan_for_satisfied_goal_is_empty(tmp_path, run, capsys):
    run("generate", "gripper", "--sizes", 1, "--out", tmp_path / "g")
    problem = tmp_path / "done.pddl"
    problem.write_text(DONE, encoding="utf-8")
    capsys.readouterr()
    assert run("plan", tmp_path / "g" / "domain.pddl", problem) == EXIT_OK
    assert capsys.readouterr().out == ""


def test_plan_writes_file(tmp_path, run):
    run("generate", "gripper", "--sizes", 1, "--out", tmp_path / "g")
    out = tmp_path / "plan.txt"
    assert run("plan", tmp_path / "g" / "domain.pddl", tmp_path / "g" / "gripper-001.pddl", "--out", out) == EXIT_OK
    assert len(out.read_text(encoding="utf-8").splitlines()) == 3


def test_plan_errors(tmp_path, run, capsys):
    run("generate", "spanner", "--sizes", 2, "--out", tmp_path / "s")
    assert run("plan", tmp_path / "s" / "domain.pddl", tmp_path / "missing.pddl") == EXIT_USAGE

    problem = tmp_path / "behind.pddl"
    problem.write_text(BEHIND, encoding="utf-8")
    capsys.readouterr()
    assert run("plan", tmp_path / "s" / "domain.pddl", problem) == EXIT_FAILURE
    assert "behind: Unsolvable" in capsys.readouterr().err


def test_usage_errors(run, gripper_dir):
    assert run() == EXIT_USAGE
    assert run("--help") == EXIT_OK
    assert run("frobnicate") == EXIT_USAGE
    assert run("learn", gripper_dir / "domain.pddl") == EXIT_USAGE
    assert run("plan", gripper_dir / "domain.pddl", gripper_dir / "gripper-002.pddl", "--node-budget", 0) == EXIT_USAGE
    assert run("learn", gripper_dir / "domain.pddl", gripper_dir / "nothing-*.pddl") == EXIT_USAGE


def test_pool_command(tmp_path, run, gripper_dir, capsys):
    domain = gripper_dir / "domain.pddl"
    assert run("pool", domain, gripper_dir / "gripper-002.pddl", "--complexity", 3, "--depth", 2) == EXIT_OK
    assert capsys.readouterr().out.endswith(" features\n")

    out = tmp_path / "pool.json"
    assert run("pool", domain, gripper_dir / "gripper-002.pddl", "--complexity", 3, "--depth", 2,
               "--out", out) == EXIT_OK
    data = json.loads(out.read_text(encoding="utf-8"))
    assert [entry["id"] for entry in data] == list(range(len(data)))


def test_learn_with_pool(tmp_path, run, gripper_dir, gripper_features, capsys):
    pool = tmp_path / "pool.json"
    save_pool(gripper_features, pool)
    policy_path, report_path, trace_path = tmp_path / "policy.json", tmp_path / "report.json", tmp_path / "trace.json"
    code = run("learn", gripper_dir / "domain.pddl", gripper_dir / "gripper-*.pddl", "--pool", pool,
               "--out", policy_path, "--report", report_path, "--trace", trace_path)
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("Features:\n")
    assert "|π|" in out

    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["outcome"] == "PolicyFound"
    assert report["Q"] == 3
    assert "solution" in json.loads(trace_path.read_text(encoding="utf-8"))["outcome"]

    policy = load_policy(policy_path)
    assert len(policy.rules) == report["pi"]

    assert run("verify", gripper_dir / "domain.pddl", gripper_dir / "gripper-*.pddl", "--policy", policy_path,
               "--jobs", 2) == EXIT_OK
    assert "Coverage: 3/3 (100.0%)" in capsys.readouterr().out


def test_learn_with_constant_pool_fails(tmp_path, run, gripper_dir, gripper_features, capsys):
    pool = tmp_path / "pool.json"
    save_pool(gripper_features.subset([3]), pool)
    report_path = tmp_path / "report.json"
    code = run("learn", gripper_dir / "domain.pddl", gripper_dir / "gripper-002.pddl", "--pool", pool,
               "--report", report_path)
    assert code == EXIT_FAILURE
    assert "Reason" in capsys.readouterr().out
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["outcome"] == "Edge"
    assert "witness" in report


def test_verify_and_width(tmp_path, run, gripper_dir, gripper_policy, capsys):
    policy_path = tmp_path / "policy.json"
    save_policy(gripper_policy, policy_path)
    domain, problem = gripper_dir / "domain.pddl", gripper_dir / "gripper-002.pddl"

    assert run("verify", domain, problem, "--policy", policy_path) == EXIT_OK
    assert "Coverage: 1/1 (100.0%)" in capsys.readouterr().out

    assert run("width", domain, problem, "--policy", policy_path) == EXIT_OK
    assert "Max width: 0.00" in capsys.readouterr().out

    empty = tmp_path / "empty.json"
    save_policy(Policy([], {}), empty)
    assert run("verify", domain, problem, "--policy", empty) == EXIT_FAILURE
    assert "NotClosed" in capsys.readouterr().out


def test_key_value_config(tmp_path, run, gripper_dir):
    good = tmp_path / "good.conf"
    good.write_text("# 调试\nlogging.level = DEBUG\nverify.jobs = 2\n", encoding="utf-8")
    bad = tmp_path / "bad.conf"
    bad.write_text("learner.nothing = 1\n", encoding="utf-8")
    domain, problem = gripper_dir / "domain.pddl", gripper_dir / "gripper-002.pddl"

    assert main(["--config", str(good), "--config-dir", str(tmp_path / "conf"),
                 "plan", str(domain), str(problem)]) == EXIT_OK
    assert main(["--config", str(bad), "--config-dir", str(tmp_path / "conf"),
                 "plan", str(domain), str(problem)]) == EXIT_USAGE


def test_width_runs_in_parallel(tmp_path, run, gripper_dir, gripper_policy, capsys):
    policy_path = tmp_path / "policy.json"
    save_policy(gripper_policy, policy_path)
    capsys.readouterr()
    assert run("width", gripper_dir / "domain.pddl", gripper_dir / "gripper-*.pddl", "--policy", policy_path,
               "--jobs", 3) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    # 结果顺序与输入一致
    assert [line.split()[0] for line in lines[2:5]] == ["gripper-2", "gripper-3", "gripper-4"]
    assert lines[-1].startswith("Coverage: 100.0%")


def test_config_command(tmp_path, run, capsys):
    assert run("config", "--set", "learner.k=2", "verify.jobs = 3") == EXIT_OK
    saved = json.loads((tmp_path / "conf" / "config.json").read_text(encoding="utf-8"))
    assert saved["learner"]["k"] == 2
    assert saved["verify"]["jobs"] == 3
    capsys.readouterr()

    assert run("config", "learner") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["k"] == 2
    assert run("config") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["verify"]["jobs"] == 3

    assert run("config", "gui") == EXIT_USAGE
    assert run("config", "--set", "learner.k") == EXIT_USAGE
    assert run("config", "--set", "learner.k=two") == EXIT_USAGE


def test_input_and_config_errors_are_usage_errors(tmp_path, run, gripper_dir):
    domain, problem = gripper_dir / "domain.pddl", gripper_dir / "gripper-002.pddl"
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert run("verify", domain, problem, "--policy", broken) == EXIT_USAGE
    assert run("learn", domain, problem, "--pool", broken) == EXIT_USAGE

    conf = tmp_path / "conf"
    conf.mkdir()
    (conf / "config.json").write_text(json.dumps({"learner": {"strategy": "s9"}}), encoding="utf-8")
    assert run("learn", domain, problem) == EXIT_USAGE
    assert run("generate", "spanner", "--sizes", 1, "--out", tmp_path / "s") == EXIT_USAGE


def test_unexpected_errors_are_internal(tmp_path, run, gripper_dir, gripper_policy, monkeypatch):
    policy_path = tmp_path / "policy.json"
    save_policy(gripper_policy, policy_path)

    def broken(*args, **kwargs):
        raise ValueError("不应出现")

    monkeypatch.setattr(cli, "analyze", broken)
    assert run("verify", gripper_dir / "domain.pddl", gripper_dir / "gripper-002.pddl",
               "--policy", policy_path) == EXIT_INTERNAL
