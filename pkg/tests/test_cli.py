import json
from pathlib import Path

import pytest

from iwnplan.cli import EXIT_DOMAIN, EXIT_EXHAUSTED, EXIT_INPUT, EXIT_NETWORK, EXIT_OK, main
from iwnplan.geometry import save_plan
from iwnplan.layout import DoorSpec, OuterDoorSpec, assemble_plan
from iwnplan.scenarios import OFFICE_RULES, office_boundary, reference_office_plan

FIXTURES = Path(__file__).parent / "fixtures"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def office_file(tmp_path):
    path = tmp_path / "office.json"
    save_plan(reference_office_plan(), path)
    return path


# --- validate ---------------------------------------------------------------


def test_validate_ok(capsys, office_file):
    code, out, _ = run(capsys, "validate", office_file)
    assert code == EXIT_OK
    assert run(capsys, "validate", "builtin:reference_complex")[0] == EXIT_OK


def test_validate_narrow_door(capsys, tmp_path):
    rooms = reference_office_plan().rooms
    doors = [DoorSpec(r.label, "N" if r.origin.y == 0 else "S", r.origin.x + 2, 0.6) for r in rooms]
    plan = assemble_plan(office_boundary(), rooms, doors, OuterDoorSpec("W"), partition="brick", rules=OFFICE_RULES)
    path = tmp_path / "narrow.json"
    save_plan(plan, path)
    code, out, _ = run(capsys, "validate", path)
    assert code == EXIT_DOMAIN
    assert "DoorWidthViolation" in out


def test_validate_missing_and_malformed(capsys, tmp_path):
    assert run(capsys, "validate", tmp_path / "nope.json")[0] == EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "validate", bad)[0] == EXIT_INPUT
    bad.write_text('{"boundary": 3}')
    assert run(capsys, "validate", bad)[0] == EXIT_INPUT


def test_unknown_subcommand(capsys):
    assert run(capsys, "frobnicate")[0] == EXIT_INPUT


# --- evaluate ---------------------------------------------------------------


def test_evaluate_empty_room_centre(capsys):
    code, out, _ = run(capsys, "evaluate", "builtin:empty_room", "--ap", "10,5")
    assert code == EXIT_OK
    assert json.loads(out)["coverage_fraction"] == 1.0


def test_evaluate_is_deterministic(capsys, tmp_path):
    outs, maps = [], []
    for i in range(2):
        hm = tmp_path / f"h{i}.ppm"
        code, out, _ = run(capsys, "evaluate", "builtin:reference_office", "--ap", "9,5", "--heatmap", hm)
        assert code == EXIT_OK
        outs.append(out)
        maps.append(hm.read_bytes())
    assert outs[0] == outs[1]
    assert maps[0] == maps[1]
    assert maps[0].startswith(b"P6\n")


def test_evaluate_golden(capsys, office_file, tmp_path):
    dep = tmp_path / "dep.json"
    dep.write_text((FIXTURES / "oracle_office_k2.json").read_text())
    code, out, _ = run(
        capsys, "evaluate", office_file, "--deployment", dep, "--exponent", "3", "--threshold", "80"
    )
    assert code == EXIT_OK
    assert json.loads(out) == json.loads((FIXTURES / "office_k2_stats.json").read_text())


def test_evaluate_rejects_ap_outside(capsys):
    assert run(capsys, "evaluate", "builtin:empty_room", "--ap", "25,5")[0] == EXIT_DOMAIN
    assert run(capsys, "evaluate", "builtin:empty_room", "--ap", "ten,5")[0] == EXIT_INPUT
    assert run(capsys, "evaluate", "builtin:empty_room")[0] == EXIT_INPUT


# --- optimize ---------------------------------------------------------------


def _config(tmp_path, **doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_optimize_scripted(capsys, tmp_path):
    cfg = _config(
        tmp_path,
        plan="builtin:empty_room",
        task={"threshold": 70.0, "max_aps": 1},
        optimizer={"name": "scripted", "script": [[[10, 5]]]},
    )
    code, out, _ = run(capsys, "optimize", "--config", cfg, "--out", tmp_path / "runs", "--run-id", "r1")
    assert code == EXIT_OK
    run_dir = tmp_path / "runs" / "r1"
    records = [json.loads(line) for line in (run_dir / "trace.jsonl").read_text().splitlines()]
    assert [r["record"] for r in records] == ["header", "step", "result"]
    assert records[-1]["iterations"] == 1
    assert out.splitlines()[0] == (run_dir / "summary.txt").read_text().strip()
    assert out.startswith("converged 1 1.000000 1")
    for name in ("plan.json", "heatmap.ppm"):
        assert (run_dir / name).exists()


def test_optimize_flags_override_config(capsys, tmp_path):
    cfg = _config(tmp_path, plan="builtin:empty_room", task={"threshold": 30.0, "max_aps": 1, "max_iterations": 2})
    code, out, _ = run(
        capsys, "optimize", "--config", cfg, "--threshold", "70", "--out", tmp_path / "runs", "--run-id", "r"
    )
    assert code == EXIT_OK
    assert out.startswith("converged")


def test_aco_needs_seed(capsys, tmp_path):
    code, _, err = run(capsys, "optimize", "builtin:empty_room", "--optimizer", "aco", "--out", tmp_path)
    assert code == EXIT_INPUT
    assert "seed" in err


def test_bad_optimizer_param(capsys, tmp_path):
    code = run(
        capsys, "optimize", "builtin:empty_room", "--optimizer", "aco", "--seed", "1",
        "--param", "n_ants=0", "--out", tmp_path,
    )[0]
    assert code == EXIT_INPUT
    code = run(
        capsys, "optimize", "builtin:empty_room", "--optimizer", "aco", "--seed", "1",
        "--param", "colour=3", "--out", tmp_path,
    )[0]
    assert code == EXIT_INPUT


def test_aco_empty_room_near_oracle(capsys, tmp_path):
    code, out, _ = run(
        capsys, "optimize", "builtin:empty_room", "--optimizer", "aco", "--seed", "0",
        "--threshold", "58", "--target", "1.0", "--max-aps", "1", "--max-iterations", "100",
        "--out", tmp_path, "--run-id", "aco",
    )
    assert code == EXIT_EXHAUSTED
    outcome, iters, cov, n = out.splitlines()[0].split()
    assert outcome == "exhausted" and int(iters) == 100 and int(n) == 1
    assert float(cov) >= 0.73125 - 0.01


def test_llm_unreachable_keeps_partial_output(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "sk-test-never-printed")
    cfg = _config(
        tmp_path,
        plan="builtin:empty_room",
        task={"threshold": 70.0, "max_aps": 1},
        optimizer={"name": "llm"},
        # port 9 (discard) is closed in the sandbox
        llm={"base_url": "http://127.0.0.1:9/v1", "max_retries": 0, "timeout": 2.0},
    )
    code, out, err = run(capsys, "optimize", "--config", cfg, "--out", tmp_path / "runs", "--run-id", "llm")
    assert code == EXIT_NETWORK
    run_dir = tmp_path / "runs" / "llm"
    assert (run_dir / "trace.jsonl").exists()
    assert (run_dir / "summary.txt").read_text().startswith("failed")
    logs = "".join(p.read_text() for p in run_dir.iterdir() if p.suffix in (".jsonl", ".txt"))
    assert "sk-test-never-printed" not in out + err + logs


def test_run_dirs_do_not_collide(capsys, tmp_path):
    args = ("optimize", "builtin:empty_room", "--threshold", "70", "--max-aps", "1", "--seed", "3", "--out", tmp_path)
    run(capsys, *args)
    run(capsys, *args)
    assert len(list(tmp_path.iterdir())) == 2


# --- joint-design -----------------------------------------------------------


def test_joint_design_minimal(capsys, tmp_path):
    code, out, _ = run(
        capsys, "joint-design", "--n-candidates", "1", "--max-rounds", "1",
        "--out", tmp_path, "--run-id", "j",
    )
    assert code == EXIT_OK
    d = tmp_path / "j"
    score = json.loads((d / "score.json").read_text())
    assert score["iwn_efficiency"] == score["coverage"] / score["ap_count"]
    assert len((d / "rounds.jsonl").read_text().splitlines()) == 1


def test_joint_design_impossible_rooms(capsys, tmp_path):
    code, _, err = run(capsys, "joint-design", "--rooms", "10x10,10x10,10x10", "--out", tmp_path)
    assert code == EXIT_DOMAIN


def test_joint_design_bad_weights(capsys, tmp_path):
    assert run(capsys, "joint-design", "--w-coverage", "1.5", "--out", tmp_path)[0] == EXIT_INPUT
    assert run(capsys, "joint-design", "--rooms", "4by3", "--out", tmp_path)[0] == EXIT_INPUT


# --- reproduce --------------------------------------------------------------


def test_reproduce_rejects_impossible_target(capsys):
    assert run(capsys, "reproduce", "case1", "--target", "1.01")[0] == EXIT_INPUT
