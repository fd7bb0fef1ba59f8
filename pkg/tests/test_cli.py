import json

import pytest

from instatraits.cli import main


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "cohort"
    assert main(["synth", "--seed", "3", "--n-participants", "150", "--catalog-width", "120",
                 "--planted-per-trait", "4", "--out", str(out)]) == 0
    return out


def test_stepwise_commands(cohort_dir, tmp_path, capsys):
    w = tmp_path
    assert main(["score-questionnaire", "--responses", str(cohort_dir / "responses.csv"), "--out", str(w)]) == 0
    assert main(["ingest", "--snapshots", str(cohort_dir / "snapshots"), "--out", str(w)]) == 0
    assert (w / "post_features.csv").exists()
    assert main(["catalog", "--snapshots", str(cohort_dir / "snapshots"), "--out", str(w)]) == 0
    assert len(json.loads((w / "catalog.json").read_text())["handles"]) == 120
    assert main(["features", "--scores", str(w / "scores.csv"), "--snapshots", str(cohort_dir / "snapshots"),
                 "--catalog", str(w / "catalog.json"), "--demographics", str(cohort_dir / "demographics.csv"),
                 "--out", str(w)]) == 0
    common = ["--features", str(w / "features.csv"), "--scores", str(w / "scores.csv"), "--norms", str(w / "norms.json")]
    assert main(["select", *common, "--trait", "teamwork", "--refine", "--seed", "1", "--out", str(w)]) == 0
    sel = w / "teamwork.two.json"
    assert json.loads(sel.read_text())["features"]
    assert main(["train", *common, "--selection", str(sel), "--family", "GLM", "--seed", "1", "--out", str(w)]) == 0
    model = w / "teamwork.two.GLM.json"
    assert main(["evaluate", "--model", str(model), *common, "--out", str(w)]) == 0
    ev = w / "teamwork.two.GLM.eval.json"
    assert json.loads(ev.read_text())["trait"] == "teamwork"
    assert main(["report", str(ev), "--out", str(w / "rep")]) == 0
    assert "two-level classification" in (w / "rep" / "report.txt").read_text()
    assert "accuracy" in capsys.readouterr().out


def test_run_and_score_candidate(cohort_dir, tmp_path, capsys):
    cfg = {"seed": 5, "responses": str(cohort_dir / "responses.csv"), "snapshots": str(cohort_dir / "snapshots"),
           "demographics": str(cohort_dir / "demographics.csv"), "traits": ["openness"], "schemes": ["two"],
           "families": ["GLM", "DT"], "refine": False}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    run = tmp_path / "run"
    assert main(["run", "--config", str(path), "--out", str(run)]) == 0
    assert json.loads((run / "manifest.json").read_text())["status"] == "complete"
    capsys.readouterr()
    snap = sorted((cohort_dir / "snapshots").iterdir())[0]
    assert main(["score-candidate", "--run", str(run), "--snapshot", str(snap),
                 "--demographics", str(cohort_dir / "demographics.csv")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out["traits"]) == {"openness"}
    # rerunning from the manifest reproduces the report
    again = tmp_path / "again"
    assert main(["run", "--config", str(run / "manifest.json"), "--out", str(again)]) == 0
    assert (again / "reports" / "report.csv").read_bytes() == (run / "reports" / "report.csv").read_bytes()


def test_exit_codes(tmp_path):
    bad = tmp_path / "cfg.json"
    bad.write_text("{nope")
    assert main(["run", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"seed": 1, "traits": ["charisma"], "synthetic": {}}))
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run"]) == 2
    assert main(["synth", "--out", str(tmp_path / "x")]) == 2  # no seed
    responses = tmp_path / "r.csv"
    responses.write_text("participant_id,q1\np1,9\n")
    bad.write_text(json.dumps({"seed": 1, "responses": str(responses), "output": str(tmp_path / "o")}))
    assert main(["run", "--config", str(bad)]) == 3
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 2
