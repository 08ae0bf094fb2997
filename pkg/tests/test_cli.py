"""Command-line entry points, exit codes, and artifact formats."""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from genkbc.cli import InteractiveAnnotator, main
from genkbc.embed import EmbeddingModel
from genkbc.guidance import RuleId
from genkbc.kb import QuantLabel, Triple


@pytest.fixture(scope="module")
def model_path(fixture_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-model") / "model.npz"
    rc = main(
        [
            "train",
            "--kb", str(fixture_dir / "kb.tsv"),
            "--taxonomy", str(fixture_dir / "taxonomy.tsv"),
            "--typemap", str(fixture_dir / "typemap.tsv"),
            "--schema", str(fixture_dir / "schema.tsv"),
            "--dim", "8",
            "--epochs", "2",
            "--model-out", str(out),
        ]
    )
    assert rc == 0
    return out


def _inputs(fixture_dir) -> list[str]:
    return [
        "--kb", str(fixture_dir / "kb.tsv"),
        "--taxonomy", str(fixture_dir / "taxonomy.tsv"),
        "--typemap", str(fixture_dir / "typemap.tsv"),
        "--schema", str(fixture_dir / "schema.tsv"),
    ]


def test_fixture_command_writes_and_lists_files(tmp_path, capsys):
    rc = main(["fixture", "--out", str(tmp_path / "fx"), "--seed", "0"])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    names = [line.split("\t")[0] for line in out]
    assert names == sorted(names)
    assert "kb" in names and "truth" in names
    for line in out:
        _, path = line.split("\t")
        assert Path(path).is_file()


def test_fixture_regeneration_is_byte_identical(tmp_path):
    main(["fixture", "--out", str(tmp_path / "a"), "--seed", "7"])
    main(["fixture", "--out", str(tmp_path / "b"), "--seed", "7"])
    for name in ("kb.tsv", "taxonomy.tsv", "typemap.tsv", "schema.tsv", "truth.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_reports_and_saves(model_path, capsys):
    # the module fixture already ran the command; check the artifact
    model = EmbeddingModel.load(model_path)
    assert model.dim == 8


def test_train_summary_line(fixture_dir, tmp_path, capsys):
    out = tmp_path / "m.npz"
    rc = main(
        ["train", *_inputs(fixture_dir), "--dim", "4", "--epochs", "1",
         "--model-out", str(out)]
    )
    assert rc == 0
    text = capsys.readouterr().out
    assert "trained on" in text and "dim=4" in text and str(out) in text


def test_missing_input_is_a_config_error(fixture_dir, tmp_path, capsys):
    rc = main(
        [
            "train",
            "--kb", str(tmp_path / "nope.tsv"),
            "--taxonomy", str(fixture_dir / "taxonomy.tsv"),
            "--typemap", str(fixture_dir / "typemap.tsv"),
            "--schema", str(fixture_dir / "schema.tsv"),
            "--model-out", str(tmp_path / "m.npz"),
        ]
    )
    assert rc == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_train_config_is_a_config_error(fixture_dir, tmp_path, capsys):
    rc = main(
        ["train", *_inputs(fixture_dir), "--epochs", "0",
         "--model-out", str(tmp_path / "m.npz")]
    )
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_expand_stdout_rows_are_well_formed(fixture_dir, capsys):
    rc = main(["expand", *_inputs(fixture_dir)])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines
    rules = {r.value for r in RuleId}
    for line in lines:
        fields = line.split("\t")
        assert len(fields) == 6
        assert fields[3] in ("all", "some")
        assert fields[4] in rules
        assert fields[5]  # provenance never empty


def test_expand_file_matches_stdout(fixture_dir, tmp_path, capsys):
    main(["expand", *_inputs(fixture_dir)])
    stdout_rows = capsys.readouterr().out
    out = tmp_path / "derived.tsv"
    rc = main(["expand", *_inputs(fixture_dir), "--out", str(out)])
    assert rc == 0
    summary = capsys.readouterr().out
    assert "derived" in summary and str(out) in summary
    assert out.read_text() == stdout_rows


def test_predict_csv_is_stable(fixture_dir, model_path, tmp_path, capsys):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for path in (a, b):
        rc = main(
            ["predict", *_inputs(fixture_dir), "--model", str(model_path),
             "--out", str(path)]
        )
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "source,relation,target,score,probability"
    assert len(lines) > 1


def test_predict_limit(fixture_dir, model_path, tmp_path):
    out = tmp_path / "top.csv"
    rc = main(
        ["predict", *_inputs(fixture_dir), "--model", str(model_path),
         "--out", str(out), "--limit", "5"]
    )
    assert rc == 0
    assert len(out.read_text().splitlines()) == 6


def test_predict_unseen_entity_yields_nothing(fixture_dir, model_path, tmp_path, capsys):
    out = tmp_path / "cold.csv"
    rc = main(
        ["predict", *_inputs(fixture_dir), "--model", str(model_path),
         "--out", str(out), "--entity", "newcomer"]
    )
    assert rc == 0
    assert "wrote 0 predictions" in capsys.readouterr().out
    assert out.read_text().splitlines() == ["source,relation,target,score,probability"]


def test_predict_missing_model(fixture_dir, tmp_path, capsys):
    rc = main(
        ["predict", *_inputs(fixture_dir), "--model", str(tmp_path / "no.npz"),
         "--out", str(tmp_path / "o.csv")]
    )
    assert rc == 2
    assert "model not found" in capsys.readouterr().err


def _eval_args(**over):
    # the rounded-mass stream keeps every window within one hit of its
    # expectation, so the sandwich holds at any seed; sampled Bernoulli
    # streams can violate it by noise alone
    base = {
        "--stream": "lowdisc",
        "--stream-seed": "1",
        "--stream-length": "4096",
        "--stream-c": "512",
        "--alpha": "2",
        "--delta": "32",
        "--ytilde": "128",
    }
    base.update(over)
    args = ["eval"]
    for k, v in base.items():
        if v is not None:
            args.extend([k, v])
    return args


def test_eval_report_checks_pass(capsys):
    rc = main(_eval_args())
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["anchor"] == 7
    assert report["max_checkpoint"] == 12
    assert report["frugality_ok"] and report["sandwich_ok"] and report["ratio_ok"]
    assert report["queries_used"] <= report["query_budget"]
    assert len(report["checkpoints"]) == 6
    assert report["decomposition_ok"] is True
    for row in report["checkpoints"]:
        assert row["lower"] <= row["exact"] <= row["upper"]


def test_eval_fractional_alpha(capsys):
    rc = main(_eval_args(**{"--alpha": "3/2", "--ytilde": "64", "--delta": "16"}))
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["alpha"] == "3/2"
    assert report["sandwich_ok"]


def test_eval_labels_file(tmp_path, capsys):
    labels = tmp_path / "labels.txt"
    labels.write_text("".join("1\n" for _ in range(64)))
    rc = main(
        ["eval", "--labels", str(labels), "--alpha", "2", "--delta", "1",
         "--ytilde", "8"]
    )
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert all(row["exact"] == 1.0 for row in report["checkpoints"])


def test_eval_bad_label_line(tmp_path, capsys):
    labels = tmp_path / "labels.txt"
    labels.write_text("1\n2\n")
    rc = main(["eval", "--labels", str(labels)])
    assert rc == 2
    assert "labels line 2" in capsys.readouterr().err


def test_eval_anchor_beyond_stream(capsys):
    rc = main(_eval_args(**{"--stream-length": "100", "--ytilde": "256",
                            "--delta": "64"}))
    assert rc == 2
    assert "exceeds" in capsys.readouterr().err


def test_eval_checkpoint_before_anchor(capsys):
    rc = main(_eval_args(**{"--max-checkpoint": "5"}))
    assert rc == 2
    assert "precedes the anchor" in capsys.readouterr().err


def test_eval_requires_a_label_source(capsys):
    rc = main(["eval"])
    assert rc == 2
    assert "--labels" in capsys.readouterr().err


def test_eval_out_dir_artifacts(tmp_path, capsys):
    d1, d2 = tmp_path / "e1", tmp_path / "e2"
    for d in (d1, d2):
        rc = main(_eval_args(**{"--out-dir": str(d)}))
        assert rc == 0
        capsys.readouterr()
        assert (d / "bounds.csv").is_file()
        assert (d / "curve.csv").is_file()
    assert (d1 / "bounds.csv").read_bytes() == (d2 / "bounds.csv").read_bytes()
    assert (d1 / "curve.csv").read_bytes() == (d2 / "curve.csv").read_bytes()
    header = (d1 / "curve.csv").read_text().splitlines()[0]
    assert header == "yield,precision"


def _active_args(fixture_dir, entity, *extra):
    return [
        "active", *_inputs(fixture_dir),
        "--entity", entity,
        "--truth", str(fixture_dir / "truth.tsv"),
        "--dim", "8", "--epochs", "2", "--budget", "4",
        *extra,
    ]


def test_active_episode_summary_and_report(fixture_dir, fixture_entity, tmp_path, capsys):
    out = tmp_path / "episode.json"
    rc = main(_active_args(fixture_dir, fixture_entity, "--out", str(out)))
    assert rc == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith(f"entity={fixture_entity} queries=")
    report = json.loads(out.read_text())
    assert report["entity"] == fixture_entity
    assert set(report["yields"]) == {
        "annotation", "sibling_agreement", "factorization", "total"
    }
    assert len(report["selected"]) <= 4
    selected_ids = {
        "\t".join((c["orientation"], c["relation"], c["other"]))
        for c in report["selected"]
    }
    assert set(report["annotations"]) == selected_ids


def test_active_episode_is_deterministic(fixture_dir, fixture_entity, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        rc = main(_active_args(fixture_dir, fixture_entity, "--out", str(path)))
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()


def test_active_zero_budget(fixture_dir, fixture_entity, capsys):
    rc = main(_active_args(fixture_dir, fixture_entity, "--budget", "0"))
    assert rc == 0
    assert "queries=0" in capsys.readouterr().out


def test_active_cold_entity_exits_config(fixture_dir, fixture_kb, capsys):
    junk = sorted(e for e in fixture_kb.entities if e.startswith("junk"))[0]
    rc = main(_active_args(fixture_dir, junk))
    assert rc == 2
    assert "fall back" in capsys.readouterr().err


def test_active_needs_an_answer_source(fixture_dir, fixture_entity, capsys):
    rc = main(
        ["active", *_inputs(fixture_dir), "--entity", fixture_entity,
         "--dim", "8", "--epochs", "2"]
    )
    assert rc == 2
    assert "--truth" in capsys.readouterr().err


def test_unknown_subcommand_exits_via_argparse():
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_console_script_help_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "genkbc.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "knowledge-base completion" in proc.stdout


def test_interactive_annotator_parses_and_retries(monkeypatch, capsys):
    answers = iter(["ALL ", "banana", "some"])
    monkeypatch.setattr("builtins.input", lambda prompt: next(answers))
    ann = InteractiveAnnotator()
    t1 = Triple("a", "r", "b")
    t2 = Triple("a", "r", "c")
    assert ann.label(t1) is QuantLabel.ALL
    assert ann.label(t2) is QuantLabel.SOME
    assert ann.queries == 2
    assert "please answer" in capsys.readouterr().err
    assert ann.verify(t1) and ann.verify(t2)
    assert not ann.verify(Triple("a", "r", "zzz"))


def test_interactive_annotator_eof_means_none(monkeypatch):
    def boom(prompt):
        raise EOFError

    monkeypatch.setattr("builtins.input", boom)
    ann = InteractiveAnnotator()
    assert ann.label(Triple("a", "r", "b")) is QuantLabel.NONE
