from __future__ import annotations

import json

import pytest

from falcon.cli import main


@pytest.fixture()
def workdir(tmp_path, data_dir):
    """Populated data dir: imported corpus, ready for CLI commands."""
    dd = tmp_path / "falcon-data"
    rc = main(["--data-dir", str(dd), "import-rules", str(data_dir / "corpus")])
    assert rc == 0
    return dd


def _write_corehound_inputs(tmp_path, cti, rule_text):
    cti_path = tmp_path / "corehound.cti.json"
    cti_path.write_text(json.dumps(cti.to_dict()), encoding="utf-8")
    rule_path = tmp_path / "corehound.yar"
    rule_path.write_text(rule_text, encoding="utf-8")
    return cti_path, rule_path


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["generate"])  # missing required --cti/--medium
    assert excinfo.value.code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["index", "--definitely-not-a-flag"])
    assert excinfo.value.code == 2


def test_domain_error_exit_1(tmp_path, capsys):
    rc = main(["--data-dir", str(tmp_path / "dd"), "eval-scorer",
               "--dataset", str(tmp_path / "missing.jsonl")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_import_and_index(workdir, capsys):
    rc = main(["--data-dir", str(workdir), "index", "--with-embeddings"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "snort: indexed" in out and "yara: indexed" in out
    assert (workdir / "index" / "snort" / "manifest.json").exists()
    assert (workdir / "index" / "yara" / "vectors.npz").exists()


def test_validate_corehound_exit_0(workdir, tmp_path, corehound_cti,
                                   corehound_final, capsys):
    cti_path, rule_path = _write_corehound_inputs(tmp_path, corehound_cti, corehound_final)
    rc = main(["--data-dir", str(workdir), "validate",
               "--rule", str(rule_path), "--cti", str(cti_path),
               "--semantic-min", "0.5"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "[syntax] pass" in out
    assert "[semantic] pass" in out
    assert "[performance]" in out


def test_ingest_cti(workdir, tmp_path, corehound_cti, capsys):
    path = tmp_path / "one.json"
    path.write_text(json.dumps(corehound_cti.to_dict()), encoding="utf-8")
    rc = main(["--data-dir", str(workdir), "ingest-cti", str(path)])
    assert rc == 0
    stored = workdir / "ctis" / f"{corehound_cti.id}.json"
    assert stored.exists()
    assert "ingested 1" in capsys.readouterr().out


def test_eval_retriever_cli(workdir, data_dir, capsys):
    rc = main(["--data-dir", str(workdir), "eval-retriever",
               "--dataset", str(data_dir / "dataset" / "pairs-eval.jsonl"),
               "--method", "bm25", "--k", "10"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "bm25" in out
    assert "report written" in out
    report = json.loads((workdir / "reports" / "retriever.json").read_text())
    assert report["kind"] == "retriever_eval"
    assert report["per_method"]["bm25"]["snort"]["recall_at_k"] == 1.0


def test_eval_scorer_cli(workdir, data_dir, capsys):
    rc = main(["--data-dir", str(workdir), "eval-scorer",
               "--dataset", str(data_dir / "dataset" / "pairs-eval.jsonl")])
    assert rc == 0
    report = json.loads((workdir / "reports" / "scorer.json").read_text())
    assert report["diagonal_recall"] >= 0.8


def test_calibrate_cli(workdir, data_dir, capsys):
    rc = main(["--data-dir", str(workdir), "calibrate",
               "--dataset", str(data_dir / "dataset" / "pairs-eval.jsonl")])
    assert rc == 0
    payload = json.loads((workdir / "calibration.json").read_text())
    assert 0.0 < payload["decision_threshold"] < 1.0
    assert "f1" in payload and "dataset_fingerprint" in payload
