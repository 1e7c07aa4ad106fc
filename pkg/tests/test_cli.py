import json
from pathlib import Path

import pytest

from dischargerx import corpus, model, synth
from dischargerx.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, apply_overrides, main
from dischargerx.notes import read_parsed_notes


TINY_TRAIN = {
    "embedding_dim": 8,
    "dense_units": 6,
    "filters_per_window": 2,
    "keep_rate": 1.0,
    "l2": 0.0,
    "max_epochs": 2,
    "patience": 2,
    "batch_size": 32,
}


def write_config(path: Path, **overrides) -> Path:
    config = {
        "notes": "",
        "out_dir": "",
        "model": "cnn",
        "seeds": [0, 1],
        "max_len": 120,
        "min_count": 2,
        "tfidf_dim": 60,
        "train": dict(TINY_TRAIN),
        "baseline": {"max_epochs": 3, "patience": 3},
    }
    config.update(overrides)
    path.write_text(json.dumps(config))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One synth -> train run shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("pipeline")
    parsed = root / "notes.ndjson"
    assert main(["synth", "--preset", "trigger", "--notes", "150",
                 "--seed", "1", "--out", str(parsed)]) == EXIT_OK
    cfg = write_config(root / "config.json", notes=str(parsed), out_dir=str(root / "run"))
    assert main(["train", "--config", str(cfg)]) == EXIT_OK
    return root


# -- synth ----------------------------------------------------------------------


def test_synth_writes_requested_count(tmp_path):
    out = tmp_path / "notes.ndjson"
    assert main(["synth", "--preset", "pair", "--notes", "40",
                 "--seed", "6", "--out", str(out)]) == EXIT_OK
    assert len(read_parsed_notes(out)) == 40


def test_synth_from_spec_file(tmp_path):
    spec_path = tmp_path / "spec.json"
    synth.save_spec(synth.trigger_corpus_spec(25), spec_path)
    out = tmp_path / "notes.ndjson"
    assert main(["synth", "--spec", str(spec_path), "--seed", "2", "--out", str(out)]) == EXIT_OK
    assert len(read_parsed_notes(out)) == 25
    assert main(["synth", "--spec", str(spec_path), "--notes", "31",
                 "--seed", "2", "--out", str(out)]) == EXIT_OK
    assert len(read_parsed_notes(out)) == 31


def test_synth_render_raw_reparses(tmp_path, capsys):
    out = tmp_path / "notes.ndjson"
    raw = tmp_path / "raw.ndjson"
    assert main(["synth", "--preset", "trigger", "--notes", "12", "--seed", "4",
                 "--out", str(out), "--render-raw", str(raw)]) == EXIT_OK
    reparsed = tmp_path / "reparsed.ndjson"
    summary = tmp_path / "summary.json"
    assert main(["parse", "--in", str(raw), "--out", str(reparsed),
                 "--summary", str(summary)]) == EXIT_OK
    counts = json.loads(summary.read_text())
    assert counts == {"total": 12, "parsed": 12, "no_label": 0, "malformed": 0}
    original = {n.visit_id: n.labels for n in read_parsed_notes(out)}
    for note in read_parsed_notes(reparsed):
        assert note.labels == original[note.visit_id]


# -- parse ----------------------------------------------------------------------


GOOD_NOTE = (
    "History of Present Illness:\n"
    "pt with chest pain and worsening dyspnea\n"
    "Discharge Medications:\n"
    "1. Metoprolol 25mg PO daily\n"
)
UNLABELED_NOTE = (
    "History of Present Illness:\n"
    "routine follow up, no medication changes\n"
)


def test_parse_counts_and_exit_codes(tmp_path, capsys):
    raw = tmp_path / "raw.ndjson"
    with open(raw, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"visit_id": "good", "text": GOOD_NOTE}) + "\n")
        fh.write(json.dumps({"visit_id": "bare", "text": UNLABELED_NOTE}) + "\n")
        fh.write(json.dumps({"visit_id": "broken", "text": ""}) + "\n")
    out = tmp_path / "parsed.ndjson"
    assert main(["parse", "--in", str(raw), "--out", str(out)]) == EXIT_OK
    counts = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert counts == {"total": 3, "parsed": 1, "no_label": 1, "malformed": 1}
    notes = read_parsed_notes(out)
    assert len(notes) == 1
    assert notes[0].visit_id == "good"
    assert notes[0].labels[0] == 1 and sum(notes[0].labels) == 1


def test_parse_missing_input_is_data_error(tmp_path):
    assert main(["parse", "--in", str(tmp_path / "nope.ndjson"),
                 "--out", str(tmp_path / "out.ndjson")]) == EXIT_DATA


# -- build ----------------------------------------------------------------------


def test_build_splits_and_reports_sizes(pipeline, tmp_path, capsys):
    data_dir = tmp_path / "data"
    assert main(["build", "--in", str(pipeline / "notes.ndjson"), "--out", str(data_dir),
                 "--seed", "0", "--max-len", "120", "--min-count", "2",
                 "--tfidf-dim", "60"]) == EXIT_OK
    sizes = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert (sizes["train"], sizes["validation"], sizes["test"]) == (120, 15, 15)
    prepared = corpus.load_prepared(data_dir)
    assert prepared.vocab.size == sizes["vocab"]


def test_build_missing_input_is_data_error(tmp_path):
    assert main(["build", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "d")]) == EXIT_DATA


# -- train ----------------------------------------------------------------------


def test_train_manifest_structure(pipeline):
    manifest = json.loads((pipeline / "run" / "manifest.json").read_text())
    assert manifest["model"] == "cnn"
    assert [e["seed"] for e in manifest["seeds"]] == [0, 1]
    assert manifest["config_sha256"]
    assert manifest["data"]["sha256"]
    agg = manifest["aggregate"]
    assert "macro.f1" in agg and "micro.f1" in agg
    assert set(agg["macro.f1"]) == {"mean", "std"}
    for entry in manifest["seeds"]:
        seed_dir = pipeline / "run" / f"seed_{entry['seed']}"
        assert (seed_dir / "model.ckpt").exists()
        assert (seed_dir / "model.ckpt.json").exists()
        assert (seed_dir / "history.json").exists()
        assert (seed_dir / "report.csv").exists()
        report = json.loads((seed_dir / "report.json").read_text())
        assert entry["report"] == report


def test_train_rerun_is_bit_exact(pipeline):
    cfg = pipeline / "config.json"
    rerun = pipeline / "rerun"
    assert main(["train", "--config", str(cfg), "--set", f"out_dir={rerun}"]) == EXIT_OK
    for seed in (0, 1):
        a = (pipeline / "run" / f"seed_{seed}" / "report.json").read_bytes()
        b = (rerun / f"seed_{seed}" / "report.json").read_bytes()
        assert a == b
        ca = (pipeline / "run" / f"seed_{seed}" / "model.ckpt").read_bytes()
        cb = (rerun / f"seed_{seed}" / "model.ckpt").read_bytes()
        assert ca == cb
    first = json.loads((pipeline / "run" / "manifest.json").read_text())
    second = json.loads((rerun / "manifest.json").read_text())
    assert first["aggregate"] == second["aggregate"]
    assert [e["checkpoint_sha256"] for e in first["seeds"]] == [
        e["checkpoint_sha256"] for e in second["seeds"]
    ]


def test_train_set_overrides(pipeline, tmp_path, capsys):
    cfg = pipeline / "config.json"
    out = tmp_path / "single"
    assert main(["train", "--config", str(cfg),
                 "--set", f"out_dir={out}",
                 "--set", "seeds=[0]",
                 "--set", "train.max_epochs=1"]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seeds"] == [0]
    assert manifest["config"]["train"]["max_epochs"] == 1
    assert len(manifest["seeds"]) == 1
    assert "std" not in manifest["aggregate"]["macro.f1"]
    history = json.loads((out / "seed_0" / "history.json").read_text())
    assert len(history) == 1


def test_train_baseline_models(pipeline, tmp_path):
    cfg = pipeline / "config.json"
    for kind in ("lr", "mlp"):
        out = tmp_path / kind
        assert main(["train", "--config", str(cfg),
                     "--set", f"out_dir={out}",
                     "--set", "seeds=[0]",
                     "--set", f"model={kind}"]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["model"] == kind
        assert (out / "seed_0" / "model.ckpt").exists()


def test_config_error_exit_codes(pipeline, tmp_path):
    cfg = pipeline / "config.json"
    missing = tmp_path / "nope.json"
    assert main(["train", "--config", str(missing)]) == EXIT_DATA
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    assert main(["train", "--config", str(bad_json)]) == EXIT_CONFIG
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"notes": "x", "out_dir": "y", "bogus": 1}))
    assert main(["train", "--config", str(unknown)]) == EXIT_CONFIG
    assert main(["train", "--config", str(cfg), "--set", "model=svm",
                 "--set", f"out_dir={tmp_path / 'svm'}"]) == EXIT_CONFIG
    assert main(["train", "--config", str(cfg), "--set", "seeds=[]"]) == EXIT_CONFIG
    assert main(["train", "--config", str(cfg), "--set", "no_equals_sign"]) == EXIT_CONFIG
    assert main(["definitely-not-a-command"]) == EXIT_CONFIG


def test_apply_overrides_nested_and_json_values():
    config = {"train": {"lr": 0.01}}
    apply_overrides(config, ["train.lr=0.5", "train.new=7", "name=plain-string", "flag=true"])
    assert config == {"train": {"lr": 0.5, "new": 7}, "name": "plain-string", "flag": True}


# -- eval -----------------------------------------------------------------------


def test_eval_reproduces_training_report(pipeline, tmp_path, capsys):
    run = pipeline / "run" / "seed_0"
    out = tmp_path / "eval"
    assert main(["eval", "--checkpoint", str(run / "model.ckpt"),
                 "--data", str(run / "data"), "--split", "test",
                 "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "measure" in stdout and "macro" in stdout
    assert "by correlation" in stdout  # rank comparison printed for cnn
    metrics_json = json.loads((out / "metrics.json").read_text())
    training_report = json.loads((run / "report.json").read_text())
    assert metrics_json == training_report
    predictions = (out / "predictions.ndjson").read_text().strip().splitlines()
    assert len(predictions) == 15
    first = json.loads(predictions[0])
    assert set(first) == {"visit_id", "probs", "predicted"}
    assert len(first["probs"]) == 8
    correlation = json.loads((out / "correlation.json").read_text())
    assert set(correlation) == {"covariance", "correlation", "defined", "pmi", "rank_comparison"}


def test_eval_validation_split(pipeline, capsys):
    run = pipeline / "run" / "seed_0"
    assert main(["eval", "--checkpoint", str(run / "model.ckpt"),
                 "--data", str(run / "data"), "--split", "validation"]) == EXIT_OK


def test_eval_baseline_checkpoint(pipeline, tmp_path, capsys):
    out = tmp_path / "lr"
    assert main(["train", "--config", str(pipeline / "config.json"),
                 "--set", f"out_dir={out}", "--set", "seeds=[0]",
                 "--set", "model=lr"]) == EXIT_OK
    capsys.readouterr()
    eval_out = tmp_path / "eval"
    assert main(["eval", "--checkpoint", str(out / "seed_0" / "model.ckpt"),
                 "--data", str(out / "seed_0" / "data"), "--out", str(eval_out)]) == EXIT_OK
    assert "by correlation" not in capsys.readouterr().out
    assert not (eval_out / "correlation.json").exists()
    assert (eval_out / "metrics.json").exists()


def test_eval_error_exit_codes(pipeline, tmp_path):
    run = pipeline / "run" / "seed_0"
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.ckpt"),
                 "--data", str(run / "data")]) == EXIT_DATA
    assert main(["eval", "--checkpoint", str(run / "model.ckpt"),
                 "--data", str(tmp_path / "nodata")]) == EXIT_DATA
    assert main(["eval", "--checkpoint", str(run / "model.ckpt"),
                 "--data", str(run / "data"), "--split", "holdout"]) == EXIT_CONFIG


# -- analyze ----------------------------------------------------------------------


def test_analyze_outputs(pipeline, tmp_path, capsys):
    run = pipeline / "run" / "seed_0"
    out = tmp_path / "analysis"
    assert main(["analyze", "--checkpoint", str(run / "model.ckpt"),
                 "--data", str(run / "data"), "--out", str(out),
                 "--perplexity", "4", "--tsne-iters", "400",
                 "--ngram-notes", "25", "--top-ngrams", "3"]) == EXIT_OK
    neighbors = (out / "neighbors.csv").read_text().strip().splitlines()
    assert neighbors[0] == "query,neighbor,distance"
    assert len(neighbors) >= 2
    ngrams = (out / "filter_ngrams.csv").read_text().strip().splitlines()
    assert ngrams[0] == "filter_id,window,rank,ngram,value"
    assert len(ngrams) >= 2
    tsne_rows = (out / "tsne.csv").read_text().strip().splitlines()
    assert tsne_rows[0].startswith("visit_id,x,y,med_0")
    assert len(tsne_rows) == 1 + 15
    meta = json.loads((out / "analyze_meta.json").read_text())
    assert meta["kl_final"] < meta["kl_initial"]
    assert meta["tsne_points"] == 15


def test_analyze_rejects_baseline_checkpoint(pipeline, tmp_path):
    out = tmp_path / "mlp"
    assert main(["train", "--config", str(pipeline / "config.json"),
                 "--set", f"out_dir={out}", "--set", "seeds=[0]",
                 "--set", "model=mlp"]) == EXIT_OK
    assert main(["analyze", "--checkpoint", str(out / "seed_0" / "model.ckpt"),
                 "--data", str(out / "seed_0" / "data"),
                 "--out", str(tmp_path / "a")]) == EXIT_CONFIG


def test_analyze_refuses_untrained_checkpoint(pipeline, tmp_path):
    run = pipeline / "run" / "seed_0"
    cfg = model.TrainConfig(embedding_dim=8, dense_units=6, filters_per_window=2, outputs=8)
    prepared = corpus.load_prepared(run / "data")
    fresh = tmp_path / "fresh.ckpt"
    model.save_checkpoint(fresh, model.init_params(cfg, prepared.vocab.size))
    assert main(["analyze", "--checkpoint", str(fresh), "--data", str(run / "data"),
                 "--out", str(tmp_path / "a")]) == EXIT_DATA


def test_analyze_bad_perplexity_is_config_error(pipeline, tmp_path):
    run = pipeline / "run" / "seed_0"
    assert main(["analyze", "--checkpoint", str(run / "model.ckpt"),
                 "--data", str(run / "data"), "--out", str(tmp_path / "a"),
                 "--perplexity", "500"]) == EXIT_CONFIG


# -- report ----------------------------------------------------------------------


def test_report_formats(pipeline, capsys):
    manifest = str(pipeline / "run" / "manifest.json")
    assert main(["report", "--manifest", manifest]) == EXIT_OK
    table = capsys.readouterr().out
    assert "model: cnn  seeds: 2" in table
    assert "macro" in table and "metoprolol" in table

    assert main(["report", "--manifest", manifest, "--format", "csv"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "name,precision,recall,f1"
    assert any(line.startswith("macro,") for line in lines)

    assert main(["report", "--manifest", manifest, "--format", "json"]) == EXIT_OK
    obj = json.loads(capsys.readouterr().out)
    assert obj == json.loads(Path(manifest).read_text())


def test_report_missing_manifest(tmp_path):
    assert main(["report", "--manifest", str(tmp_path / "nope.json")]) == EXIT_DATA
