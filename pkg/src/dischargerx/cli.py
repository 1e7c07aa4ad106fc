"""Command-line pipeline: parse notes, generate synthetic corpora, build
datasets, train models over several seeds, evaluate, and analyze.

One JSON config drives a run; individual keys can be overridden with
repeated ``--set dotted.key=value`` flags.  Every artifact a run writes is
a deterministic function of the config and input files, so re-running a
command reproduces outputs byte for byte; the run manifest records SHA-256
hashes of the config, the input data, and each checkpoint to make that
checkable.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, baselines, corpus, metrics, model, notes, synth
from .ndgrad import BadCheckpoint, NonFiniteValue, load_tensors
from .notes import NUM_MEDICATIONS, MalformedNote, Medication


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


# -- run configuration -----------------------------------------------------------


@dataclass
class RunConfig:
    notes: str
    out_dir: str
    model: str = "cnn"  # cnn | lr | mlp
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    max_len: int = 500
    min_count: int = 5
    tfidf_dim: int = 2500
    train: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    lr_l2: float = 1.0
    mlp_hidden: int = 32
    mlp_l2: float = 1e-4
    tsne_notes: int = 2000
    tsne_perplexity: float = 30.0
    tsne_iters: int = 1000
    top_ngrams: int = 5

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "notes" not in obj or "out_dir" not in obj:
            raise ConfigError("config must name 'notes' (input file) and 'out_dir'")
        cfg = cls(**obj)
        if cfg.model not in ("cnn", "lr", "mlp"):
            raise ConfigError(f"model must be cnn, lr or mlp, got {cfg.model!r}")
        if not cfg.seeds:
            raise ConfigError("seeds must be non-empty")
        return cfg

    def to_dict(self) -> dict:
        return {
            "notes": self.notes,
            "out_dir": self.out_dir,
            "model": self.model,
            "seeds": list(self.seeds),
            "max_len": self.max_len,
            "min_count": self.min_count,
            "tfidf_dim": self.tfidf_dim,
            "train": dict(self.train),
            "baseline": dict(self.baseline),
            "lr_l2": self.lr_l2,
            "mlp_hidden": self.mlp_hidden,
            "mlp_l2": self.mlp_l2,
            "tsne_notes": self.tsne_notes,
            "tsne_perplexity": self.tsne_perplexity,
            "tsne_iters": self.tsne_iters,
            "top_ngrams": self.top_ngrams,
        }


def _parse_override(text: str) -> tuple[list[str], object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects dotted.key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    for text in overrides:
        path, value = _parse_override(text)
        node = config
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot descend into non-object config key {part!r}")
        node[path[-1]] = value
    return config


def load_run_config(path: str, overrides: list[str]) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    return RunConfig.from_dict(apply_overrides(obj, overrides))


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- subcommands -----------------------------------------------------------------


def cmd_parse(args) -> int:
    in_path = Path(args.input)
    if not in_path.exists():
        raise DataError(f"input file not found: {in_path}")
    parsed: list[notes.ParsedNote] = []
    counts = {"total": 0, "parsed": 0, "no_label": 0, "malformed": 0}
    for raw in notes.read_raw_notes(in_path):
        counts["total"] += 1
        try:
            note = notes.parse_note(raw)
        except MalformedNote as exc:
            counts["malformed"] += 1
            print(f"skipping malformed note: {exc}", file=sys.stderr)
            continue
        if note is None:
            counts["no_label"] += 1
            continue
        counts["parsed"] += 1
        parsed.append(note)
    notes.write_parsed_notes(parsed, args.output)
    if args.summary:
        _write_json(args.summary, counts)
    print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


_PRESETS = {
    "trigger": synth.trigger_corpus_spec,
    "pair": synth.correlated_pair_spec,
    "identity": synth.identity_corpus_spec,
}


def cmd_synth(args) -> int:
    if args.spec:
        spec = synth.load_spec(args.spec)
    else:
        spec = _PRESETS[args.preset]()
    if args.notes is not None:
        spec.notes = args.notes
        spec.validate()
    generated = synth.generate_synthetic_corpus(spec, seed=args.seed)
    notes.write_parsed_notes(generated, args.output)
    if args.render_raw:
        rng = np.random.default_rng(args.seed + 1)
        with open(args.render_raw, "w", encoding="utf-8") as fh:
            for note in generated:
                raw = {"visit_id": note.visit_id, "text": synth.render_note_text(note, rng)}
                fh.write(json.dumps(raw, sort_keys=True) + "\n")
    print(f"wrote {len(generated)} synthetic notes to {args.output}")
    return EXIT_OK


def cmd_build(args) -> int:
    in_path = Path(args.input)
    if not in_path.exists():
        raise DataError(f"input file not found: {in_path}")
    parsed = notes.read_parsed_notes(in_path)
    prepared = corpus.prepare_datasets(
        parsed,
        seed=args.seed,
        max_len=args.max_len,
        min_count=args.min_count,
        tfidf_dim=args.tfidf_dim,
    )
    corpus.save_prepared(prepared, args.output)
    sizes = {name: len(part) for name, part in zip(("train", "validation", "test"), prepared.split)}
    print(json.dumps({"vocab": prepared.vocab.size, **sizes}, sort_keys=True))
    return EXIT_OK


def _vocab_hash(vocab: corpus.Vocabulary) -> str:
    lines = [f"{w}\t{i}\t{vocab.doc_freq.get(w, 0)}" for i, w in enumerate(vocab.words)]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def _flatten_report(report: dict, prefix: str = "") -> dict[str, float]:
    flat: dict[str, float] = {}
    for key, value in report.items():
        name = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            flat.update(_flatten_report(value, name))
        elif isinstance(value, (int, float)):
            flat[name] = float(value)
    return flat


def _train_one_seed(config: RunConfig, parsed, seed: int, seed_dir: Path) -> dict:
    seed_dir.mkdir(parents=True, exist_ok=True)
    prepared = corpus.prepare_datasets(
        parsed,
        seed=seed,
        max_len=config.max_len,
        min_count=config.min_count,
        tfidf_dim=config.tfidf_dim,
    )
    corpus.save_prepared(prepared, seed_dir / "data")
    checkpoint = seed_dir / "model.ckpt"
    if config.model == "cnn":
        train_config = model.TrainConfig.from_dict({**config.train, "seed": seed})
        params, history = model.train(prepared.split, train_config, prepared.vocab.size)
        best = max(history, key=lambda h: h["val_macro_f1"]) if history else {}
        model.save_checkpoint(
            checkpoint,
            params,
            sidecar={
                "trained": True,
                "seed": seed,
                "vocab_hash": _vocab_hash(prepared.vocab),
                "best_epoch": best.get("epoch"),
                "val_macro_f1": best.get("val_macro_f1"),
            },
        )
        report = model.evaluate(params, prepared.split.test)
    else:
        base_config = baselines.BaselineConfig(**{**config.baseline, "seed": seed})
        if config.model == "lr":
            params, history = baselines.train_lr(prepared.split, l2=config.lr_l2, config=base_config)
            probs = params.probs(baselines.tfidf_matrix(prepared.split.test))
        else:
            params, history = baselines.train_mlp(
                prepared.split, hidden=config.mlp_hidden, l2=config.mlp_l2, config=base_config
            )
            probs = params.probs(baselines.admission_matrix(prepared.split.test))
        baselines.save_baseline(checkpoint, params)
        actual = baselines.label_matrix(prepared.split.test).astype(np.int8)
        report = metrics.score_predictions(actual, (probs > 0.5).astype(np.int8))
    _write_json(seed_dir / "history.json", history)
    _write_json(seed_dir / "report.json", report.to_dict())
    with open(seed_dir / "report.csv", "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    return {
        "seed": seed,
        "checkpoint": str(checkpoint.relative_to(seed_dir.parent)),
        "checkpoint_sha256": _sha256_file(checkpoint),
        "report": report.to_dict(),
    }


def cmd_train(args) -> int:
    config = load_run_config(args.config, args.set or [])
    notes_path = Path(config.notes)
    if not notes_path.exists():
        raise DataError(f"notes file not found: {notes_path}")
    parsed = notes.read_parsed_notes(notes_path)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed_entries = []
    for seed in config.seeds:
        entry = _train_one_seed(config, parsed, seed, out_dir / f"seed_{seed}")
        seed_entries.append(entry)
        flat = _flatten_report(entry["report"])
        print(
            f"seed {seed}: macro_f1={flat.get('macro.f1', float('nan')):.4f} "
            f"micro_f1={flat.get('micro.f1', float('nan')):.4f}"
        )
    aggregate: dict[str, dict[str, float]] = {}
    flats = [_flatten_report(e["report"]) for e in seed_entries]
    for key in sorted(flats[0]):
        values = [f[key] for f in flats]
        cell = {"mean": float(np.mean(values))}
        if len(values) >= 2:
            cell["std"] = float(np.std(values, ddof=1))
        aggregate[key] = cell
    manifest = {
        "config": config.to_dict(),
        "config_sha256": _sha256_json(config.to_dict()),
        "data": {"notes": config.notes, "sha256": _sha256_file(notes_path)},
        "model": config.model,
        "seeds": seed_entries,
        "aggregate": aggregate,
    }
    _write_json(out_dir / "manifest.json", manifest)
    print(f"manifest written to {out_dir / 'manifest.json'}")
    return EXIT_OK


def _load_any_checkpoint(path: Path):
    """Returns ("cnn", ModelParams, sidecar) or ("lr"/"mlp", params, extra)."""
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    _, extra = load_tensors(path)
    kind = extra.get("kind")
    if kind in ("lr", "mlp"):
        return kind, baselines.load_baseline(path), extra
    params, sidecar = model.load_checkpoint(path)
    return "cnn", params, sidecar


def _load_dataset(path: str) -> corpus.PreparedData:
    data_dir = Path(path)
    if not data_dir.exists():
        raise DataError(f"dataset directory not found: {data_dir}")
    return corpus.load_prepared(data_dir)


def cmd_eval(args) -> int:
    kind, params, _ = _load_any_checkpoint(Path(args.checkpoint))
    prepared = _load_dataset(args.data)
    split = {"train": prepared.split.train, "validation": prepared.split.validation, "test": prepared.split.test}
    if args.split not in split:
        raise ConfigError(f"split must be train, validation or test, got {args.split!r}")
    examples = split[args.split]
    if not examples:
        raise DataError(f"split {args.split!r} is empty")
    if kind == "cnn":
        report = model.evaluate(params, examples)
        probs = model.predict_probs(params, examples)
    else:
        features = baselines.tfidf_matrix(examples) if kind == "lr" else baselines.admission_matrix(examples)
        probs = params.probs(features)
        actual = baselines.label_matrix(examples).astype(np.int8)
        report = metrics.score_predictions(actual, (probs > 0.5).astype(np.int8))
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "metrics.json", report.to_dict())
        with open(out_dir / "metrics.csv", "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        _write_predictions(out_dir / "predictions.ndjson", examples, probs)
    print(report.to_table())
    if kind == "cnn":
        cov = model.medication_covariance(params, prepared.split.train)
        pmi_matrix = metrics.pmi(np.array([ex.labels for ex in prepared.split.train]))
        comparison = metrics.rank_comparison(cov.correlation, pmi_matrix, cov.defined)
        print()
        print(comparison.to_table())
        if out_dir:
            _write_json(
                out_dir / "correlation.json",
                {
                    "covariance": cov.covariance.tolist(),
                    "correlation": cov.correlation.tolist(),
                    "defined": cov.defined.tolist(),
                    "pmi": pmi_matrix.to_dict(),
                    "rank_comparison": comparison.to_dict(),
                },
            )
    return EXIT_OK


def _write_predictions(path, examples, probs: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex, row in zip(examples, probs):
            predicted = [Medication(i).generic_name for i in range(len(row)) if row[i] > 0.5]
            fh.write(
                json.dumps(
                    {
                        "visit_id": ex.visit_id,
                        "probs": [round(float(p), 8) for p in row],
                        "predicted": predicted,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def cmd_analyze(args) -> int:
    kind, params, sidecar = _load_any_checkpoint(Path(args.checkpoint))
    if kind != "cnn":
        raise ConfigError("analysis needs a CNN checkpoint")
    if not sidecar.get("trained"):
        raise DataError("checkpoint has no training record; refusing to analyze an untrained model")
    prepared = _load_dataset(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = prepared.vocab

    queries = sorted(w for w in notes.load_med_aliases() if w in vocab.doc_freq)
    if not queries:
        by_freq = sorted(vocab.words[2:], key=lambda w: (-vocab.doc_freq.get(w, 0), w))
        queries = by_freq[:10]
    neighbors = analysis.neighbor_report(queries, params.embedding.data, vocab)
    analysis.write_neighbors_csv(neighbors, out_dir / "neighbors.csv")

    ngram_examples = prepared.split.train[: args.ngram_notes]
    ngrams = analysis.filter_ngram_report(params, ngram_examples, vocab, top_n=args.top_ngrams)
    analysis.write_filter_ngrams_csv(ngrams, out_dir / "filter_ngrams.csv")

    test = prepared.split.test
    rng = np.random.default_rng(args.seed)
    if len(test) > args.tsne_notes:
        chosen = rng.choice(len(test), size=args.tsne_notes, replace=False)
        subset = [test[i] for i in sorted(chosen)]
    else:
        subset = test
    vectors = analysis.note_vectors(params, subset)
    labels = np.array([ex.labels for ex in subset], dtype=np.int8)
    embedding = analysis.tsne(
        vectors,
        perplexity=args.perplexity,
        iters=args.tsne_iters,
        seed=args.seed,
        labels=labels,
    )
    analysis.write_tsne_csv(embedding, [ex.visit_id for ex in subset], out_dir / "tsne.csv")
    _write_json(
        out_dir / "analyze_meta.json",
        {
            "sample_seed": args.seed,
            "tsne_points": len(subset),
            "tsne_perplexity": args.perplexity,
            "tsne_iters": args.tsne_iters,
            "kl_initial": embedding.kl_initial,
            "kl_final": embedding.kl_final,
            "ngram_notes": len(ngram_examples),
        },
    )
    print(f"analysis written to {out_dir} (kl {embedding.kl_initial:.4f} -> {embedding.kl_final:.4f})")
    return EXIT_OK


def cmd_report(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    aggregate = manifest.get("aggregate", {})
    if args.format == "json":
        print(json.dumps(manifest, indent=2, sort_keys=True))
        return EXIT_OK
    rows = []
    meds = [Medication(i).generic_name for i in range(NUM_MEDICATIONS)]
    for name in meds + ["micro", "macro", "pooled_micro"]:
        prefix = f"per_class.{name}" if name in meds else name
        row = {"name": name}
        for measure in ("precision", "recall", "f1"):
            cell = aggregate.get(f"{prefix}.{measure}")
            if cell is None:
                continue
            text = f"{cell['mean']:.3f}"
            if "std" in cell:
                text += f" ±{cell['std']:.3f}"
            row[measure] = text
        if len(row) > 1:
            rows.append(row)
    if args.format == "csv":
        print("name,precision,recall,f1")
        for row in rows:
            print(f"{row['name']},{row.get('precision', '')},{row.get('recall', '')},{row.get('f1', '')}")
        return EXIT_OK
    width = max(len(r["name"]) for r in rows) + 2
    cell_width = max(len(r.get(m, "")) for r in rows for m in ("precision", "recall", "f1")) + 2
    print(f"model: {manifest.get('model')}  seeds: {len(manifest.get('seeds', []))}")
    print("".ljust(width) + "".join(m.rjust(cell_width) for m in ("precision", "recall", "f1")))
    for row in rows:
        print(
            row["name"].ljust(width)
            + "".join(row.get(m, "").rjust(cell_width) for m in ("precision", "recall", "f1"))
        )
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dischargerx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="parse raw discharge notes into structured records")
    p.add_argument("--in", dest="input", required=True, help="raw notes, ndjson {visit_id, text}")
    p.add_argument("--out", dest="output", required=True, help="parsed notes ndjson")
    p.add_argument("--summary", help="optional JSON file for parse counts")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("synth", help="generate a synthetic parsed corpus")
    p.add_argument("--spec", help="synthetic corpus spec JSON")
    p.add_argument("--preset", choices=sorted(_PRESETS), default="trigger")
    p.add_argument("--notes", type=int, help="override note count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="output", required=True, help="parsed notes ndjson")
    p.add_argument("--render-raw", help="also write raw note text ndjson here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="split a parsed corpus and build vocab/features")
    p.add_argument("--in", dest="input", required=True, help="parsed notes ndjson")
    p.add_argument("--out", dest="output", required=True, help="dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=500)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--tfidf-dim", type=int, default=2500)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train a model per seed and write a manifest")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory from build/train")
    p.add_argument("--split", default="test")
    p.add_argument("--out", help="directory for metrics.json/csv and predictions")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="neighbors, filter n-grams and t-SNE for a CNN checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory from build/train")
    p.add_argument("--out", required=True, help="output directory for CSVs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--tsne-iters", type=int, default=1000)
    p.add_argument("--tsne-notes", type=int, default=2000)
    p.add_argument("--ngram-notes", type=int, default=200)
    p.add_argument("--top-ngrams", type=int, default=5)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="render a run manifest's aggregate metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse errors already carry exit 1
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except (ConfigError, synth.InvalidSpec, analysis.BadPerplexity) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        DataError,
        corpus.EmptyCorpus,
        corpus.TooFewExamples,
        MalformedNote,
        BadCheckpoint,
        model.SequenceTooShort,
        analysis.TooFewPoints,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteValue, model.DegenerateVariance, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
