#!/usr/bin/env python3
"""Drive the command-line pipeline end to end.

Everything the other demos do programmatically also works from the
shell: synth (or parse, for real notes), train with a JSON run config,
eval, analyze, report. This script shells out to the CLI exactly as a
user would, inside a temporary directory, and shows the artifacts each
step leaves behind. Training runs two seeds and aggregates them; the
manifest records content hashes, so re-running a config reproduces the
same report bytes.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

CLI = [sys.executable, "-m", "dischargerx.cli"]


def run(*args: str) -> None:
    cmd = CLI + list(args)
    print("\n$ dischargerx " + " ".join(args))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.stdout:
        print(proc.stdout.rstrip())
    if proc.returncode != 0:
        print(proc.stderr.rstrip())
        raise SystemExit(proc.returncode)


def main() -> None:
    with tempfile.TemporaryDirectory(prefix="dischargerx-demo-") as tmp:
        root = Path(tmp)
        notes = root / "notes.ndjson"
        run_dir = root / "run"

        run("synth", "--preset", "trigger", "--notes", "300", "--seed", "9",
            "--out", str(notes))

        config = {
            "notes": str(notes),
            "out_dir": str(run_dir),
            "model": "cnn",
            "seeds": [0, 1],
            "max_len": 150,
            "min_count": 2,
            "tfidf_dim": 100,
            "train": {
                "embedding_dim": 24,
                "dense_units": 12,
                "filters_per_window": 6,
                "l2": 0.01,
                "keep_rate": 0.7,
                "max_epochs": 10,
                "patience": 10,
                "batch_size": 32,
            },
        }
        config_path = root / "run.json"
        config_path.write_text(json.dumps(config, indent=2))
        print(f"\nwrote run config to {config_path.name}")

        run("train", "--config", str(config_path))
        run("report", "--manifest", str(run_dir / "manifest.json"))

        # Each seed re-splits the corpus, so the dataset lives next to
        # its checkpoint.
        ckpt = run_dir / "seed_0" / "model.ckpt"
        data = run_dir / "seed_0" / "data"
        run("eval", "--checkpoint", str(ckpt), "--data", str(data),
            "--split", "test", "--out", str(root / "eval"))
        run("analyze", "--checkpoint", str(ckpt), "--data", str(data),
            "--out", str(root / "analysis"), "--perplexity", "5",
            "--tsne-iters", "300", "--tsne-notes", "40", "--ngram-notes", "40")

        print("\nrun directory now holds:")
        for path in sorted(run_dir.rglob("*")):
            if path.is_file():
                print(f"  {path.relative_to(root)}")


if __name__ == "__main__":
    main()
