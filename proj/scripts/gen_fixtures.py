#!/usr/bin/env python3
"""Regenerates the synthetic fixtures under fixtures/.

The bundles are small classification tasks in the harness interchange format
(task.json + train.jsonl + test.jsonl), plus a filler corpus, mock endpoint
scripts, and ready-to-run config files. Everything is deterministic, so the
checked-in files should match a fresh run of this script byte for byte.
"""

import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"

NOUNS = ["lamp", "river", "stone", "cloud", "ledger", "violin",
         "orchard", "signal", "kettle", "harbor", "meadow", "circuit"]
ADJECTIVES = ["quiet", "amber", "broad", "hollow", "brisk", "pale",
              "sturdy", "faint", "mossy", "level"]
VERBS = ["hums", "drifts", "settles", "turns", "glows", "waits"]

TASKS = [
    ("colors", "object", ["Red", "Blue"]),
    ("parity", "number", ["Even", "Odd"]),
    ("climate", "report", ["Hot", "Cold", "Mild"]),
    ("gates", "gate", ["Open", "Closed"]),
]


def sentence(i: int) -> str:
    return (f"The {ADJECTIVES[i % 10]} {NOUNS[i % 12]} {VERBS[i % 6]} "
            f"near the {NOUNS[(i // 3) % 12]}.")


def write_bundle(name: str, field: str, options: list[str],
                 per_class: int = 20, n_test: int = 12) -> None:
    out = ROOT / "tasks" / name
    out.mkdir(parents=True, exist_ok=True)
    choices = (", ".join(options[:-1]) + " or " + options[-1]
               if len(options) > 2 else " or ".join(options))
    title = field.capitalize()
    spec = {
        "name": name,
        "task_type": "classification",
        "options": options,
        "instruction": f"Label each {field} entry as {choices}.",
        "instruction_2": f"Decide which of {choices} best describes the {field} entry.",
        "demonstration_prompt": f"{title}: {{{field}}}\nAnswer: {{label}}",
        "inference_prompt": f"{title}: {{{field}}}\nAnswer:",
    }
    (out / "task.json").write_text(json.dumps(spec, indent=2) + "\n")

    word = 0
    with open(out / "train.jsonl", "w") as fh:
        for i in range(per_class):
            for option in options:
                fh.write(json.dumps({field: f"{name} train {i} {sentence(word)}",
                                     "label": option}) + "\n")
                word += 1
    with open(out / "test.jsonl", "w") as fh:
        for i in range(n_test):
            fh.write(json.dumps({field: f"{name} test {i} {sentence(word)}",
                                 "label": options[i % len(options)]}) + "\n")
            word += 1


def write_filler(n_words: int = 9000) -> None:
    parts = []
    words = 0
    i = 0
    while words < n_words:
        parts.append(sentence(i))
        parts.append("\n" if i % 9 == 8 else " ")
        words += 7
        i += 1
    (ROOT / "filler.txt").write_text("".join(parts) + "\n")


def write_mock_scripts() -> None:
    out = ROOT / "mock_scripts"
    out.mkdir(parents=True, exist_ok=True)
    scripts = {
        # Every query answered correctly.
        "perfect.json": {
            "seed": 7,
            "task_registry": "../tasks",
            "rules": [{"accuracy": 1.0, "noise": "instance"}],
        },
        # Tasks in the first half of a lifelong stream degrade; replicates
        # are noiseless so verdicts are deterministic.
        "degraded.json": {
            "seed": 7,
            "task_registry": "../tasks",
            "rules": [
                {"context": "lifelong", "depth_lo": -0.5, "depth_hi": 0.49,
                 "accuracy": 0.8, "noise": "instance"},
                {"accuracy": 1.0, "noise": "instance"},
            ],
        },
        # Perfect classification plus needle echoing for recall sweeps.
        "echo.json": {
            "seed": 7,
            "task_registry": "../tasks",
            "rules": [{"accuracy": 1.0, "noise": "instance"}],
            "generation": [{"pattern": "The best thing to do in San Francisco",
                            "mode": "echo_line"}],
        },
    }
    for name, doc in scripts.items():
        (out / name).write_text(json.dumps(doc, indent=2) + "\n")


def write_configs() -> None:
    out = ROOT / "configs"
    out.mkdir(parents=True, exist_ok=True)
    base_endpoint = {
        "base_url": "mock:fixtures/mock_scripts/degraded.json",
        "model": "mock-model",
        "max_parallel": 4,
    }
    configs = {
        "lifelong_mock.json": {
            "task_registry": "fixtures/tasks",
            "mode": "scale_shot",
            "grid": [1, 2],
            "permutations": 3,
            "replicates": 5,
            "seed": 2024,
            "output_dir": "runs/lifelong-mock",
            "endpoint": base_endpoint,
        },
        "controlled_mock.json": {
            "task_registry": "fixtures/tasks",
            "mode": "controlled",
            "n_shot": 2,
            "replicates": 3,
            "seed": 2024,
            "filler_corpus": "fixtures/filler.txt",
            "output_dir": "runs/controlled-mock",
            "endpoint": base_endpoint,
        },
        "niah_mock.json": {
            "task_registry": "fixtures/tasks",
            "mode": "niah",
            "seed": 2024,
            "filler_corpus": "fixtures/filler.txt",
            "output_dir": "runs/niah-mock",
            "niah": {
                "context_lengths": [256, 512, 1024, 2048],
                "depths": [0.0, 0.25, 0.5, 0.75, 1.0],
            },
            "endpoint": {
                "base_url": "mock:fixtures/mock_scripts/echo.json",
                "model": "mock-model",
                "max_parallel": 4,
            },
        },
    }
    for name, doc in configs.items():
        (out / name).write_text(json.dumps(doc, indent=2) + "\n")


def main() -> None:
    for name, field, options in TASKS:
        write_bundle(name, field, options)
    write_filler()
    write_mock_scripts()
    write_configs()
    print(f"fixtures written under {ROOT}")


if __name__ == "__main__":
    main()
