import json

import numpy as np
import pytest

from engine_proc import CRITERION_LINES, mlp_checkpoint


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("exporter acceptance")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture()
def corpus(tmp_path):
    """Raw-sample dataset: 3 classes of (T, 3, 3) motion snippets + index."""
    rng = np.random.default_rng(77)
    root = tmp_path / "raw"
    root.mkdir()
    classes = []
    for label in range(3):
        entry = {"label": label, "name": f"gesture-{label}", "train": [], "test": []}
        for split, count in (("train", 6), ("test", 2)):
            for i in range(count):
                t = int(rng.integers(5, 14))  # varied lengths exercise resampling
                arr = np.sin(0.3 * (label + 1) * np.arange(t))[:, None, None] + (
                    rng.standard_normal((t, 3, 3)) * 0.05
                )
                rel = f"cls{label}_{split}_{i}.npy"
                np.save(root / rel, arr)
                entry[split].append(rel)
        classes.append(entry)
    (root / "index.json").write_text(json.dumps({"classes": classes}))

    ckpt = tmp_path / "encoder.pt"
    layers = mlp_checkpoint(ckpt, np.random.default_rng(5))
    return {"root": root, "checkpoint": ckpt, "layers": layers}
