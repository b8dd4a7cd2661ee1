import os
import sys
import time
from dataclasses import dataclass

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> (title, passed, detail); filled in by test_acceptance
VERDICTS: dict[int, tuple[str, bool, str]] = {}
TITLES = {
    1: "SSIM properties",
    2: "HAC matches the naive transcription",
    3: "augmentation exactness",
    4: "gradient checks",
    5: "training sanity",
    6: "classifier quality",
    7: "replay effectiveness",
    8: "replay efficiency",
    9: "fallback guarantee",
    10: "bench determinism",
}

PIPELINE_SEED = 11
SCREENCASTS = 28


@dataclass
class Pipeline:
    manifest: object
    result: object
    predictor: object
    train_seconds: float
    checkpoint_path: str


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Screencasts -> dataset -> trained classifier, built once per session."""
    from renderwait.renderstate import Predictor, build_dataset, train_classifier
    from renderwait.suites import generate_screencasts

    root = tmp_path_factory.mktemp("pipeline")
    casts = generate_screencasts(root / "screencasts", SCREENCASTS, PIPELINE_SEED)
    manifest = build_dataset(casts, root / "dataset", seed=PIPELINE_SEED)
    start = time.process_time()
    result = train_classifier(manifest, epochs=20, seed=PIPELINE_SEED)
    seconds = time.process_time() - start
    path = root / "model.ckpt"
    path.write_bytes(result.checkpoint)
    return Pipeline(manifest, result, Predictor(result.checkpoint), seconds, str(path))


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in TITLES.items():
        if n in VERDICTS:
            _, ok, detail = VERDICTS[n]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")
        else:
            terminalreporter.write_line(f"[FAIL] {n:2d}. {title}: not evaluated")
