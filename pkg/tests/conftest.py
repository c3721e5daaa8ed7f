from pathlib import Path

import numpy as np
import pytest

from contactformer.model import ModelConfig

REPO_ROOT = Path(__file__).resolve().parents[1]
CORPUS_DIR = REPO_ROOT / "data" / "corpus"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    assert CORPUS_DIR.is_dir(), "bundled corpus missing; run scripts/make_corpus.py"
    return CORPUS_DIR


def tiny_config(**overrides) -> ModelConfig:
    """Small deterministic config used across model and training tests."""
    base = dict(n_classes=4, embed_dim=8, n_heads=2, n_layers=1, ffn_dim=32,
                dropout=0.0, max_len=64)
    base.update(overrides)
    return ModelConfig(**base)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random proper rotation via QR with determinant fix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if getattr(rep, "when", None) != "call":
                continue
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                name = nodeid.split("::")[-1].removeprefix("test_")
                rows.append((name, "PASS" if rep.passed else "FAIL"))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in rows:
            terminalreporter.write_line(f"{status}  {name}")
