"""Shared fixtures: trained models cached on disk across test sessions.

Training a full-size model takes one to several minutes, so each
``(kind, n, seed, config)`` combination is trained once and stored under the
pytest cache directory (or ``$RNNFILTER_MODEL_CACHE`` when set).  Training is
deterministic, so a cached file is identical to a fresh run.
"""

import hashlib
import os
from dataclasses import replace
from pathlib import Path

import pytest

from rnnfilter.cells import init_params, load_model, save_model
from rnnfilter.signal import DatasetSpec, build_dataset
from rnnfilter.training import TrainConfig, train

TRAIN_CONFIG = TrainConfig()


class ModelCache:
    def __init__(self, root: Path):
        self.root = root
        self._datasets = {}
        self._models = {}

    def dataset(self, seed):
        if seed not in self._datasets:
            self._datasets[seed] = build_dataset(DatasetSpec(seed=seed))
        return self._datasets[seed]

    def get(self, kind, n, seed=0, cfg=TRAIN_CONFIG):
        cfg = replace(cfg, seed=seed)
        tag = hashlib.sha256(repr((kind, n, cfg, DatasetSpec(seed=seed))).encode()).hexdigest()[:12]
        key = f"{kind}{n}_seed{seed}_{tag}"
        if key in self._models:
            return self._models[key]
        path = self.root / f"{key}.txt"
        if path.exists():
            model = load_model(path)
        else:
            model, _ = train(init_params(kind, n, 1, seed), self.dataset(seed), cfg)
            tmp = path.with_suffix(".tmp")
            save_model(model, tmp)
            tmp.replace(path)
        self._models[key] = model
        return model


@pytest.fixture(scope="session")
def models(request):
    root = os.environ.get("RNNFILTER_MODEL_CACHE")
    root = Path(root) if root else Path(request.config.cache.mkdir("rnnfilter-models"))
    root.mkdir(parents=True, exist_ok=True)
    return ModelCache(root)


@pytest.fixture(scope="session")
def lstm10(models):
    return models.get("lstm", 10, 0)


# -- acceptance reporting -------------------------------------------------------

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record a named acceptance result; the outcome line is printed at session end."""

    def record(number, title, passed, detail):
        _CRITERIA[number] = (title, bool(passed), detail)
        assert passed, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {number:>2}. {title}: {detail}")
