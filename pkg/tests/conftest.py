import math

import numpy as np
import pytest

from lsphase.detect import build_partitions, detect
from lsphase.evaluate import ExperimentConfig, standard_synthesis
from lsphase.pipeline import analyze


def plane_wave(size: int, period: float, theta: float, phase0: float = 0.0) -> np.ndarray:
    """``cos(k (cos theta x + sin theta y) + phase0)`` on a ``size``-square grid."""
    y, x = np.mgrid[0:size, 0:size].astype(float)
    k = 2 * math.pi / period
    return np.cos(k * (math.cos(theta) * x + math.sin(theta) * y) + phase0)


def interior(size: int, margin: int):
    return (slice(margin, size - margin),) * 2


@pytest.fixture(scope="session")
def standard_clean():
    """Default 70-minutia image without noise, analyzed once per session."""
    cfg = ExperimentConfig(noise="none", seed=0)
    syn = standard_synthesis(cfg)
    ana = analyze(syn.image, cfg.analysis)
    return cfg, syn, ana


@pytest.fixture(scope="session")
def standard_noisy():
    cfg = ExperimentConfig(noise="spr:0.61", seed=1)
    syn = standard_synthesis(cfg)
    ana = analyze(syn.image, cfg.analysis)
    return cfg, syn, ana


def run_detect(syn, ana, partitions=3):
    parts = build_partitions(count=partitions)
    return detect(syn.image, ana.tensor.complex, ana.freq, ana.phase, parts)


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
