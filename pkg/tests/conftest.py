"""Shared fixtures and the acceptance-criteria report."""

import numpy as np
import pytest

from vbxdiar.simcon import Histogram, SimStats, save_stats, write_wav

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion as a PASS/FAIL line, then assert it."""

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        request.config.stash[_ACCEPTANCE].append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_ACCEPTANCE]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def sim_inputs(tmp_path):
    """Four tone 'speakers' in 20 s WAVs, a relative-path pool manifest, stats, noise and an RIR."""
    rate = 8000
    rng = np.random.default_rng(0)
    lines = []
    for k in range(4):
        t = np.arange(20 * rate) / rate
        write_wav(tmp_path / f"src{k}.wav", rate, np.rint(5000 * np.sin(2 * np.pi * (200 + 50 * k) * t)).astype(np.int16))
        segs, pos = [], 0.2
        while pos + 2.5 < 20:
            d = float(rng.uniform(1.0, 2.0))
            segs.append(f"{pos:.3f}:{pos + d:.3f}")
            pos += d + 0.3
        lines.append(f"spk{k} src{k}.wav " + " ".join(segs))
    (tmp_path / "pool.txt").write_text("\n".join(lines) + "\n")
    st = SimStats(Histogram(0.01, np.array([0] * 20 + [5] * 30)), Histogram(0.01, np.array([0] * 10 + [5] * 40)),
                  Histogram(0.01, np.array([0] * 5 + [5] * 20)))
    save_stats(st, tmp_path / "stats.txt")
    (tmp_path / "noise").mkdir()
    write_wav(tmp_path / "noise" / "n.wav", rate, rng.normal(0, 1000, 3 * rate).astype(np.int16))
    (tmp_path / "rirs").mkdir()
    write_wav(tmp_path / "rirs" / "r.wav", rate, (20000 * np.exp(-np.arange(400) / 60.0)).astype(np.int16))
    return tmp_path
