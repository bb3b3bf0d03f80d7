import re
import struct

import numpy as np
import pytest

from aclnet.audio import AudioClip


def write_pcm16(path, frames: np.ndarray, rate: int) -> None:
    """Minimal independent WAV writer: ``frames`` is int16 of shape (n,) or (n, channels)."""
    frames = np.asarray(frames, dtype="<i2")
    channels = 1 if frames.ndim == 1 else frames.shape[1]
    data = frames.tobytes()
    with open(path, "wb") as f:
        f.write(b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE")
        f.write(b"fmt " + struct.pack("<IHHIIHH", 16, 1, channels, rate, rate * 2 * channels,
                                      2 * channels, 16))
        f.write(b"data" + struct.pack("<I", len(data)) + data)


def toy_corpus(n_per_class: int = 10, rate: int = 16000, seconds: float = 1.0, seed: int = 0):
    """Sine tones (class 0) and white noise (class 1)."""
    rng = np.random.default_rng(seed)
    t = np.arange(round(rate * seconds)) / rate
    items = []
    for _ in range(n_per_class):
        f = rng.uniform(200, 2000)
        items.append((AudioClip(0.5 * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)), rate), 0))
        items.append((AudioClip(0.3 * rng.standard_normal(t.size), rate), 1))
    return items


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# acceptance summary: tests named test_c<N>_... are grouped by criterion N

_CRITERION = re.compile(r"::test_c(\d+)_")
_outcomes: dict[int, list[tuple[str, bool]]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None or "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::", 1)[1]
        _outcomes.setdefault(int(m.group(1)), []).append((name, report.outcome == "passed"))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        results = _outcomes[n]
        failed = [name for name, ok in results if not ok]
        verdict = "FAIL" if failed else "PASS"
        detail = f"{len(results) - len(failed)}/{len(results)} checks"
        if failed:
            detail += "; failed: " + ", ".join(failed)
        terminalreporter.write_line(f"criterion {n}: {verdict} ({detail})")
