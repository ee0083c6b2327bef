"""Shared fixtures: synthetic turbofan files and small dataset builders."""

import numpy as np
import pytest

from lipem.likelihood import Dataset


def synthetic_trajectory(rng, lifetime, start=480.0, decay=1.2, noise=2.0):
    """One engine's (cycle, sensor) path: linear decay plus noise."""
    cycles = np.arange(1.0, lifetime + 1.0)
    sensor = start - decay * cycles + rng.normal(0.0, noise, size=cycles.size)
    return cycles, sensor


def write_cmapss_file(path, engine_rows):
    """Write 26-column whitespace rows for a map of engine id -> (cycles, sensor9).

    Column layout: unit id, cycle, 3 operational settings, 21 sensors.
    Sensor 9 lands in the 14th column; every other channel is filler.
    """
    lines = []
    for unit in sorted(engine_rows):
        cycles, sensor9 = engine_rows[unit]
        for cyc, s9 in zip(cycles, sensor9):
            row = [float(unit), float(cyc), 0.0, 0.0, 100.0]
            sensors = [1.0] * 21
            sensors[8] = float(s9)
            row.extend(sensors)
            lines.append(" ".join(f"{v:.4f}" for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def cmapss_dir(tmp_path):
    """Directory holding a small synthetic train_FD001.txt with 6 engines.

    Lifetimes are spread so that exactly one engine falls in the shortest
    decile when a strong-prior file is derived from trajectory length.
    """
    rng = np.random.default_rng(42)
    lifetimes = {1: 60, 2: 95, 3: 80, 4: 120, 5: 70, 6: 105}
    engines = {}
    for unit, lifetime in lifetimes.items():
        engines[unit] = synthetic_trajectory(rng, lifetime)
    write_cmapss_file(tmp_path / "train_FD001.txt", engines)
    return tmp_path


@pytest.fixture
def gaussian_pair():
    """A tiny target plus two well-sized sources around distinct means."""
    rng = np.random.default_rng(42)
    target = Dataset(rng.normal(0.0, 1.0, size=(4, 1)))
    near = Dataset(rng.normal(0.05, 1.0, size=(200, 1)))
    far = Dataset(rng.normal(5.0, 1.0, size=(200, 1)))
    return target, [near, far]
