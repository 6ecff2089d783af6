"""Shared fixtures and small factories for hand-built objects."""

from __future__ import annotations

import numpy as np
import pytest

from drivestyle.dataset import Window
from drivestyle.models.ensemble import TreeEnsemble
from drivestyle.models.tree import LEAF, Tree
from drivestyle.simgen import CHANNELS, DT, Trace


def random_tree(rng: np.random.Generator, n_features: int, max_depth: int, n_outputs: int,
                split_prob: float = 0.8) -> Tree:
    """A random tree with consistent random covers; features may repeat along a path."""
    feature, threshold, left, right, cover, value = [], [], [], [], [], []

    def grow(depth: int) -> int:
        i = len(feature)
        for arr in (feature, threshold, left, right, cover, value):
            arr.append(None)
        if depth < max_depth and (depth == 0 or rng.random() < split_prob):
            feature[i] = int(rng.integers(n_features))
            threshold[i] = float(rng.normal())
            left[i] = grow(depth + 1)
            right[i] = grow(depth + 1)
            cover[i] = cover[left[i]] + cover[right[i]]
            value[i] = np.zeros(n_outputs)
        else:
            feature[i], threshold[i], left[i], right[i] = LEAF, 0.0, LEAF, LEAF
            cover[i] = float(rng.integers(1, 50))
            value[i] = rng.normal(size=n_outputs)
        return i

    grow(0)
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                np.array(cover, dtype=float), np.vstack(value))


def random_ensemble(rng: np.random.Generator, kind: str | None = None, n_features: int | None = None,
                    n_classes: int | None = None) -> TreeEnsemble:
    kind = kind or ("forest" if rng.random() < 0.5 else "boosted")
    m = n_features or int(rng.integers(1, 9))
    c = n_classes or int(rng.integers(1, 4))
    trees = [random_tree(rng, m, int(rng.integers(1, 5)), c) for _ in range(int(rng.integers(1, 6)))]
    base = rng.normal(size=c) if kind == "boosted" else None
    return TreeEnsemble(trees, kind, c, m, base)


def make_trace(n: int, label: int = 0, source_id: str = "t", **overrides) -> Trace:
    """Constant-channel trace of ``n`` samples; keyword arrays or scalars override channels."""
    columns = {c: np.zeros(n) for c in CHANNELS}
    columns["t"] = np.arange(n) * DT
    columns["speed"] = np.full(n, 5.0)
    columns["speed_limit"] = np.full(n, 13.89)
    columns["obstacle_distance"] = np.full(n, 10.5)
    for name, val in overrides.items():
        columns[name] = np.broadcast_to(np.asarray(val, dtype=float), (n,)).copy()
    return Trace(columns, label, source_id)


def make_window(trace: Trace) -> Window:
    return Window(trace, trace.label, trace.source_id, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
