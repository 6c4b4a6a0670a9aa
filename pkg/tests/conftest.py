"""Shared fixtures: tiny corpora and reference scoring helpers."""
from __future__ import annotations

import numpy as np
import pytest

from memegenres import synthetic


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """30 images / 3 genres at reduced size: enough structure to exercise the
    whole pipeline without paying full-corpus extraction costs."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    corpus = synthetic.make_genre_corpus(root, n_images=30, n_genres=3, seed=7)
    return corpus


def reference_purity(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    total = 0
    for c in np.unique(y_pred):
        members = y_true[y_pred == c]
        _, counts = np.unique(members, return_counts=True)
        total += counts.max()
    return total / len(y_true)


def reference_ari(a: np.ndarray, b: np.ndarray) -> float:
    from scipy.special import comb

    ua, ub = np.unique(a), np.unique(b)
    cm = np.zeros((len(ua), len(ub)), dtype=np.int64)
    for i, x in enumerate(ua):
        for j, y in enumerate(ub):
            cm[i, j] = np.sum((a == x) & (b == y))
    sum_cells = comb(cm, 2).sum()
    sum_rows = comb(cm.sum(axis=1), 2).sum()
    sum_cols = comb(cm.sum(axis=0), 2).sum()
    pairs = comb(len(a), 2)
    expected = sum_rows * sum_cols / pairs
    maximum = (sum_rows + sum_cols) / 2
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))
