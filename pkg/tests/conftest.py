import numpy as np
import pytest

from driftbench.dataset import ClipRecord, FeatureSet, Manifest


def make_manifest(rows):
    """rows: (clip_id, domain, category, row_index) tuples."""
    records = tuple(ClipRecord(*r) for r in rows)
    return Manifest(
        records=records,
        domains=tuple(sorted({r.domain for r in records})),
        categories=tuple(sorted({r.category for r in records})),
    )


def make_features(values):
    values = np.asarray(values, dtype=np.float32)
    if values.ndim == 2:
        values = values[:, None, :]
    n, t, d = values.shape
    return FeatureSet(n_clips=n, temporal_count=t, feature_dim=d, values=values)


@pytest.fixture
def tiny_manifest():
    return make_manifest([
        ("a0", "east", "pour", 0),
        ("a1", "east", "stir", 1),
        ("b0", "west", "pour", 2),
        ("b1", "west", "stir", 3),
    ])


@pytest.fixture
def tiny_features():
    rng = np.random.default_rng(0)
    return make_features(rng.standard_normal((4, 3)))
