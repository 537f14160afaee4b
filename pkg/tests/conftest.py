from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from coocspec.ingest import default_data_dir
from coocspec.sparse import InteractionMatrix


def random_sparse(n, m, density, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((n, m)) < density
    r, c = np.nonzero(mask)
    return InteractionMatrix.from_coo(r, c, (n, m))


@st.composite
def small_matrices(draw, max_dim=12, weighted=False):
    n = draw(st.integers(1, max_dim))
    m = draw(st.integers(1, max_dim))
    mask = draw(st.lists(st.booleans(), min_size=n * m, max_size=n * m))
    a = np.array(mask, dtype=np.float64).reshape(n, m)
    if weighted:
        w = draw(st.lists(st.floats(0.25, 4.0), min_size=n * m, max_size=n * m))
        a *= np.array(w).reshape(n, m)
    return InteractionMatrix.from_dense(a)


def ml100k_path() -> Path:
    return default_data_dir() / "ml-100k" / "u.data"


@pytest.fixture(scope="session")
def ml100k():
    p = ml100k_path()
    if not p.is_file():
        pytest.skip("MovieLens-100K not present; run scripts/fetch_movielens.py")
    from coocspec.ingest import load_interactions

    return load_interactions(p)
