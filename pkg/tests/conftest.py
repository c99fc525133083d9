import csv
import pathlib

import numpy as np
import pytest

from leafdistill.data import ingest_csv

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def mini_fraud_path() -> pathlib.Path:
    return FIXTURES / "mini_fraud.csv"


@pytest.fixture(scope="session")
def mini_fraud(mini_fraud_path):
    ds, dropped = ingest_csv(mini_fraud_path, label_column="is_fraud")
    assert dropped == 0
    return ds


@pytest.fixture(scope="session")
def e2e_csv(tmp_path_factory) -> pathlib.Path:
    """Pipeline-scale CSV: 600 rows, 4 features, three shifted groups, ~12%
    positives so every k-means cluster and split side keeps both classes."""
    rng = np.random.default_rng(424242)
    direction = np.array([0.8, -0.6, 0.0, 0.0])
    rows = []
    for g in range(3):
        center = np.array([6.0 * g, -3.0 * g, g * 1.5, 0.0])
        n = 200
        X = center + rng.normal(0.0, 1.0, (n, 4))
        # positives live in one tail of each group, inside the cloud
        y = ((X - center) @ direction > 1.1).astype(int)
        rows.extend((X[i], y[i]) for i in range(n))
    path = tmp_path_factory.mktemp("e2e") / "transactions.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["v0", "v1", "v2", "v3", "flagged"])
        for x, label in rows:
            writer.writerow([repr(float(v)) for v in x] + [str(int(label))])
    return path
