"""Regenerate mini_fraud.csv: 200 rows, 5 features, exactly 10 positives.

Run from the repository root:  python tests/fixtures/gen_mini_fraud.py
The committed CSV is canonical; this script only documents its provenance.
"""

import csv
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).parent / "mini_fraud.csv"
FEATURES = ["amount", "account_age_days", "txn_hour", "n_prev_txns", "risk_score"]


def main() -> None:
    rng = np.random.default_rng(20240917)
    n, n_pos = 200, 10
    X = np.empty((n, 5))
    X[:, 0] = np.round(rng.lognormal(3.0, 1.0, n), 2)        # amount
    X[:, 1] = rng.integers(1, 3000, n)                        # account_age_days
    X[:, 2] = rng.integers(0, 24, n)                          # txn_hour
    X[:, 3] = rng.integers(0, 50, n)                          # n_prev_txns
    X[:, 4] = np.round(rng.beta(2, 8, n), 4)                  # risk_score
    y = np.zeros(n, dtype=int)
    pos_idx = rng.choice(n, size=n_pos, replace=False)
    y[pos_idx] = 1
    # fraud pocket: large off-hours amounts on young accounts, high risk
    X[pos_idx, 0] = np.round(rng.lognormal(5.5, 0.4, n_pos), 2)
    X[pos_idx, 1] = rng.integers(1, 90, n_pos)
    X[pos_idx, 2] = rng.choice([1, 2, 3, 4], n_pos)
    X[pos_idx, 4] = np.round(rng.beta(8, 2, n_pos), 4)

    with open(OUT, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURES + ["is_fraud"])
        for i in range(n):
            row = [repr(float(X[i, 0])), str(int(X[i, 1])), str(int(X[i, 2])),
                   str(int(X[i, 3])), repr(float(X[i, 4])), str(int(y[i]))]
            writer.writerow(row)
    print(f"wrote {OUT}: {n} rows, {y.sum()} positives")


if __name__ == "__main__":
    main()
