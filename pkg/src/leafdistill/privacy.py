"""Memorization-risk measures: nearest-neighbor cosine similarity and a
shadow-model membership-inference attack.

Similarity is exact: every source row's maximum cosine similarity to any
target row, computed in blocks so large matrices never materialize a full
pairwise product at once. The attack trains a shadow forest on half of the
training data, fits a logistic model on the shadow's prediction features to
separate members from non-members, then applies that model to a target
forest's predictions. Attack AUC near 0.5 on train-vs-holdout means the
target leaks no membership signal.

Both measures expect standardized features, matching the representation
the classifiers train on; raw monetary scales would dominate the angles.
"""

from dataclasses import dataclass

import numpy as np

from ._parallel import ordered_map
from ._rng import derive_seed, rng_for
from ._validation import check_matrix
from .data import Dataset
from .errors import ArgumentError
from .evalmetrics import roc_auc
from .forest import ForestParams, RandomForest, evaluator_defaults
from .logistic import LogisticRegression

ATTACK_FEATURE_SPEC = ("p_positive", "p_max", "entropy")


@dataclass(frozen=True)
class SimilarityReport:
    """Mean and per-row max cosine similarity from source rows to a target set."""

    mean_nn_cosine: float
    per_sample_max: np.ndarray
    source_name: str
    target_name: str

    def to_dict(self, include_vector: bool = True) -> dict:
        out = {
            "source": self.source_name,
            "target": self.target_name,
            "mean_nn_cosine": float(self.mean_nn_cosine),
            "max_nn_cosine": float(self.per_sample_max.max()),
            "n_source": int(self.per_sample_max.size),
        }
        if include_vector:
            out["per_sample_max"] = [float(v) for v in self.per_sample_max]
        return out


def _unit_rows(X: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ArgumentError(f"{name} row {int(zero[0])} has zero norm")
    return X / norms[:, None]


def nn_cosine_similarity(
    source,
    target,
    source_name: str = "source",
    target_name: str = "target",
    block_size: int = 1024,
) -> SimilarityReport:
    """Exact nearest-neighbor cosine similarity of each source row to target."""
    S = check_matrix(source, "source")
    O = check_matrix(target, "target")
    if S.shape[0] == 0 or O.shape[0] == 0:
        raise ArgumentError("source and target must be non-empty")
    if S.shape[1] != O.shape[1]:
        raise ArgumentError(
            f"feature dimension mismatch: source {S.shape[1]} vs target {O.shape[1]}"
        )
    S = _unit_rows(S, "source")
    O = _unit_rows(O, "target")

    starts = range(0, S.shape[0], block_size)

    def block_max(start: int) -> np.ndarray:
        block = S[start : start + block_size]
        return (block @ O.T).max(axis=1)

    per_sample = np.concatenate(ordered_map(block_max, list(starts)))
    return SimilarityReport(
        mean_nn_cosine=float(per_sample.mean()),
        per_sample_max=per_sample,
        source_name=source_name,
        target_name=target_name,
    )


def attack_features(model, X) -> np.ndarray:
    """Prediction-derived features: [P(1), max class prob, entropy]."""
    p1 = np.asarray(model.predict_proba(check_matrix(X)), dtype=np.float64)
    p1 = np.clip(p1, 0.0, 1.0)
    p_max = np.maximum(p1, 1.0 - p1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -(p1 * np.log(p1) + (1.0 - p1) * np.log(1.0 - p1))
    ent[~np.isfinite(ent)] = 0.0  # 0*log(0) = 0 at the endpoints
    return np.column_stack([p1, p_max, ent])


@dataclass(frozen=True)
class AttackModel:
    """Logistic membership attack over prediction features."""

    model: LogisticRegression
    weights: np.ndarray
    bias: float
    feature_spec: tuple[str, ...] = ATTACK_FEATURE_SPEC

    def membership_probability(self, target_model, X) -> np.ndarray:
        return self.model.predict_proba(attack_features(target_model, X))


def train_shadow_attack(
    real_train: Dataset,
    seed: int,
    shadow_params: ForestParams | None = None,
) -> tuple[RandomForest, AttackModel]:
    """Train the shadow forest on half the data and fit the attack model.

    The shadow's own training half provides member examples (attack label
    1); the held-back half provides non-members (label 0). The returned
    attack model can then score any forest's predictions.
    """
    n = real_train.n_samples
    if n < 4:
        raise ArgumentError("need at least 4 samples to split for a shadow model")
    perm = rng_for(seed, "mia-split").permutation(n)
    half = n // 2
    members_idx = np.sort(perm[:half])
    nonmembers_idx = np.sort(perm[half:])
    ds_members = real_train.subset(members_idx)
    ds_nonmembers = real_train.subset(nonmembers_idx)
    for name, part in (("member", ds_members), ("non-member", ds_nonmembers)):
        if np.unique(part.labels).size < 2:
            raise ArgumentError(f"shadow {name} half lacks both classes; reshuffle or add data")

    params = shadow_params or evaluator_defaults()
    shadow = RandomForest.from_params(params)
    shadow.seed = derive_seed(seed, "mia-shadow")
    shadow.fit(ds_members.features, ds_members.labels)

    feats = np.vstack(
        [attack_features(shadow, ds_members.features), attack_features(shadow, ds_nonmembers.features)]
    )
    attack_labels = np.concatenate(
        [np.ones(ds_members.n_samples, dtype=np.int64), np.zeros(ds_nonmembers.n_samples, dtype=np.int64)]
    )
    model = LogisticRegression().fit(feats, attack_labels)
    attack = AttackModel(model=model, weights=model.weights_.copy(), bias=model.bias_)
    return shadow, attack


@dataclass(frozen=True)
class MIAReport:
    """Attack discrimination across the three evaluation groups."""

    auc_train_vs_holdout: float
    auc_train_vs_synthetic: float
    mean_membership_prob_synthetic: float

    def to_dict(self) -> dict:
        return {
            "auc_train_vs_holdout": self.auc_train_vs_holdout,
            "auc_train_vs_synthetic": self.auc_train_vs_synthetic,
            "mean_membership_prob_synthetic": self.mean_membership_prob_synthetic,
        }


def run_mia(
    target: RandomForest,
    attack: AttackModel,
    members: Dataset,
    holdout: Dataset,
    synthetic_X,
) -> MIAReport:
    """Score the attack on the target model's predictions for all groups."""
    synthetic_X = check_matrix(synthetic_X, "synthetic")
    member_scores = attack.membership_probability(target, members.features)
    holdout_scores = attack.membership_probability(target, holdout.features)
    synthetic_scores = attack.membership_probability(target, synthetic_X)

    auc_holdout = roc_auc(
        np.concatenate([member_scores, holdout_scores]),
        np.concatenate([np.ones(member_scores.size), np.zeros(holdout_scores.size)]),
    )
    auc_synthetic = roc_auc(
        np.concatenate([member_scores, synthetic_scores]),
        np.concatenate([np.ones(member_scores.size), np.zeros(synthetic_scores.size)]),
    )
    return MIAReport(
        auc_train_vs_holdout=float(auc_holdout),
        auc_train_vs_synthetic=float(auc_synthetic),
        mean_membership_prob_synthetic=float(synthetic_scores.mean()),
    )
