"""Synthetic stand-ins for the Adult and Purchase tabular datasets.

Both generators return string rows plus a matching schema file body, so
they exercise exactly the same CSV path as real data.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Union

import numpy as np

ADULT_SIZE = 32561
ADULT_AGE_RANGE = (17, 90)

_ADULT_CATEGORICAL = {
    "workclass": ["Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
                  "Local-gov", "State-gov", "Without-pay"],
    "education": ["Bachelors", "Some-college", "11th", "HS-grad", "Prof-school",
                  "Assoc-acdm", "Assoc-voc", "9th", "7th-8th", "12th", "Masters",
                  "1st-4th", "10th", "Doctorate", "5th-6th", "Preschool"],
    "marital_status": ["Married-civ-spouse", "Divorced", "Never-married", "Separated",
                       "Widowed", "Married-spouse-absent", "Married-AF-spouse"],
    "occupation": ["Tech-support", "Craft-repair", "Other-service", "Sales",
                   "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
                   "Machine-op-inspct", "Adm-clerical", "Farming-fishing",
                   "Transport-moving", "Priv-house-serv", "Protective-serv",
                   "Armed-Forces"],
    "relationship": ["Wife", "Own-child", "Husband", "Not-in-family", "Other-relative",
                     "Unmarried"],
    "race": ["White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"],
    "sex": ["Female", "Male"],
    "native_region": ["US", "Latin-America", "Europe", "Asia", "Other"],
}
_ADULT_NUMERIC = ["education_num", "hours_per_week", "capital_gain", "capital_loss"]


def adult_like(n: int = ADULT_SIZE, seed: int = 0, age_effect: float = 0.6):
    """Mixed categorical/numeric records with a sensitive ``age`` in 17..90.

    ``age_effect`` is the logit change per standard deviation of age, which
    controls how much the label (and hence the gradient) depends on it.

    Returns:
        ``(header, rows, schema_text)``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = ADULT_AGE_RANGE
    age = np.clip(np.round(lo + rng.gamma(4.0, 5.5, n)), lo, hi).astype(int)
    cols: dict[str, np.ndarray] = {}
    logit = -1.2 + age_effect * (age - age.mean()) / age.std()
    for name, levels in _ADULT_CATEGORICAL.items():
        weights = rng.dirichlet(np.full(len(levels), 2.0))
        pick = rng.choice(len(levels), size=n, p=weights)
        cols[name] = np.array(levels, dtype=object)[pick]
        logit = logit + rng.normal(0.0, 0.5, len(levels))[pick]
    edu = np.clip(np.round(rng.normal(10.0, 2.5, n)), 1, 16)
    hours = np.clip(np.round(rng.normal(40.0, 12.0, n)), 1, 99)
    gain = np.where(rng.random(n) < 0.08, np.round(rng.lognormal(8.0, 1.0, n)), 0.0)
    loss = np.where(rng.random(n) < 0.05, np.round(rng.lognormal(7.3, 0.4, n)), 0.0)
    logit = logit + 0.35 * (edu - 10) + 0.03 * (hours - 40) + 0.9 * (gain > 0)
    label = rng.random(n) < 1.0 / (1.0 + np.exp(-logit))
    numeric = {"education_num": edu, "hours_per_week": hours,
               "capital_gain": np.log1p(gain), "capital_loss": np.log1p(loss)}

    header = ["age", *_ADULT_CATEGORICAL, *_ADULT_NUMERIC, "income"]
    rows = []
    for i in range(n):
        rows.append([str(age[i]), *(str(cols[c][i]) for c in _ADULT_CATEGORICAL),
                     *(f"{numeric[c][i]:.6g}" for c in _ADULT_NUMERIC),
                     ">50K" if label[i] else "<=50K"])
    schema = "\n".join([
        "# synthetic Adult-like task; age is the sensitive attribute",
        "label = income",
        "label_positive = >50K",
        "sensitive = age",
        "sensitive_type = numeric",
        f"attribute_domain = {lo}..{hi}",
        "categorical = " + ", ".join(_ADULT_CATEGORICAL),
        "numeric = " + ", ".join(_ADULT_NUMERIC),
        "model = logistic_regression",
        "clip_norm = 1.0",
        "noise_multiplier = 3.51",
        "expected_batch = 256",
        "epochs = 30",
        "learning_rate = 0.5",
        f"seed = {seed}",
        "",
    ])
    return header, rows, schema


def purchase_like(n: int = 20000, n_features: int = 100, seed: int = 0,
                  sensitive_index: int = 0, effect: float = 1.0):
    """Binary shopping-basket features with a binary label.

    Feature ``f{sensitive_index}`` is the sensitive attribute (domain {0, 1}).
    """
    rng = np.random.default_rng(seed)
    rate = rng.beta(1.0, 4.0, n_features)
    X = (rng.random((n, n_features)) < rate).astype(int)
    w = rng.normal(0.0, 1.5 / np.sqrt(n_features * rate.mean()), n_features)
    w[sensitive_index] = effect
    logit = (X - rate) @ w
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(int)
    names = [f"f{j}" for j in range(n_features)]
    header = [*names, "label"]
    rows = [[*map(str, X[i]), str(y[i])] for i in range(n)]
    sens = names[sensitive_index]
    others = [c for c in names if c != sens]
    schema = "\n".join([
        "# synthetic Purchase-like task; one basket item is the sensitive attribute",
        "label = label",
        f"sensitive = {sens}",
        "sensitive_type = categorical",
        "attribute_domain = 0, 1",
        "numeric = " + ", ".join(others),
        "model = logistic_regression",
        "clip_norm = 1.0",
        "noise_multiplier = 1.8",
        "expected_batch = 256",
        "epochs = 30",
        "learning_rate = 0.5",
        f"seed = {seed}",
        "",
    ])
    return header, rows, schema


def write_synthetic(kind: str, out_dir: Union[str, Path], n: int = None, seed: int = 0):
    """Write ``<kind>.csv`` and ``<kind>.schema`` to ``out_dir``; return both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "adult":
        header, rows, schema = adult_like(n or ADULT_SIZE, seed)
    elif kind == "purchase":
        header, rows, schema = purchase_like(n or 20000, seed=seed)
    else:
        raise ValueError(f"unknown synthetic dataset {kind!r}")
    csv_path, schema_path = out / f"{kind}.csv", out / f"{kind}.schema"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    schema_path.write_text(schema)
    return csv_path, schema_path
