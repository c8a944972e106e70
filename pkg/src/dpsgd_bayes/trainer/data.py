"""Tabular CSV loading with a flat ``key = value`` schema file.

The design matrix is ``[phi | enc(s)]``: the encoded non-sensitive columns
followed by the block that encodes the sensitive attribute. Attribute
inference swaps that final block for each candidate value.
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np


class SchemaError(ValueError):
    """The schema or the CSV does not match what the schema describes."""


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise SchemaError(f"not a boolean: {text!r}")


def parse_domain(text: str, kind: str) -> list:
    """``"17..90"`` is an inclusive integer range; otherwise a comma list."""
    text = text.strip()
    if ".." in text and "," not in text:
        lo, hi = (int(v) for v in text.split(".."))
        if hi < lo:
            raise SchemaError(f"empty attribute range {text!r}")
        return list(range(lo, hi + 1))
    items = _split_list(text)
    if not items:
        raise SchemaError("attribute_domain is empty")
    if kind == "numeric":
        try:
            return [float(v) for v in items]
        except ValueError as exc:
            raise SchemaError(f"numeric attribute_domain has a non-number: {exc}") from None
    return items


@dataclass(frozen=True)
class Schema:
    label: str
    sensitive: str
    attribute_domain: tuple
    sensitive_type: str = "categorical"
    categorical: tuple = ()
    numeric: tuple = ()
    label_positive: Optional[str] = None
    include_sensitive: bool = True

    def __post_init__(self):
        if self.sensitive_type not in ("categorical", "numeric"):
            raise SchemaError(f"sensitive_type must be categorical or numeric, got {self.sensitive_type!r}")
        roles = [self.label, self.sensitive, *self.categorical, *self.numeric]
        if len(set(roles)) != len(roles):
            raise SchemaError("a column is assigned more than one role")
        if len(self.attribute_domain) < 1:
            raise SchemaError("attribute_domain is empty")
        if len(set(self.attribute_domain)) != len(self.attribute_domain):
            raise SchemaError("attribute_domain has duplicates")

    @property
    def columns(self) -> list[str]:
        return [self.label, self.sensitive, *self.categorical, *self.numeric]


def read_key_values(path: Union[str, Path]) -> dict[str, str]:
    """Read a flat ``key = value`` file (``#`` comments allowed)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    try:
        parser.read_string("[schema]\n" + text)
    except configparser.Error as exc:
        raise SchemaError(f"cannot parse {path}: {exc}") from None
    return dict(parser["schema"])


def schema_from_mapping(kv: dict[str, str]) -> Schema:
    for key in ("label", "sensitive", "attribute_domain"):
        if key not in kv:
            raise SchemaError(f"schema is missing required key {key!r}")
    kind = kv.get("sensitive_type", "categorical").strip()
    return Schema(
        label=kv["label"].strip(),
        sensitive=kv["sensitive"].strip(),
        attribute_domain=tuple(parse_domain(kv["attribute_domain"], kind)),
        sensitive_type=kind,
        categorical=tuple(_split_list(kv.get("categorical", ""))),
        numeric=tuple(_split_list(kv.get("numeric", ""))),
        label_positive=kv.get("label_positive", "").strip() or None,
        include_sensitive=_parse_bool(kv.get("include_sensitive", "true")),
    )


def load_schema(path: Union[str, Path]) -> Schema:
    return schema_from_mapping(read_key_values(path))


@dataclass
class TabularDataset:
    """Encoded records.

    ``base`` holds the non-sensitive features ``phi``; ``sens_encoding[a]``
    is the encoded block for candidate ``attribute_domain[a]`` and
    ``sens_codes[i]`` the index of record ``i``'s true value.
    """

    base: np.ndarray
    sens_codes: np.ndarray
    sens_encoding: np.ndarray
    labels: np.ndarray
    attribute_domain: list
    feature_names: list[str]
    sensitive_column: str
    label_column: str
    one_hot_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.labels) < 1:
            raise SchemaError("dataset has no rows")
        if self.sens_encoding.shape[0] != len(self.attribute_domain):
            raise SchemaError("one encoding row per attribute value is required")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        return self.base.shape[1] + self.sens_encoding.shape[1]

    @property
    def domain_size(self) -> int:
        return len(self.attribute_domain)

    def design(self, idx=None, codes=None) -> np.ndarray:
        """Design matrix rows ``idx`` with sensitive codes ``codes``
        (default: each record's own value)."""
        idx = np.arange(self.n) if idx is None else np.asarray(idx)
        codes = self.sens_codes[idx] if codes is None else np.asarray(codes)
        return np.hstack([self.base[idx], self.sens_encoding[codes]])

    def variants(self, idx) -> np.ndarray:
        """All ``|A|`` substitutions of each record: shape ``(len(idx), |A|, d)``."""
        idx = np.asarray(idx)
        phi = self.base[idx]
        a = self.domain_size
        out = np.empty((len(idx), a, self.input_dim))
        out[:, :, :phi.shape[1]] = phi[:, None, :]
        out[:, :, phi.shape[1]:] = self.sens_encoding[None, :, :]
        return out


def _standardize(col: np.ndarray):
    mean = float(col.mean())
    std = float(col.std())
    return mean, (std if std > 0 else 1.0)


def _to_float(value: str, column: str, row: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise SchemaError(f"non-numeric cell {value!r} in column {column!r}, row {row}") from None


def encode_records(header: Sequence[str], rows: Sequence[Sequence[str]],
                   schema: Schema) -> TabularDataset:
    index = {name: i for i, name in enumerate(header)}
    for col in schema.columns:
        if col not in index:
            raise SchemaError(f"missing column {col!r}")
    if not rows:
        raise SchemaError("dataset has no rows")

    raw_label = [r[index[schema.label]].strip() for r in rows]
    if schema.label_positive is not None:
        labels = np.array([v == schema.label_positive for v in raw_label], dtype=float)
    else:
        labels = np.array([_to_float(v, schema.label, i) for i, v in enumerate(raw_label)])
        if not np.all((labels == 0) | (labels == 1)):
            raise SchemaError("labels must be 0/1 unless label_positive is given")

    blocks, names, one_hot = [], [], {}
    for col in schema.numeric:
        vals = np.array([_to_float(r[index[col]], col, i) for i, r in enumerate(rows)])
        mean, std = _standardize(vals)
        blocks.append(((vals - mean) / std)[:, None])
        names.append(col)
    for col in schema.categorical:
        vals = [r[index[col]].strip() for r in rows]
        levels = sorted(set(vals))
        lookup = {v: k for k, v in enumerate(levels)}
        block = np.zeros((len(rows), len(levels)))
        block[np.arange(len(rows)), [lookup[v] for v in vals]] = 1.0
        blocks.append(block)
        names.extend(f"{col}={v}" for v in levels)
        one_hot[col] = levels
    base = np.hstack(blocks) if blocks else np.zeros((len(rows), 0))

    domain = list(schema.attribute_domain)
    raw_sens = [r[index[schema.sensitive]].strip() for r in rows]
    if schema.sensitive_type == "numeric":
        dom = np.array(domain, dtype=float)
        vals = np.array([_to_float(v, schema.sensitive, i) for i, v in enumerate(raw_sens)])
        codes = np.empty(len(vals), dtype=int)
        for i, v in enumerate(vals):
            hit = np.nonzero(dom == v)[0]
            if len(hit) == 0:
                raise SchemaError(f"sensitive value {raw_sens[i]!r} (row {i}) outside attribute_domain")
            codes[i] = hit[0]
        mean, std = _standardize(vals)
        encoding = ((dom - mean) / std)[:, None]
        sens_names = [schema.sensitive]
    else:
        lookup = {str(v): k for k, v in enumerate(domain)}
        codes = np.empty(len(raw_sens), dtype=int)
        for i, v in enumerate(raw_sens):
            if v not in lookup:
                raise SchemaError(f"sensitive value {v!r} (row {i}) outside attribute_domain")
            codes[i] = lookup[v]
        encoding = np.eye(len(domain))
        sens_names = [f"{schema.sensitive}={v}" for v in domain]
        one_hot[schema.sensitive] = [str(v) for v in domain]
    if not schema.include_sensitive:
        encoding = np.zeros((len(domain), 0))
        sens_names = []

    return TabularDataset(base=base, sens_codes=codes, sens_encoding=encoding, labels=labels,
                          attribute_domain=domain, feature_names=names + sens_names,
                          sensitive_column=schema.sensitive, label_column=schema.label,
                          one_hot_map=one_hot)


def load_csv(path: Union[str, Path], schema: Union[Schema, str, Path]) -> TabularDataset:
    """Load and encode a CSV file.

    Raises:
        SchemaError: on a missing column, a non-numeric cell in a numeric
            column, or a sensitive value outside the attribute domain.
    """
    if not isinstance(schema, Schema):
        schema = load_schema(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise SchemaError(f"row {i} has {len(r)} cells, header has {len(header)}")
    return encode_records(header, rows, schema)
