"""Loading, validation, and splitting of wide-format choice datasets.

One CSV row per observation. Default column layout:

* ``choice`` -- chosen alternative index (0-based),
* ``att{k}_alt{j}`` -- attribute ``k`` (1-based) of alternative ``j`` (0-based),
* ``cov{c}`` -- categorical covariate ``c`` (1-based), integer level codes,
* ``avail_alt{j}`` -- optional 0/1 availability flags; absent means all
  alternatives are available.

Column names can be remapped through :class:`CsvSchema`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class SchemaError(ValueError):
    """The CSV does not match the declared column schema."""


class DataValidationError(ValueError):
    """The parsed data violates a dataset invariant."""


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_wide_csv`.

    ``attrs`` maps attribute label -> per-alternative column names, in
    alternative order. ``avail`` is None for all-available datasets.
    When a field is left empty the default naming pattern is auto-detected.
    """

    choice: str = "choice"
    attrs: dict[str, list[str]] = field(default_factory=dict)
    covs: list[str] = field(default_factory=list)
    avail: list[str] | None = None


@dataclass(frozen=True)
class ChoiceDataset:
    """Immutable choice dataset: N observations x J alternatives x K attributes."""

    attrs: np.ndarray          # float (N, J, K)
    covs: np.ndarray           # int (N, C), dense 0-based level codes
    cov_levels: tuple[int, ...]
    choice: np.ndarray         # int (N,)
    avail: np.ndarray          # bool (N, J)
    cov_code_maps: tuple[tuple[int, ...], ...] = ()  # dense code -> original code

    @property
    def n_obs(self) -> int:
        return self.attrs.shape[0]

    @property
    def n_alts(self) -> int:
        return self.attrs.shape[1]

    @property
    def n_attrs(self) -> int:
        return self.attrs.shape[2]

    @property
    def n_covs(self) -> int:
        return self.covs.shape[1]

    def __post_init__(self):
        self.attrs.setflags(write=False)
        self.covs.setflags(write=False)
        self.choice.setflags(write=False)
        self.avail.setflags(write=False)
        _validate(self)

    def equals(self, other: "ChoiceDataset") -> bool:
        return (
            np.array_equal(self.attrs, other.attrs)
            and np.array_equal(self.covs, other.covs)
            and self.cov_levels == other.cov_levels
            and np.array_equal(self.choice, other.choice)
            and np.array_equal(self.avail, other.avail)
        )

    def subset(self, rows: np.ndarray) -> "ChoiceDataset":
        rows = np.asarray(rows, dtype=int)
        return ChoiceDataset(
            attrs=self.attrs[rows].copy(),
            covs=self.covs[rows].copy(),
            cov_levels=self.cov_levels,
            choice=self.choice[rows].copy(),
            avail=self.avail[rows].copy(),
            cov_code_maps=self.cov_code_maps,
        )


def _validate(ds: ChoiceDataset) -> None:
    n, j, _ = ds.attrs.shape
    if j < 2:
        raise DataValidationError(f"need at least 2 alternatives, got {j}")
    if not np.all(np.isfinite(ds.attrs)):
        bad = sorted(set(np.argwhere(~np.isfinite(ds.attrs))[:, 0].tolist()))
        raise DataValidationError(f"non-finite attribute values in rows {bad[:10]}")
    if ds.choice.shape != (n,) or ds.avail.shape != (n, j):
        raise DataValidationError("choice/availability shapes do not match attrs")
    if np.any((ds.choice < 0) | (ds.choice >= j)):
        bad = np.nonzero((ds.choice < 0) | (ds.choice >= j))[0]
        raise DataValidationError(f"choice index out of range in rows {bad[:10].tolist()}")
    avail_counts = ds.avail.sum(axis=1)
    if np.any(avail_counts < 2):
        bad = np.nonzero(avail_counts < 2)[0]
        raise DataValidationError(
            f"rows {bad[:10].tolist()} have fewer than 2 available alternatives"
        )
    chosen_avail = ds.avail[np.arange(n), ds.choice]
    if not np.all(chosen_avail):
        bad = np.nonzero(~chosen_avail)[0]
        raise DataValidationError(
            f"chosen alternative unavailable on row {bad[0]}"
            + (f" (and {bad.size - 1} more rows)" if bad.size > 1 else "")
        )
    if ds.covs.size:
        for c, levels in enumerate(ds.cov_levels):
            col = ds.covs[:, c]
            if np.any((col < 0) | (col >= levels)):
                bad = np.nonzero((col < 0) | (col >= levels))[0]
                raise DataValidationError(
                    f"covariate {c} has codes outside [0, {levels}) in rows {bad[:10].tolist()}"
                )


def _numeric(df: pd.DataFrame, col: str) -> np.ndarray:
    values = pd.to_numeric(df[col], errors="coerce")
    if values.isna().any():
        row = int(values.index[values.isna()][0])
        raise DataValidationError(f"non-numeric value in column {col!r}, row {row}")
    return values.to_numpy()


def _detect(columns, pattern: str):
    rx = re.compile(pattern)
    hits = {}
    for col in columns:
        m = rx.fullmatch(col)
        if m:
            hits[tuple(int(g) for g in m.groups())] = col
    return hits


def load_wide_csv(path, schema: CsvSchema | None = None) -> ChoiceDataset:
    """Load and validate a wide-format CSV, returning an immutable dataset."""
    schema = schema or CsvSchema()
    df = pd.read_csv(path)
    cols = list(df.columns)

    if schema.choice not in cols:
        raise SchemaError(f"missing choice column {schema.choice!r}")

    attr_map = dict(schema.attrs)
    if not attr_map:
        hits = _detect(cols, r"att(\d+)_alt(\d+)")
        if not hits:
            raise SchemaError("no attribute columns found (expected att{k}_alt{j})")
        ks = sorted({k for k, _ in hits})
        js = sorted({j for _, j in hits})
        for k in ks:
            names = [hits.get((k, j)) for j in js]
            if any(n is None for n in names):
                raise SchemaError(f"incomplete alternative columns for attribute {k}")
            attr_map[f"x{k}"] = names
    for label, names in attr_map.items():
        for name in names:
            if name not in cols:
                raise SchemaError(f"missing attribute column {name!r} for {label}")

    n_alts = len(next(iter(attr_map.values())))
    if any(len(v) != n_alts for v in attr_map.values()):
        raise SchemaError("attributes declare differing numbers of alternatives")

    cov_cols = list(schema.covs)
    if not cov_cols:
        hits = _detect(cols, r"cov(\d+)")
        cov_cols = [hits[key] for key in sorted(hits)]
    for name in cov_cols:
        if name not in cols:
            raise SchemaError(f"missing covariate column {name!r}")

    avail_cols = schema.avail
    if avail_cols is None:
        hits = _detect(cols, r"avail_alt(\d+)")
        if hits:
            avail_cols = [hits[key] for key in sorted(hits)]
            if len(avail_cols) != n_alts:
                raise SchemaError(
                    f"found {len(avail_cols)} availability columns for {n_alts} alternatives"
                )

    n = len(df)
    attrs = np.empty((n, n_alts, len(attr_map)))
    for k, names in enumerate(attr_map.values()):
        for j, name in enumerate(names):
            attrs[:, j, k] = _numeric(df, name)

    choice_raw = _numeric(df, schema.choice)
    if np.any(choice_raw != np.round(choice_raw)):
        row = int(np.nonzero(choice_raw != np.round(choice_raw))[0][0])
        raise DataValidationError(f"non-integer choice value on row {row}")
    choice = choice_raw.astype(int)

    if avail_cols:
        avail = np.column_stack([_numeric(df, c) for c in avail_cols]).astype(bool)
    else:
        avail = np.ones((n, n_alts), dtype=bool)

    covs = np.zeros((n, len(cov_cols)), dtype=int)
    cov_levels = []
    code_maps = []
    for c, name in enumerate(cov_cols):
        raw = _numeric(df, name)
        if np.any(raw != np.round(raw)):
            row = int(np.nonzero(raw != np.round(raw))[0][0])
            raise DataValidationError(f"non-integer covariate code in {name!r}, row {row}")
        codes = np.unique(raw.astype(int))
        remap = {orig: dense for dense, orig in enumerate(codes.tolist())}
        covs[:, c] = [remap[v] for v in raw.astype(int)]
        cov_levels.append(len(codes))
        code_maps.append(tuple(codes.tolist()))

    return ChoiceDataset(
        attrs=attrs,
        covs=covs,
        cov_levels=tuple(cov_levels),
        choice=choice,
        avail=avail,
        cov_code_maps=tuple(code_maps),
    )


def save_wide_csv(ds: ChoiceDataset, path) -> None:
    """Write a dataset in the default column layout; exact float round-trip."""
    data = {"choice": ds.choice}
    for k in range(ds.n_attrs):
        for j in range(ds.n_alts):
            data[f"att{k + 1}_alt{j}"] = ds.attrs[:, j, k]
    for c in range(ds.n_covs):
        codes = ds.cov_code_maps[c] if ds.cov_code_maps else tuple(range(ds.cov_levels[c]))
        data[f"cov{c + 1}"] = np.asarray(codes)[ds.covs[:, c]]
    if not ds.avail.all():
        for j in range(ds.n_alts):
            data[f"avail_alt{j}"] = ds.avail[:, j].astype(int)
    pd.DataFrame(data).to_csv(path, index=False)


def split_holdout(ds: ChoiceDataset, in_sample_frac: float, seed: int):
    """Disjoint seeded row split into (in-sample, holdout) datasets."""
    if not 0.0 < in_sample_frac < 1.0:
        raise ValueError("in_sample_frac must be in (0, 1)")
    n_in = int(round(in_sample_frac * ds.n_obs))
    if n_in == 0 or n_in == ds.n_obs:
        raise ValueError(
            f"in_sample_frac={in_sample_frac} yields an empty partition for N={ds.n_obs}"
        )
    perm = np.random.default_rng(seed).permutation(ds.n_obs)
    return ds.subset(np.sort(perm[:n_in])), ds.subset(np.sort(perm[n_in:]))
