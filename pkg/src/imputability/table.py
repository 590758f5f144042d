"""Tabular data model: masked numeric matrices with named, role-tagged columns.

The mask is the single source of truth for missingness. Internally every
masked cell holds NaN, but code should never test for NaN; it should test
the mask. All constructors freeze the underlying arrays, so a DataMatrix
can be shared freely.

Column roles:

* ``feature``      columns that receive injected missingness and get imputed
* ``driver``       the always-observed severity column that drives injection
* ``demographic``  always-observed background columns (kept in the analysis)
* ``class``        the always-observed class/stage column
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateColumnError,
    IngestionError,
    OverlapError,
    SchemaError,
)

ROLES = ("feature", "driver", "demographic", "class")

MIN_PAIR_OVERLAP = 3


@dataclass(frozen=True)
class Column:
    """One named column: role plus values (NaN where masked)."""

    name: str
    role: str
    values: np.ndarray


@dataclass(frozen=True)
class ColumnStats:
    """Summary statistics over a column's observed cells."""

    mean: float
    sd: float
    median: float
    observed_count: int


class DataMatrix:
    """An immutable n_rows x n_cols numeric table with a missingness mask.

    Parameters
    ----------
    values : array_like, shape (n_rows, n_cols)
        Cell values. Entries at masked positions are ignored.
    mask : array_like of bool, same shape
        True marks an observed cell.
    names : sequence of str
        Unique column names, one per column.
    roles : sequence of str
        One role from ROLES per column.
    """

    def __init__(self, values, mask, names, roles):
        values = np.array(values, dtype=float)
        mask = np.array(mask, dtype=bool)
        if values.ndim != 2:
            raise SchemaError("values must be a 2-d array")
        if mask.shape != values.shape:
            raise SchemaError(
                f"mask shape {mask.shape} does not match values shape {values.shape}"
            )
        names = tuple(str(n) for n in names)
        roles = tuple(str(r) for r in roles)
        if len(names) != values.shape[1] or len(roles) != values.shape[1]:
            raise SchemaError("need one name and one role per column")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        bad = sorted({r for r in roles if r not in ROLES})
        if bad:
            raise SchemaError(f"unknown roles {bad}; expected one of {ROLES}")
        if not np.all(np.isfinite(values[mask])):
            raise IngestionError("observed cells must be finite numbers")
        values[~mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        self._values = values
        self._mask = mask
        self._names = names
        self._roles = roles
        self._index = {n: i for i, n in enumerate(names)}

    # -- basic accessors ---------------------------------------------------

    @property
    def values(self) -> np.ndarray:
        """Read-only (n_rows, n_cols) float array, NaN at masked cells."""
        return self._values

    @property
    def mask(self) -> np.ndarray:
        """Read-only boolean array, True = observed."""
        return self._mask

    @property
    def names(self):
        return self._names

    @property
    def roles(self):
        return self._roles

    @property
    def n_rows(self) -> int:
        return self._values.shape[0]

    @property
    def n_cols(self) -> int:
        return self._values.shape[1]

    @property
    def shape(self):
        return self._values.shape

    def column_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    def column(self, name: str) -> Column:
        j = self.column_index(name)
        return Column(name, self._roles[j], self._values[:, j])

    @property
    def columns(self):
        return tuple(self.column(n) for n in self._names)

    def role_of(self, name: str) -> str:
        return self._roles[self.column_index(name)]

    def names_with_role(self, role: str):
        return tuple(n for n, r in zip(self._names, self._roles) if r == role)

    @property
    def feature_names(self):
        return self.names_with_role("feature")

    # -- derived tables ----------------------------------------------------

    def with_values(self, values, mask=None) -> "DataMatrix":
        """Same columns, new cells (and optionally a new mask)."""
        if mask is None:
            mask = self._mask
        return DataMatrix(values, mask, self._names, self._roles)

    def select(self, names) -> "DataMatrix":
        """Column subset, in the order given."""
        idx = [self.column_index(n) for n in names]
        return DataMatrix(
            self._values[:, idx],
            self._mask[:, idx],
            [self._names[j] for j in idx],
            [self._roles[j] for j in idx],
        )

    def drop(self, names) -> "DataMatrix":
        gone = set(names)
        for n in gone:
            self.column_index(n)
        keep = [n for n in self._names if n not in gone]
        return self.select(keep)

    def equals(self, other: "DataMatrix") -> bool:
        """Exact equality: metadata, mask, and observed cell values."""
        return (
            self._names == other._names
            and self._roles == other._roles
            and np.array_equal(self._mask, other._mask)
            and np.array_equal(
                self._values[self._mask], other._values[other._mask]
            )
        )

    def __repr__(self):
        observed = int(self._mask.sum())
        total = self._mask.size
        return (
            f"DataMatrix({self.n_rows} rows x {self.n_cols} cols, "
            f"{total - observed} of {total} cells missing)"
        )


# -- schema files ----------------------------------------------------------


def read_schema(path) -> dict:
    """Read a flat key-value schema file mapping column name -> role."""
    schema = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'name = role'")
            name, role = (part.strip() for part in line.split("=", 1))
            if role not in ROLES:
                raise SchemaError(
                    f"{path}:{lineno}: unknown role {role!r} for column {name!r}"
                )
            if name in schema:
                raise SchemaError(f"{path}:{lineno}: duplicate column {name!r}")
            schema[name] = role
    return schema


def write_schema(schema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, role in schema.items():
            fh.write(f"{name} = {role}\n")


# -- CSV ingestion and serialization ----------------------------------------


def load_csv(path, schema, missing_token: str = "NA", delimiter: str = ",") -> DataMatrix:
    """Load a delimited text file into a DataMatrix.

    ``schema`` maps column names to roles; every schema column must appear
    in the header. Header columns absent from the schema default to the
    ``feature`` role. A cell equal to ``missing_token`` or entirely empty
    is recorded as missing.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise SchemaError(f"{path}: duplicate column names {dupes}")
        missing_cols = sorted(set(schema) - set(header))
        if missing_cols:
            raise SchemaError(f"{path}: schema columns absent from header: {missing_cols}")
        roles = [schema.get(name, "feature") for name in header]

        rows = []
        mask_rows = []
        for rownum, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise IngestionError(
                    f"{path}: row {rownum} has {len(record)} cells, expected {len(header)}"
                )
            vals = np.empty(len(header))
            obs = np.empty(len(header), dtype=bool)
            for j, cell in enumerate(record):
                cell = cell.strip()
                if cell == "" or cell == missing_token:
                    vals[j] = np.nan
                    obs[j] = False
                    continue
                try:
                    vals[j] = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {rownum}, column {header[j]!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
                obs[j] = True
            rows.append(vals)
            mask_rows.append(obs)

    if not rows:
        raise IngestionError(f"{path}: no data rows")
    return DataMatrix(np.vstack(rows), np.vstack(mask_rows), header, roles)


def save_csv(m: DataMatrix, path, missing_token: str = "NA", delimiter: str = ",") -> None:
    """Write a DataMatrix back to delimited text, round-trip exact.

    Observed cells are formatted with repr, the shortest string that
    parses back to the identical float.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(m.names)
        for i in range(m.n_rows):
            row = [
                repr(float(m.values[i, j])) if m.mask[i, j] else missing_token
                for j in range(m.n_cols)
            ]
            writer.writerow(row)


def schema_of(m: DataMatrix) -> dict:
    return {n: r for n, r in zip(m.names, m.roles)}


# -- statistics -------------------------------------------------------------


def column_stats(m: DataMatrix, name: str) -> ColumnStats:
    """Mean, sample sd, median, and count over a column's observed cells."""
    j = m.column_index(name)
    observed = m.values[m.mask[:, j], j]
    if observed.size == 0:
        raise DegenerateColumnError(f"column {name!r} has no observed values")
    sd = float(np.std(observed, ddof=1)) if observed.size > 1 else 0.0
    return ColumnStats(
        mean=float(np.mean(observed)),
        sd=sd,
        median=float(np.median(observed)),
        observed_count=int(observed.size),
    )


def standardize(m: DataMatrix) -> DataMatrix:
    """Center and scale each column to observed mean 0, sample sd 1.

    The mask is unchanged. Columns need at least two observed cells and
    nonzero variance; a flat column raises DegenerateColumnError naming it.
    """
    out = np.array(m.values)
    for j, name in enumerate(m.names):
        observed = m.mask[:, j]
        vals = m.values[observed, j]
        if vals.size < 2:
            raise DegenerateColumnError(
                f"column {name!r} has {vals.size} observed values, need at least 2"
            )
        sd = float(np.std(vals, ddof=1))
        if sd == 0.0:
            raise DegenerateColumnError(f"column {name!r} has zero variance")
        out[observed, j] = (vals - np.mean(vals)) / sd
    return m.with_values(out)


def destandardize(values: np.ndarray, ref: DataMatrix) -> np.ndarray:
    """Undo ``standardize`` scaling using the observed stats of ``ref``."""
    out = np.array(values, dtype=float)
    for j in range(ref.n_cols):
        observed = ref.values[ref.mask[:, j], j]
        out[:, j] = out[:, j] * np.std(observed, ddof=1) + np.mean(observed)
    return out


def correlation_matrix(m: DataMatrix) -> np.ndarray:
    """Pairwise-complete Pearson correlation matrix.

    Each entry uses exactly the rows where both columns are observed, so
    the matrix is defined at high missingness (it may then be slightly
    non-positive-definite, which is inherent to pairwise deletion). Every
    pair must share at least MIN_PAIR_OVERLAP jointly observed rows.
    """
    p = m.n_cols
    corr = np.eye(p)
    for a in range(p):
        for b in range(a + 1, p):
            both = m.mask[:, a] & m.mask[:, b]
            n_both = int(both.sum())
            if n_both < MIN_PAIR_OVERLAP:
                raise OverlapError(
                    f"columns {m.names[a]!r} and {m.names[b]!r} share only "
                    f"{n_both} observed rows, need {MIN_PAIR_OVERLAP}"
                )
            x = m.values[both, a]
            y = m.values[both, b]
            sx = np.std(x)
            sy = np.std(y)
            if sx == 0.0 or sy == 0.0:
                raise DegenerateColumnError(
                    f"columns {m.names[a]!r} and {m.names[b]!r} have zero "
                    f"variance over their {n_both} shared rows"
                )
            r = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
            corr[a, b] = corr[b, a] = min(1.0, max(-1.0, r))
    return corr
