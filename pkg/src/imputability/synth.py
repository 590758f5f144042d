"""Synthetic complete tables with a controlled latent-factor layout.

Feature columns follow x = sum(terms) + noise * eps + offset with
independent standard-normal factors and noise (Philox stream, so a seed
pins every cell on every platform). Each term is a loading applied to a
factor through its kind: linear (w*z), hinge (w*max(z, 0)), or quad
(pure curvature, uncorrelated with the factor itself). A few columns
step outside even that law: binary columns threshold their latent at
zero, floor/ceil bounds clip saturating scales, and the class column is
an ordinal binning of one factor plus noise. Every nonlinear column is
excluded from the implied-correlation accounting.

``default_clinical_spec`` is the benchmark table: eight assessment
features dominated by a graded severity factor (two loaded negatively,
each paired with a same-factor curvature term), a rating-source factor
across all eight, a demographics factor (age plus binary gender), a
reporter factor isolated on the self-report feature, two weak pair
factors, an always-observed severity-linked screening driver, and a
four-level ordinal stage class.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .errors import ContractError, SchemaError
from .rng import make_rng
from .table import DataMatrix

__all__ = [
    "FactorSpec",
    "ColumnSpec",
    "ClassSpec",
    "LatentSpec",
    "generate",
    "implied_correlation",
    "default_clinical_spec",
    "spec_to_text",
    "spec_from_text",
    "read_spec",
    "write_spec",
]


LOADING_KINDS = ("linear", "hinge", "quad")


@dataclass(frozen=True)
class FactorSpec:
    """One latent factor: its sd and (column, weight[, kind]) loadings.

    A loading's kind decides how the factor enters the column. "linear"
    (the default, written as a plain pair) adds w*z. "hinge" adds
    w*max(z, 0): the column registers the factor on one side only, the
    way a deficit rating stays flat until there is a deficit to rate.
    "quad" adds w*((z/sd)^2 - 1)/sqrt(2), a pure curvature term with
    zero linear correlation to the factor itself.
    """

    name: str
    sd: float
    loadings: tuple


def _loading(entry):
    """Normalize a loading entry to (column, weight, kind)."""
    if len(entry) == 2:
        return entry[0], float(entry[1]), "linear"
    col, w, kind = entry
    return col, float(w), kind


@dataclass(frozen=True)
class ColumnSpec:
    """One generated column.

    binary=True thresholds the latent at 0. floor/ceil clip the final
    value, giving the saturation effects typical of bounded test scores;
    clipped columns (like binary ones) fall outside the linear
    correlation accounting.
    """

    name: str
    role: str
    noise_sd: float
    offset: float = 0.0
    binary: bool = False
    floor: float = None
    ceil: float = None

    @property
    def linear(self) -> bool:
        return not self.binary and self.floor is None and self.ceil is None


@dataclass(frozen=True)
class ClassSpec:
    """Ordinal class column: equal-population bins of factor + noise."""

    column: str
    source_factor: str
    levels: int
    noise_sd: float


@dataclass(frozen=True)
class LatentSpec:
    n_rows: int
    columns: tuple
    factors: tuple
    class_spec: ClassSpec
    seed: int


def _validate(spec: LatentSpec) -> None:
    if spec.n_rows < 1:
        raise ContractError(f"n_rows must be >= 1, got {spec.n_rows}")
    if not spec.factors:
        raise ContractError("need at least one factor")
    names = [c.name for c in spec.columns]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in spec")
    known = set(names)
    for f in spec.factors:
        if f.sd < 0:
            raise ContractError(f"factor {f.name!r} has negative sd")
        for entry in f.loadings:
            col, _, kind = _loading(entry)
            if col not in known:
                raise SchemaError(
                    f"factor {f.name!r} loads undeclared column {col!r}"
                )
            if kind not in LOADING_KINDS:
                raise SchemaError(
                    f"factor {f.name!r}: unknown loading kind {kind!r}"
                )
    for c in spec.columns:
        if c.noise_sd < 0:
            raise ContractError(f"column {c.name!r} has negative noise_sd")
        if c.binary and c.offset != 0.0:
            raise ContractError(f"binary column {c.name!r} cannot take an offset")
        if c.binary and (c.floor is not None or c.ceil is not None):
            raise ContractError(f"binary column {c.name!r} cannot be clipped")
        if c.floor is not None and c.ceil is not None and c.floor >= c.ceil:
            raise ContractError(f"column {c.name!r}: floor must be below ceil")
    cs = spec.class_spec
    if cs is not None:
        if cs.column in known:
            raise SchemaError(f"class column {cs.column!r} collides with a column")
        if cs.source_factor not in {f.name for f in spec.factors}:
            raise SchemaError(f"class source factor {cs.source_factor!r} undeclared")
        if cs.levels < 2:
            raise ContractError(f"class needs >= 2 levels, got {cs.levels}")


def generate(spec: LatentSpec) -> DataMatrix:
    """Draw one complete table. Same spec, same cells, always."""
    _validate(spec)
    n = spec.n_rows
    rng = make_rng(spec.seed)
    z = {f.name: rng.standard_normal(n) * f.sd for f in spec.factors}
    parts = {c.name: [] for c in spec.columns}
    for f in spec.factors:
        for entry in f.loadings:
            col, w, kind = _loading(entry)
            if kind == "hinge":
                term = w * np.maximum(z[f.name], 0.0)
            elif kind == "quad":
                term = w * ((z[f.name] / f.sd) ** 2 - 1.0) / np.sqrt(2.0)
            else:
                term = w * z[f.name]
            parts[col].append(term)

    names, roles, cols = [], [], []
    for c in spec.columns:
        v = np.zeros(n)
        for term in parts[c.name]:
            v = v + term
        v = v + rng.standard_normal(n) * c.noise_sd
        if c.binary:
            v = (v > 0.0).astype(float)
        else:
            v = v + c.offset
            if c.floor is not None or c.ceil is not None:
                v = np.clip(v, c.floor, c.ceil)
        names.append(c.name)
        roles.append(c.role)
        cols.append(v)

    cs = spec.class_spec
    if cs is not None:
        latent = z[cs.source_factor] + rng.standard_normal(n) * cs.noise_sd
        src_sd = next(f.sd for f in spec.factors if f.name == cs.source_factor)
        spread = float(np.sqrt(src_sd**2 + cs.noise_sd**2))
        edges = spread * norm.ppf(np.arange(1, cs.levels) / cs.levels)
        names.append(cs.column)
        roles.append("class")
        cols.append(np.searchsorted(edges, latent).astype(float))

    values = np.column_stack(cols)
    return DataMatrix(values, np.ones_like(values, dtype=bool), names, roles)


def implied_correlation(spec: LatentSpec, names=None) -> np.ndarray:
    """Population correlation of the purely linear columns.

    Only columns that are neither thresholded nor clipped and that
    receive exclusively linear loadings are eligible; anything else has
    no closed-form entry here.
    """
    nonlinear_cols = {
        _loading(e)[0]
        for f in spec.factors
        for e in f.loadings
        if _loading(e)[2] != "linear"
    }
    linear = [c for c in spec.columns if c.linear and c.name not in nonlinear_cols]
    if names is None:
        names = [c.name for c in linear]
    by_name = {c.name: c for c in linear}
    for n in names:
        if n not in by_name:
            raise SchemaError(f"column {n!r} is not a linear spec column")
    weights = {
        n: {
            f.name: w
            for f in spec.factors
            for col, w, _ in map(_loading, f.loadings)
            if col == n
        }
        for n in names
    }
    p = len(names)
    cov = np.zeros((p, p))
    for a in range(p):
        for b in range(p):
            s = 0.0
            for f in spec.factors:
                wa = weights[names[a]].get(f.name, 0.0)
                wb = weights[names[b]].get(f.name, 0.0)
                s += wa * wb * f.sd**2
            if a == b:
                s += by_name[names[a]].noise_sd ** 2
            cov[a, b] = s
    sd = np.sqrt(np.diag(cov))
    return cov / np.outer(sd, sd)


def default_clinical_spec(n_rows: int = 1000, seed: int = 0) -> LatentSpec:
    """The benchmark table; see the module docstring for the layout."""
    columns = (
        ColumnSpec("informant_total", "feature", 0.3060, 3.0, ceil=4.2),
        ColumnSpec("informant_memory", "feature", 0.4257, 3.2),
        ColumnSpec("informant_plan", "feature", 0.5401, 2.8),
        ColumnSpec("informant_visuo", "feature", 0.5521, 2.6),
        ColumnSpec("informant_lang", "feature", 0.5919, 2.9),
        ColumnSpec("delayed_recall", "feature", 0.5466, 8.0, floor=7.0),
        ColumnSpec("cognitive_exam", "feature", 0.6498, 24.0, ceil=25.0),
        ColumnSpec("self_report", "feature", 0.7380, 3.1),
        ColumnSpec("age", "demographic", 3.5, 72.0),
        ColumnSpec("gender", "demographic", 5.0, 0.0, binary=True),
        ColumnSpec("screen_score", "driver", 0.45, 27.0),
    )
    factors = (
        # deterioration is not linear in severity: ratings and scores
        # accelerate toward their bad end, and self-report misses at
        # both extremes (mild cases over-report, severe ones lose
        # insight), so each feature pairs its level term with a
        # curvature (quad) term on the same factor
        FactorSpec(
            "severity",
            1.0,
            (
                ("informant_total", 0.72),
                ("informant_total", 0.42, "quad"),
                ("informant_memory", 0.68),
                ("informant_memory", 0.355, "quad"),
                ("informant_plan", 0.63),
                ("informant_plan", 0.33, "quad"),
                ("informant_visuo", 0.60),
                ("informant_visuo", 0.36, "quad"),
                ("informant_lang", 0.55),
                ("informant_lang", 0.36, "quad"),
                ("delayed_recall", -0.52),
                ("delayed_recall", -0.355, "quad"),
                ("cognitive_exam", -0.45),
                ("cognitive_exam", -0.33, "quad"),
                ("self_report", 0.22),
                ("self_report", 0.30, "quad"),
                ("screen_score", -0.60),
            ),
        ),
        # rating-source contrast: runs against severity's signs on the
        # test features, which keeps it rotationally distinct from PC1
        FactorSpec(
            "rating_source",
            1.0,
            (
                ("informant_total", 0.46),
                ("informant_memory", 0.48),
                ("informant_plan", 0.45),
                ("informant_visuo", 0.30),
                ("informant_lang", 0.24),
                ("delayed_recall", 0.32),
                ("cognitive_exam", 0.30),
                ("self_report", 0.12),
            ),
        ),
        FactorSpec(
            "demographics",
            1.0,
            (("age", 5.5), ("gender", 0.75)),
        ),
        FactorSpec("reporter", 1.0, (("self_report", 0.55),)),
        # the pair factors give each test a partner that survives the
        # masking, which rewards imputers able to use local structure
        FactorSpec(
            "pair_recall_exam",
            1.0,
            (("delayed_recall", 0.45), ("cognitive_exam", 0.42)),
        ),
        FactorSpec(
            "pair_visuo_lang",
            1.0,
            (("informant_visuo", 0.34), ("informant_lang", 0.40)),
        ),
    )
    class_spec = ClassSpec("stage", "severity", 4, 0.5)
    return LatentSpec(n_rows, columns, factors, class_spec, seed)


# -- flat text serialization --------------------------------------------------


def spec_to_text(spec: LatentSpec) -> str:
    lines = [f"n_rows = {spec.n_rows}", f"seed = {spec.seed}"]
    for c in spec.columns:
        parts = [c.name, c.role, repr(float(c.noise_sd)), repr(float(c.offset))]
        if c.binary:
            parts.append("binary")
        if c.floor is not None:
            parts.append(f"floor:{repr(float(c.floor))}")
        if c.ceil is not None:
            parts.append(f"ceil:{repr(float(c.ceil))}")
        lines.append("column = " + " ".join(parts))
    for f in spec.factors:
        loads = " ".join(
            f"{col}:{repr(w)}" if kind == "linear" else f"{col}:{repr(w)}:{kind}"
            for col, w, kind in map(_loading, f.loadings)
        )
        lines.append(f"factor = {f.name} {repr(float(f.sd))} {loads}")
    cs = spec.class_spec
    if cs is not None:
        lines.append(
            f"class = {cs.column} {cs.source_factor} {cs.levels} "
            f"{repr(float(cs.noise_sd))}"
        )
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> LatentSpec:
    n_rows = None
    seed = 0
    columns, factors = [], []
    class_spec = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemaError(f"spec line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "n_rows":
            n_rows = int(value)
        elif key == "seed":
            seed = int(value)
        elif key == "column":
            parts = value.split()
            if len(parts) < 4:
                raise SchemaError(f"spec line {lineno}: bad column entry")
            binary = False
            floor = ceil = None
            for token in parts[4:]:
                if token == "binary":
                    binary = True
                elif token.startswith("floor:"):
                    floor = float(token[len("floor:"):])
                elif token.startswith("ceil:"):
                    ceil = float(token[len("ceil:"):])
                else:
                    raise SchemaError(
                        f"spec line {lineno}: unknown column token {token!r}"
                    )
            columns.append(
                ColumnSpec(
                    parts[0], parts[1], float(parts[2]), float(parts[3]),
                    binary, floor, ceil,
                )
            )
        elif key == "factor":
            parts = value.split()
            if len(parts) < 2:
                raise SchemaError(f"spec line {lineno}: bad factor entry")
            loads = []
            for token in parts[2:]:
                fields = token.split(":")
                if len(fields) not in (2, 3) or not fields[1]:
                    raise SchemaError(
                        f"spec line {lineno}: loading {token!r} is not "
                        "name:weight or name:weight:kind"
                    )
                if len(fields) == 2:
                    loads.append((fields[0], float(fields[1])))
                else:
                    loads.append((fields[0], float(fields[1]), fields[2]))
            factors.append(FactorSpec(parts[0], float(parts[1]), tuple(loads)))
        elif key == "class":
            parts = value.split()
            if len(parts) != 4:
                raise SchemaError(f"spec line {lineno}: bad class entry")
            class_spec = ClassSpec(parts[0], parts[1], int(parts[2]), float(parts[3]))
        else:
            raise SchemaError(f"spec line {lineno}: unknown key {key!r}")
    if n_rows is None:
        raise SchemaError("spec is missing n_rows")
    spec = LatentSpec(n_rows, tuple(columns), tuple(factors), class_spec, seed)
    _validate(spec)
    return spec


def write_spec(spec: LatentSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(spec_to_text(spec))


def read_spec(path) -> LatentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_text(fh.read())


def with_overrides(spec: LatentSpec, n_rows=None, seed=None) -> LatentSpec:
    if n_rows is not None:
        spec = replace(spec, n_rows=n_rows)
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec
