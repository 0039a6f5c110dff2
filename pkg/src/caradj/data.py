"""Observed trial data: validation, stratification and CSV ingestion."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateStratumError, ValidationError


def _sort_key(label):
    # numeric labels sort numerically, anything else lexically after them
    if isinstance(label, (int, np.integer, float, np.floating)):
        return (0, float(label), "")
    return (1, 0.0, str(label))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Outcomes, binary assignments, stratum labels and covariates for n units.

    Arrays are copied and made read-only on construction. ``covariates`` is
    always two-dimensional; a dataset without covariates has shape ``(n, 0)``.
    """

    outcomes: np.ndarray
    assignments: np.ndarray
    strata: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = ()
    labels: tuple = field(init=False)
    stratum_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.asarray(self.outcomes, dtype=np.float64)
        a_raw = np.asarray(self.assignments)
        s = np.asarray(self.strata)
        x = np.asarray(self.covariates, dtype=np.float64)
        if y.ndim != 1:
            raise ValidationError("outcomes must be a vector")
        n = y.shape[0]
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(n, 0)
        if x.ndim != 2:
            raise ValidationError("covariates must be an n x p matrix")
        if n < 2:
            raise ValidationError(f"need at least 2 units, got {n}")
        if a_raw.shape != (n,) or s.shape != (n,) or x.shape[0] != n:
            raise ValidationError(
                "outcomes, assignments, strata and covariates must share the same n"
            )
        if not np.all(np.isfinite(y)):
            raise ValidationError("outcomes contain missing or non-finite values")
        if not np.all(np.isfinite(x)):
            raise ValidationError("covariates contain missing or non-finite values")
        try:
            a_float = a_raw.astype(np.float64)
        except (TypeError, ValueError):
            raise ValidationError("invalid assignment: values must be 0 or 1") from None
        if not np.all((a_float == 0.0) | (a_float == 1.0)):
            raise ValidationError("invalid assignment: values must be 0 or 1")
        for lab in s:
            if lab is None or (isinstance(lab, float) and math.isnan(lab)):
                raise ValidationError("stratum labels contain missing values")

        labels = tuple(sorted(set(s.tolist()), key=_sort_key))
        lookup = {lab: k for k, lab in enumerate(labels)}
        index = np.fromiter((lookup[v] for v in s.tolist()), dtype=np.intp, count=n)

        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ValidationError("covariate_names length does not match p")

        set_ = object.__setattr__
        set_(self, "outcomes", _frozen(y))
        set_(self, "assignments", _frozen(a_float.astype(np.int8)))
        set_(self, "strata", _frozen(s))
        set_(self, "covariates", _frozen(x))
        set_(self, "covariate_names", names)
        set_(self, "labels", labels)
        set_(self, "stratum_index", _frozen(index))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def K(self) -> int:
        return len(self.labels)

    def equals(self, other: "TrialDataset") -> bool:
        """Bit-exact equality of all fields."""
        return (
            np.array_equal(self.outcomes, other.outcomes)
            and np.array_equal(self.assignments, other.assignments)
            and self.strata.tolist() == other.strata.tolist()
            and self.covariates.shape == other.covariates.shape
            and np.array_equal(self.covariates, other.covariates)
            and self.covariate_names == other.covariate_names
        )

    def stratum(self, k: int) -> "StratumData":
        idx = np.flatnonzero(self.stratum_index == k)
        return StratumData(
            label=self.labels[k],
            X=self.covariates[idx],
            A=self.assignments[idx].astype(np.float64),
            Y=self.outcomes[idx],
            n_total=self.n,
        )

    def iter_strata(self):
        for k in range(self.K):
            yield self.stratum(k)


@dataclass(frozen=True, eq=False)
class StratumData:
    """Rows of one stratum, in dataset order."""

    label: object
    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    n_total: int

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def n1(self) -> int:
        return int(self.A.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def p_n(self) -> float:
        return self.n / self.n_total

    @property
    def pi_n(self) -> float:
        return self.n1 / self.n

    def arm_mask(self, arm: int) -> np.ndarray:
        return self.A == 1.0 if arm == 1 else self.A == 0.0

    def arm_mean(self, arm: int) -> float:
        m = self.arm_mask(arm)
        if not m.any():
            raise DegenerateStratumError(
                f"stratum {self.label!r} has no {'treated' if arm == 1 else 'control'} units",
                stratum=self.label,
            )
        return float(self.Y[m].mean())

    def require_both_arms(self, min_per_arm: int = 1) -> None:
        for arm, cnt in ((1, self.n1), (0, self.n0)):
            if cnt < min_per_arm:
                name = "treated" if arm == 1 else "control"
                raise DegenerateStratumError(
                    f"stratum {self.label!r} has {cnt} {name} unit(s); need at least {min_per_arm}",
                    stratum=self.label,
                )


@dataclass(frozen=True)
class StratumSummary:
    label: object
    n: int
    n1: int
    n0: int
    p_n: float
    pi_n: float
    mean1: float
    mean0: float
    indices: np.ndarray = field(repr=False)

    @property
    def has_treated(self) -> bool:
        return self.n1 > 0

    @property
    def has_control(self) -> bool:
        return self.n0 > 0


def build_strata(dataset: TrialDataset) -> list[StratumSummary]:
    """Per-stratum counts, proportions and arm means, sorted by label.

    An arm mean is NaN when the arm is empty; check ``has_treated`` /
    ``has_control`` rather than the value.
    """
    out = []
    for k, lab in enumerate(dataset.labels):
        idx = np.flatnonzero(dataset.stratum_index == k)
        a = dataset.assignments[idx]
        y = dataset.outcomes[idx]
        n_k = idx.size
        n1 = int(a.sum())
        n0 = n_k - n1
        out.append(
            StratumSummary(
                label=lab,
                n=n_k,
                n1=n1,
                n0=n0,
                p_n=n_k / dataset.n,
                pi_n=n1 / n_k,
                mean1=float(y[a == 1].mean()) if n1 else math.nan,
                mean0=float(y[a == 0].mean()) if n0 else math.nan,
                indices=_frozen(idx),
            )
        )
    return out


# --- CSV -----------------------------------------------------------------

DEFAULT_SCHEMA = {"outcome": "y", "arm": "arm", "stratum": "stratum"}


def _parse_float(cell: str, column: str, line: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ValidationError(
            f"non-numeric cell {cell!r} in column {column!r} (line {line})"
        ) from None
    if not math.isfinite(v):
        raise ValidationError(f"non-finite value {cell!r} in column {column!r} (line {line})")
    return v


def _coerce_labels(raw: list[str]) -> list:
    try:
        ints = [int(v) for v in raw]
    except ValueError:
        return raw
    # keep strings like "01" as strings so round-trips stay exact
    if all(str(i) == v for i, v in zip(ints, raw)):
        return ints
    return raw


def load_csv(path, schema: Mapping[str, object] | None = None) -> TrialDataset:
    """Read a trial dataset from a CSV file with a header row.

    ``schema`` maps ``outcome``, ``arm`` and ``stratum`` to column names and
    optionally ``covariates`` to a list of column names. When ``covariates``
    is omitted every remaining column is used, in file order.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"empty file: {path}") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    if not rows:
        raise ValidationError(f"empty file: {path} has a header but no rows")

    ycol, acol, scol = schema["outcome"], schema["arm"], schema["stratum"]
    for role, col in (("outcome", ycol), ("arm", acol), ("stratum", scol)):
        if col not in header:
            raise ValidationError(f"missing column {col!r} (role {role})")
    covs = schema.get("covariates")
    if covs is None:
        covs = [h for h in header if h not in (ycol, acol, scol)]
    else:
        covs = list(covs)
        for c in covs:
            if c not in header:
                raise ValidationError(f"missing column {c!r} (covariate)")
    pos = {h: j for j, h in enumerate(header)}

    y, a, s, x = [], [], [], []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ValidationError(f"line {i} has {len(row)} fields, expected {len(header)}")
        y.append(_parse_float(row[pos[ycol]].strip(), ycol, i))
        av = _parse_float(row[pos[acol]].strip(), acol, i)
        if av not in (0.0, 1.0):
            raise ValidationError(f"invalid assignment {row[pos[acol]]!r} on line {i}")
        a.append(int(av))
        lab = row[pos[scol]].strip()
        if lab == "":
            raise ValidationError(f"missing stratum label on line {i}")
        s.append(lab)
        x.append([_parse_float(row[pos[c]].strip(), c, i) for c in covs])

    labels = _coerce_labels(s)
    strata = np.empty(len(labels), dtype=object)
    strata[:] = labels
    covariates = np.array(x, dtype=np.float64).reshape(len(rows), len(covs))
    return TrialDataset(
        outcomes=np.array(y),
        assignments=np.array(a),
        strata=strata,
        covariates=covariates,
        covariate_names=tuple(covs),
    )


def save_csv(dataset: TrialDataset, path, schema: Mapping[str, object] | None = None) -> None:
    """Write ``dataset`` so that :func:`load_csv` reproduces it bit-exactly."""
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    header = [schema["outcome"], schema["arm"], schema["stratum"], *dataset.covariate_names]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n):
            w.writerow(
                [
                    repr(float(dataset.outcomes[i])),
                    int(dataset.assignments[i]),
                    dataset.strata[i],
                    *(repr(float(v)) for v in dataset.covariates[i]),
                ]
            )


def dataset_from_arrays(
    y: Sequence[float],
    a: Sequence[int],
    strata: Sequence,
    X=None,
) -> TrialDataset:
    """Convenience constructor; ``X=None`` means no covariates."""
    y = np.asarray(y, dtype=np.float64)
    X = np.zeros((y.shape[0], 0)) if X is None else np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return TrialDataset(outcomes=y, assignments=np.asarray(a), strata=np.asarray(strata), covariates=X)
