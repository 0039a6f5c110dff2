"""Scenario files: INI text with one ``[scenario]`` section.

Keys mirror :class:`~caradj.sim.dgp.DGPConfig` plus run settings
(``replicates``, ``seed``, ``estimators``, ``alpha``, ``gram_scope``).
``n``, ``p`` and ``ratio`` accept comma-separated lists; the scenario grid
is their Cartesian product in the order n, p/ratio.
"""
from __future__ import annotations

import configparser
import itertools
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ValidationError
from ..estimators import GRAM_SCOPES, KINDS
from .dgp import DGPConfig

SECTION = "scenario"

_DGP_FIELDS = {f.name: f for f in fields(DGPConfig)}
_RUN_KEYS = {"name", "replicates", "seed", "estimators", "alpha", "gram_scope", "workers"}
_GRID_KEYS = {"n", "p", "ratio"}


@dataclass
class Scenario:
    name: str
    grid: list[DGPConfig]
    replicates: int
    seed: int
    estimators: tuple[str, ...]
    alpha: float = 0.05
    gram_scope: str = "stratum"
    workers: int = 1


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _convert(key: str, raw: str):
    f = _DGP_FIELDS[key]
    typ = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if key == "strata_probs":
            return tuple(float(v) for v in _split(raw))
        if "int" in typ and "float" not in typ:
            return int(raw)
        if "float" in typ:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ValidationError(f"invalid value {raw!r} for key {key!r}") from None


def parse_scenario(text: str, overrides: dict[str, str] | None = None, source: str = "<string>") -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ValidationError(f"cannot parse scenario file: {exc}") from None
    if SECTION not in cp:
        raise ValidationError(f"scenario file needs a [{SECTION}] section")
    extra = [s for s in cp.sections() if s != SECTION]
    if extra:
        raise ValidationError(f"unknown section(s): {', '.join(extra)}")
    values = dict(cp[SECTION])
    values.update(overrides or {})

    allowed = set(_DGP_FIELDS) | _RUN_KEYS
    bad = sorted(k for k in values if k not in allowed)
    if bad:
        raise ValidationError(f"invalid config key(s): {', '.join(bad)}")

    try:
        name = values.pop("name", Path(source).stem)
        replicates = int(values.pop("replicates", "2000"))
        seed = int(values.pop("seed", "0"))
        alpha = float(values.pop("alpha", "0.05"))
        workers = int(values.pop("workers", "1"))
    except ValueError as exc:
        raise ValidationError(f"invalid run setting: {exc}") from None
    estimators = tuple(_split(values.pop("estimators", ",".join(KINDS))))
    for e in estimators:
        if e not in KINDS:
            raise ValidationError(f"unknown estimator {e!r} in 'estimators'")
    gram_scope = values.pop("gram_scope", "stratum").strip()
    if gram_scope not in GRAM_SCOPES:
        raise ValidationError(f"gram_scope must be one of {GRAM_SCOPES}")
    if replicates < 2:
        raise ValidationError("replicates must be at least 2")

    ns = [int(v) for v in _split(values.pop("n", "1000"))]
    if "p" in values and "ratio" in values:
        raise ValidationError("set either 'p' or 'ratio', not both")
    if "p" in values:
        dims = [("p", int(v)) for v in _split(values.pop("p"))]
    elif "ratio" in values:
        dims = [("ratio", float(v)) for v in _split(values.pop("ratio"))]
    else:
        raise ValidationError("scenario needs 'p' or 'ratio'")

    base = {k: _convert(k, v) for k, v in values.items()}
    grid = []
    for n, (dkey, dval) in itertools.product(ns, dims):
        try:
            grid.append(DGPConfig(**base, n=n, **{dkey: dval}))
        except TypeError as exc:
            raise ValidationError(str(exc)) from None
    return Scenario(name, grid, replicates, seed, estimators, alpha, gram_scope, workers)


def load_scenario(path, overrides: dict[str, str] | None = None) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"scenario file not found: {path}")
    return parse_scenario(path.read_text(encoding="utf-8"), overrides, source=str(path))
