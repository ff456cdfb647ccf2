"""Count-regression copula analysis of a CSV dataset.

A TOML schema names the two response columns, how raw values become
counts (integer cap or interval bins), and the categorical covariates with
their reference levels. :func:`run_analysis` then fits NB2 margins, every
requested copula family by IFM, and reports conditional probabilities
``P(X = x | Y = y)`` and conditional-expectation differences aggregated
over rows.

Example schema::

    missing = ["?", ""]

    [x]
    name = "STDs"
    column = "STDs (number)"
    cap = 2

    [y]
    name = "IUD"
    column = "IUD (years)"
    bins = ["[0,0]", "(0,5)", "[5,10)", "[10,15)", "[15,inf)"]

    [[covariates]]
    name = "Age"
    column = "Age"
    bins = ["[0,25)", "[25,45)", "[45,inf)"]
    labels = ["1", "2", "3"]
    reference = "1"

    [model]
    x_covariates = ["Smoke"]
    y_covariates = ["Age", "AFS"]
    families = ["frank", "gumbel"]
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from countcopula.copulas import ARCHIMEDEAN, CopulaSpec, Family
from countcopula.estimation import IFMResult, chi_square_gof, fit_nb2_simple, ifm_fit
from countcopula.estimators import CovariateEncoder
from countcopula.exceptions import DataError
from countcopula.margins import NB2, nb2_cdf

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "Interval",
    "VariableRule",
    "Schema",
    "Dataset",
    "ConditionalReport",
    "AnalysisReport",
    "load_schema",
    "load_dataset",
    "encode_covariates",
    "conditional_pmf",
    "conditional_probabilities",
    "conditional_expectation_deltas",
    "run_analysis",
    "emit_report",
    "emit_curve",
]

_G_MIN = 1e-300
_EXPECTATION_TAIL = 1e-10
_INTERVAL_RE = re.compile(r"^\s*([\[(])\s*([^,\s]+)\s*,\s*([^,\s\])]+)\s*([\])])\s*$")


@dataclass(frozen=True)
class Interval:
    """A real interval written in bracket notation, e.g. ``"[5,10)"``."""

    lo: float
    hi: float
    lo_closed: bool
    hi_closed: bool

    @classmethod
    def parse(cls, text: str) -> "Interval":
        m = _INTERVAL_RE.match(text)
        if not m:
            raise ValueError(f"malformed interval {text!r}; expected e.g. '[0,5)'")
        lo, hi = float(m.group(2)), float(m.group(3))
        if lo > hi:
            raise ValueError(f"interval {text!r} has lower end above upper end")
        return cls(lo, hi, m.group(1) == "[", m.group(4) == "]")

    def __contains__(self, v: float) -> bool:
        above = v >= self.lo if self.lo_closed else v > self.lo
        below = v <= self.hi if self.hi_closed else v < self.hi
        return above and below

    def __str__(self) -> str:
        return f"{'[' if self.lo_closed else '('}{self.lo:g},{self.hi:g}{']' if self.hi_closed else ')'}"


@dataclass(frozen=True)
class VariableRule:
    """How one CSV column becomes a count or a categorical level.

    Exactly one of ``cap`` (integer counts, values above ``cap`` merged into
    it), ``bins`` (intervals, coded by position or ``labels``) or ``levels``
    (raw categorical strings) applies; a response with none of them must be
    a nonnegative integer.
    """

    name: str
    column: str
    cap: int | None = None
    bins: tuple[Interval, ...] = ()
    labels: tuple[str, ...] = ()
    levels: tuple[str, ...] = ()
    reference: str | None = None

    @classmethod
    def from_mapping(cls, data: dict, role: str) -> "VariableRule":
        allowed = {"name", "column", "cap", "bins", "labels", "levels", "reference"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"{role}: unknown keys {sorted(unknown)}")
        if "column" not in data:
            raise ValueError(f"{role}: 'column' is required")
        bins = tuple(Interval.parse(b) for b in data.get("bins", ()))
        labels = tuple(str(v) for v in data.get("labels", ()))
        levels = tuple(str(v) for v in data.get("levels", ()))
        cap = data.get("cap")
        if sum(x is not None and x != () for x in (cap, bins or None, levels or None)) > 1:
            raise ValueError(f"{role}: use only one of cap, bins, levels")
        if labels and len(labels) != len(bins):
            raise ValueError(f"{role}: {len(labels)} labels for {len(bins)} bins")
        if cap is not None and (not isinstance(cap, int) or cap < 1):
            raise ValueError(f"{role}: cap must be a positive integer")
        for i, a in enumerate(bins):
            for b in bins[i + 1 :]:
                if _overlap(a, b):
                    raise ValueError(f"{role}: bins {a} and {b} overlap")
        rule = cls(
            name=str(data.get("name", data["column"])),
            column=str(data["column"]),
            cap=cap,
            bins=bins,
            labels=labels,
            levels=levels,
            reference=None if data.get("reference") is None else str(data["reference"]),
        )
        if rule.reference is not None and rule.reference not in rule.categories:
            raise ValueError(f"{role}: reference {rule.reference!r} is not one of {list(rule.categories)}")
        return rule

    @property
    def categories(self) -> tuple[str, ...]:
        if self.levels:
            return self.levels
        if self.bins:
            return self.labels or tuple(str(i) for i in range(len(self.bins)))
        if self.cap is not None:
            return tuple(str(i) for i in range(self.cap + 1))
        return ()

    @property
    def max_count(self) -> int | None:
        """Largest count a response can take after coding, if bounded."""
        if self.cap is not None:
            return self.cap
        if self.bins:
            return len(self.bins) - 1
        return None

    def count(self, raw: str) -> int:
        """Code a response value; raises ValueError with a reason."""
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {raw!r}")
        if self.bins:
            return self._bin_index(v)
        if v < 0 or v != math.floor(v):
            raise ValueError(f"{raw!r} is not a nonnegative integer count")
        k = int(v)
        return min(k, self.cap) if self.cap is not None else k

    def level(self, raw: str) -> str:
        """Code a covariate value to its level label; raises ValueError if unknown."""
        if self.levels:
            if raw in self.levels:
                return raw
            raise ValueError(f"unknown level {raw!r}; expected one of {list(self.levels)}")
        if self.bins:
            i = self._bin_index(float(raw))
            return self.categories[i]
        if self.cap is not None:
            return str(self.count(raw))
        return raw

    def _bin_index(self, v: float) -> int:
        for i, b in enumerate(self.bins):
            if v in b:
                return i
        raise ValueError(f"value {v:g} falls in none of the bins {[str(b) for b in self.bins]}")


def _overlap(a: Interval, b: Interval) -> bool:
    if a.hi < b.lo or b.hi < a.lo:
        return False
    if a.hi == b.lo:
        return a.hi_closed and b.lo_closed
    if b.hi == a.lo:
        return b.hi_closed and a.lo_closed
    return True


@dataclass(frozen=True)
class Schema:
    x: VariableRule
    y: VariableRule
    covariates: tuple[VariableRule, ...] = ()
    missing: tuple[str, ...] = ("", "?", "NA")
    x_covariates: tuple[str, ...] | None = None
    y_covariates: tuple[str, ...] | None = None
    families: tuple[str, ...] = tuple(f.value for f in ARCHIMEDEAN)

    @classmethod
    def from_mapping(cls, data: dict) -> "Schema":
        allowed = {"x", "y", "covariates", "missing", "model"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"schema: unknown top-level keys {sorted(unknown)}")
        for key in ("x", "y"):
            if key not in data:
                raise ValueError(f"schema: missing [{key}] table")
        covs = []
        for i, c in enumerate(data.get("covariates", [])):
            rule = VariableRule.from_mapping(c, f"covariates[{i}]")
            if not rule.categories:
                raise ValueError(f"covariate {rule.name}: needs levels or bins")
            if rule.reference is None:
                rule = VariableRule(**{**rule.__dict__, "reference": rule.categories[0]})
            covs.append(rule)
        names = [c.name for c in covs]
        if len(set(names)) != len(names):
            raise ValueError("schema: duplicate covariate names")
        model = dict(data.get("model", {}))
        unknown = set(model) - {"x_covariates", "y_covariates", "families"}
        if unknown:
            raise ValueError(f"schema [model]: unknown keys {sorted(unknown)}")
        for key in ("x_covariates", "y_covariates"):
            if key in model:
                bad = [n for n in model[key] if n not in names]
                if bad:
                    raise ValueError(f"schema [model] {key}: unknown covariates {bad}")
        families = tuple(Family.parse(f).value for f in model.get("families", [f.value for f in ARCHIMEDEAN]))
        for f in families:
            if not Family(f).has_parameter:
                raise ValueError(f"schema [model] families: {f} has no parameter to fit")
        return cls(
            x=VariableRule.from_mapping(data["x"], "x"),
            y=VariableRule.from_mapping(data["y"], "y"),
            covariates=tuple(covs),
            missing=tuple(str(m) for m in data.get("missing", cls.missing)),
            x_covariates=tuple(model["x_covariates"]) if "x_covariates" in model else None,
            y_covariates=tuple(model["y_covariates"]) if "y_covariates" in model else None,
            families=families,
        )

    @property
    def columns(self) -> list[str]:
        return [self.x.column, self.y.column] + [c.column for c in self.covariates]

    def covariate(self, name: str) -> VariableRule:
        for c in self.covariates:
            if c.name == name:
                return c
        raise KeyError(name)


def load_schema(path: str | os.PathLike) -> Schema:
    with open(path, "rb") as fh:
        return Schema.from_mapping(tomllib.load(fh))


@dataclass
class Dataset:
    schema: Schema
    x: np.ndarray
    y: np.ndarray
    covariates: dict[str, np.ndarray]
    rows_read: int
    dropped_rows: list[int] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def n_dropped(self) -> int:
        return len(self.dropped_rows)

    def frequency(self, which: str) -> np.ndarray:
        rule = self.schema.x if which == "x" else self.schema.y
        values = self.x if which == "x" else self.y
        size = rule.max_count + 1 if rule.max_count is not None else int(values.max()) + 1
        return np.bincount(values, minlength=size)

    def ingestion_report(self) -> dict:
        return {"rows_read": self.rows_read, "rows_used": self.n, "rows_dropped": self.n_dropped}


def load_dataset(path: str | os.PathLike, schema: Schema) -> Dataset:
    """Read a CSV with a header row and code it according to ``schema``.

    Rows with a missing token in any declared column are dropped and
    counted. Any other value that cannot be coded (a non-numeric response,
    a level outside the schema) is an error naming the row and column.
    Row numbers in messages count the header as line 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise DataError(f"{path}: empty file or missing header row")
        absent = [c for c in schema.columns if c not in header]
        if absent:
            raise DataError(f"{path}: missing declared columns {absent}")
        missing = set(schema.missing)
        xs, ys = [], []
        covs: dict[str, list[str]] = {c.name: [] for c in schema.covariates}
        dropped = []
        rows = 0
        for line, row in enumerate(reader, start=2):
            rows += 1
            raw = {c: (row[c] or "").strip() for c in schema.columns}
            if any(v in missing for v in raw.values()):
                dropped.append(line)
                continue
            for rule, sink, coder in ((schema.x, xs, schema.x.count), (schema.y, ys, schema.y.count)):
                try:
                    sink.append(coder(raw[rule.column]))
                except ValueError as exc:
                    raise DataError(f"{path}: row {line}, column {rule.column!r}: {exc}") from None
            for rule in schema.covariates:
                try:
                    covs[rule.name].append(rule.level(raw[rule.column]))
                except ValueError as exc:
                    raise DataError(f"{path}: row {line}, column {rule.column!r}: {exc}") from None
    if not xs:
        raise DataError(f"{path}: no usable rows ({rows} read, {len(dropped)} dropped for missing values)")
    return Dataset(
        schema=schema,
        x=np.array(xs, dtype=np.int64),
        y=np.array(ys, dtype=np.int64),
        covariates={k: np.array(v, dtype=object) for k, v in covs.items()},
        rows_read=rows,
        dropped_rows=dropped,
    )


def encode_covariates(dataset: Dataset, selection: Sequence[str] | None = None) -> tuple[np.ndarray, list[str]]:
    """Intercept plus reference-level dummies, columns in schema order.

    ``selection`` of None means every schema covariate; an empty selection
    gives the intercept-only design.
    """
    schema = dataset.schema
    if selection is None:
        chosen = list(schema.covariates)
    else:
        unknown = [s for s in selection if s not in {c.name for c in schema.covariates}]
        if unknown:
            raise DataError(f"unknown covariates {unknown}")
        chosen = [c for c in schema.covariates if c.name in selection]
    enc = CovariateEncoder(
        names=[c.name for c in chosen],
        levels=[c.categories for c in chosen],
        references=[c.reference for c in chosen],
    ).fit()
    raw = np.column_stack([dataset.covariates[c.name] for c in chosen]) if chosen else np.empty((dataset.n, 0))
    return enc.transform(raw), list(enc.get_feature_names_out())


# ---------------------------------------------------------------------------
# conditional distributions


def _cdf_rows(margins: Sequence[NB2], ks: np.ndarray, absorb_at: int | None = None) -> np.ndarray:
    """``F_i(k)`` for each row ``i`` and each ``k`` in ``ks``; 1 from ``absorb_at`` on."""
    mu = np.array([m.mu for m in margins])[:, None]
    psi = np.array([m.psi for m in margins])[:, None]
    F = nb2_cdf(ks[None, :], mu, psi)
    if absorb_at is not None:
        F[:, ks >= absorb_at] = 1.0
    return F


def _conditional_matrix(
    copula: CopulaSpec,
    margins_x: Sequence[NB2],
    margins_y: Sequence[NB2],
    y: int,
    x_max: int,
    x_cap: int | None,
    y_cap: int | None,
) -> np.ndarray:
    """Rows of ``P(X = x | Y = y)`` for ``x = 0..x_max``, one row per observation."""
    xs = np.arange(-1, x_max + 1)
    F = _cdf_rows(margins_x, xs, x_cap)
    G = _cdf_rows(margins_y, np.array([y - 1, y]), y_cap)
    C_hi = copula.cdf(F, G[:, 1:2])
    C_lo = copula.cdf(F, G[:, 0:1])
    h = np.diff(C_hi, axis=1) - np.diff(C_lo, axis=1)
    g = G[:, 1] - G[:, 0]
    if np.any(g < _G_MIN):
        raise DataError(f"P(Y = {y}) underflows for some rows; the conditioning value is unobservable")
    return np.maximum(h, 0.0) / g[:, None]


def conditional_pmf(
    copula: CopulaSpec,
    margin_x: NB2,
    margin_y: NB2,
    y: int,
    x_max: int | None = None,
    x_cap: int | None = None,
    y_cap: int | None = None,
) -> np.ndarray:
    """``P(X = x | Y = y)`` for ``x = 0..x_max`` under one pair of margins.

    With ``x_cap`` the top cell ``x_cap`` holds ``P(X >= x_cap | Y = y)``
    (and ``x_max`` defaults to it); otherwise the support runs to the
    ``1e-10`` truncation point of ``margin_x``. ``y_cap`` treats the
    conditioning value ``y_cap`` as ``Y >= y_cap``.
    """
    if y < 0:
        raise ValueError("y must be nonnegative")
    if x_max is None:
        x_max = x_cap if x_cap is not None else margin_x.truncation_point(_EXPECTATION_TAIL)
    return _conditional_matrix(copula, [margin_x], [margin_y], y, x_max, x_cap, y_cap)[0]


@dataclass
class ConditionalReport:
    y_values: list[int]
    x_values: list[int]
    prob_mean: np.ndarray  # shape (len(x_values), len(y_values))
    prob_sd: np.ndarray
    deltas: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "x_values": self.x_values,
            "y_values": self.y_values,
            "probability_mean": self.prob_mean.tolist(),
            "probability_sd": self.prob_sd.tolist(),
            "expectation_deltas": self.deltas,
        }


def _y_support(dataset: Dataset) -> list[int]:
    m = dataset.schema.y.max_count
    return list(range((m if m is not None else int(dataset.y.max())) + 1))


def conditional_probabilities(fit: IFMResult, dataset: Dataset) -> tuple[list[int], list[int], np.ndarray, np.ndarray]:
    """Across-row mean and sd of ``P(X = x | Y = y)`` for every modeled ``y``.

    The X support is ``0..cap`` with the top cell absorbing the tail when
    the schema caps X, otherwise ``0..max(x)`` observed.
    """
    x_cap = dataset.schema.x.max_count
    y_cap = dataset.schema.y.max_count
    x_max = x_cap if x_cap is not None else int(dataset.x.max())
    ys = _y_support(dataset)
    mean = np.empty((x_max + 1, len(ys)))
    sd = np.empty_like(mean)
    for j, y in enumerate(ys):
        P = _conditional_matrix(fit.copula, fit.margins_x, fit.margins_y, y, x_max, x_cap, y_cap)
        mean[:, j] = P.mean(axis=0)
        sd[:, j] = P.std(axis=0, ddof=1) if len(P) > 1 else 0.0
    return list(range(x_max + 1)), ys, mean, sd


def conditional_expectation_deltas(fit: IFMResult, dataset: Dataset, support: str = "tail") -> list[dict]:
    """Per-row ``E(X | Y = j) - E(X | Y = j - 1)`` summarised over rows.

    ``support="tail"`` sums ``x`` up to the ``1e-10`` truncation point of
    each row's X margin (the largest over rows is used for all);
    ``support="capped"`` uses the schema's capped X support instead.
    """
    y_cap = dataset.schema.y.max_count
    if support == "tail":
        x_max = max(m.truncation_point(_EXPECTATION_TAIL) for m in set(fit.margins_x))
        x_cap = None
    elif support == "capped":
        x_cap = dataset.schema.x.max_count
        x_max = x_cap if x_cap is not None else int(dataset.x.max())
    else:
        raise ValueError("support must be 'tail' or 'capped'")
    xs = np.arange(x_max + 1)
    ys = _y_support(dataset)
    E = np.column_stack(
        [_conditional_matrix(fit.copula, fit.margins_x, fit.margins_y, y, x_max, x_cap, y_cap) @ xs for y in ys]
    )
    out = []
    for j in range(1, len(ys)):
        d = E[:, j] - E[:, j - 1]
        q1, q2, q3 = np.percentile(d, [25, 50, 75])
        out.append(
            {
                "j": ys[j],
                "mean": float(d.mean()),
                "sd": float(d.std(ddof=1)) if len(d) > 1 else 0.0,
                "q1": float(q1),
                "median": float(q2),
                "q3": float(q3),
            }
        )
    return out


# ---------------------------------------------------------------------------
# end-to-end analysis


@dataclass
class AnalysisReport:
    ingestion: dict
    gof: dict
    fits: dict[str, IFMResult]
    conditional: dict[str, ConditionalReport]

    def to_dict(self) -> dict:
        first = next(iter(self.fits.values()))
        return {
            "ingestion": self.ingestion,
            "goodness_of_fit": self.gof,
            "margins": {"x": first.report_x.to_dict(), "y": first.report_y.to_dict()},
            "copulas": [_copula_row(f) for f in self.fits.values()],
            "conditional": {k: v.to_dict() for k, v in self.conditional.items()},
        }


def _copula_row(f: IFMResult) -> dict:
    return {
        "family": f.copula_fit.family.value,
        "theta": f.theta,
        "minus2loglik": f.minus2loglik,
        "aic": f.aic,
        "tau": f.tau,
        "rho": f.rho,
        "at_boundary": f.copula_fit.at_boundary,
        "converged": f.converged,
    }


def _gof_block(freq: np.ndarray, df_rule: str) -> dict:
    fit = fit_nb2_simple(freq)
    g = chi_square_gof(freq, fit.margin, df_rule=df_rule, n_fitted=1)
    return {
        "mu": fit.mu,
        "psi": fit.psi,
        "observed": freq.tolist(),
        "expected": g.expected.tolist(),
        "chi_square": g.statistic,
        "df": g.df,
        "p_value": g.p_value,
    }


def _analyse_family(dataset: Dataset, family: str, Zx, Zy, cx, cy, expectation_support: str):
    res = ifm_fit(dataset.x, dataset.y, Zx, Zy, family, cx, cy)
    xv, yv, mean, sd = conditional_probabilities(res, dataset)
    deltas = conditional_expectation_deltas(res, dataset, expectation_support)
    return res, ConditionalReport(yv, xv, mean, sd, deltas)


def run_analysis(
    dataset: Dataset,
    families: Sequence[str] | None = None,
    df_rule: str = "cells-1",
    expectation_support: str = "tail",
    workers: int = 1,
) -> AnalysisReport:
    """Goodness of fit, IFM fits and conditional summaries for each family.

    ``workers`` > 1 fits the families in a process pool; results are
    collected in the requested family order either way.
    """
    schema = dataset.schema
    families = list(families) if families is not None else list(schema.families)
    if not families:
        raise ValueError("no copula families requested")
    families = list(dict.fromkeys(Family.parse(f).value for f in families))
    Zx, cx = encode_covariates(dataset, schema.x_covariates)
    Zy, cy = encode_covariates(dataset, schema.y_covariates)
    gof = {
        schema.x.name: _gof_block(dataset.frequency("x"), df_rule),
        schema.y.name: _gof_block(dataset.frequency("y"), df_rule),
    }
    args = [(dataset, fam, Zx, Zy, cx, cy, expectation_support) for fam in families]
    if workers > 1 and len(families) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(families))) as pool:
            results = [f.result() for f in [pool.submit(_analyse_family, *a) for a in args]]
    else:
        results = [_analyse_family(*a) for a in args]
    fits = {fam: r[0] for fam, r in zip(families, results)}
    conditional = {fam: r[1] for fam, r in zip(families, results)}
    return AnalysisReport(dataset.ingestion_report(), gof, fits, conditional)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def emit_report(report: AnalysisReport, out_dir: str | os.PathLike) -> list[Path]:
    """Write ``report.json`` plus CSV tables into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    files = []
    data = report.to_dict()
    p = out / "report.json"
    p.write_text(json.dumps(data, indent=2))
    files.append(p)

    p = out / "copulas.csv"
    keys = ["family", "theta", "minus2loglik", "aic", "tau", "rho", "at_boundary", "converged"]
    _write_csv(p, keys, [[r[k] for k in keys] for r in data["copulas"]])
    files.append(p)

    for side in ("x", "y"):
        p = out / f"margin_{side}.csv"
        rows = [[q["name"], q["estimate"], q["std_error"], q["p_value"]] for q in data["margins"][side]["parameters"]]
        _write_csv(p, ["term", "estimate", "std_error", "p_value"], rows)
        files.append(p)

    p = out / "gof.csv"
    rows = []
    for name, g in data["goodness_of_fit"].items():
        for k, (o, e) in enumerate(zip(g["observed"], g["expected"])):
            rows.append([name, k, o, e])
    _write_csv(p, ["variable", "value", "observed", "expected"], rows)
    files.append(p)

    for fam, rep in report.conditional.items():
        p = out / f"conditional_{fam}.csv"
        rows = [
            [x, y, rep.prob_mean[i, j], rep.prob_sd[i, j]]
            for i, x in enumerate(rep.x_values)
            for j, y in enumerate(rep.y_values)
        ]
        _write_csv(p, ["x", "y", "probability_mean", "probability_sd"], rows)
        files.append(p)
        p = out / f"deltas_{fam}.csv"
        keys = ["j", "mean", "sd", "q1", "median", "q3"]
        _write_csv(p, keys, [[d[k] for k in keys] for d in rep.deltas])
        files.append(p)
    return files


def emit_curve(points: Sequence, path: str | os.PathLike, measure: str = "ratio") -> Path:
    """Write curve points (anything with ``param``, ``theta`` and ``measure`` attributes) as CSV.

    Undefined values (e.g. the ratio at independence) are written as empty cells.
    """
    path = Path(path)
    rows = []
    for pt in points:
        v = getattr(pt, measure)
        rows.append([pt.param, pt.theta, "" if v is None else v])
    _write_csv(path, ["param", "theta", measure], rows)
    return path
