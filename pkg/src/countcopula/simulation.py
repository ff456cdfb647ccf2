"""Seeded Monte Carlo replication studies for copula count models.

Each ``(theta, n)`` cell draws ``replications`` samples from the true
model, refits the copula parameter with the margins held at their true
values, and summarises the plug-in Kendall's tau and Spearman's rho.
Replication ``r`` of cell ``c`` always uses the generator seeded by
``SeedSequence(seed, spawn_key=(c, r))``, so results do not depend on the
number of worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from countcopula.copulas import CopulaSpec, Family
from countcopula.dependence import BivariateCountModel, tau_and_rho
from countcopula.estimation import fit_copula_theta, fit_nb2_simple, frequency_table
from countcopula.exceptions import ConvergenceError, DataError
from countcopula.margins import DiscreteMargin, format_margin, parse_margin

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

__all__ = [
    "sample_counts",
    "StudyConfig",
    "CellSummary",
    "StudyResult",
    "StudyFailure",
    "run_study",
    "load_study_configs",
    "CSV_COLUMNS",
]

PLUG_IN_MODES = ("sample", "full")
MAX_EXCLUDED_FRACTION = 0.05
_RATIO_TAU_MIN = 1e-6

CSV_COLUMNS = [
    "family",
    "theta",
    "tau",
    "rho",
    "n",
    "theta_hat_mean",
    "theta_hat_sd",
    "tau_hat_mean",
    "tau_hat_sd",
    "rho_hat_mean",
    "rho_hat_sd",
    "ratio_hat",
    "replications",
    "excluded",
]


class StudyFailure(RuntimeError):
    """Too many replications of a study cell failed to produce a fit."""


def sample_counts(model: BivariateCountModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` count pairs as an ``(n, 2)`` integer array."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return model.sample(n, rng)


@dataclass(frozen=True)
class StudyConfig:
    """One replication study: a family, a theta grid and a set of sample sizes.

    ``plug_in`` selects the support of the plug-in tau and rho sums:
    ``"sample"`` stops each margin's sum at the largest value observed in
    the replication, ``"full"`` runs it to the margin's truncation point.
    ``refit_margins`` re-estimates NB2 margins from each sample instead of
    using the true margins.
    """

    family: Family
    thetas: tuple[float, ...]
    margin_x: DiscreteMargin
    margin_y: DiscreteMargin
    sample_sizes: tuple[int, ...] = (100, 300, 800)
    replications: int = 200
    seed: int = 0
    plug_in: str = "sample"
    refit_margins: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        if not self.family.has_parameter:
            raise ValueError(f"{self.family.value} has no parameter to estimate")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.thetas or not self.sample_sizes:
            raise ValueError("need at least one theta and one sample size")
        if any(n < 1 for n in self.sample_sizes):
            raise ValueError("sample sizes must be positive")
        if self.plug_in not in PLUG_IN_MODES:
            raise ValueError(f"plug_in must be one of {PLUG_IN_MODES}")
        for t in self.thetas:
            CopulaSpec(self.family, t)  # domain check

    def cells(self) -> list[tuple[float, int]]:
        return [(t, n) for t in self.thetas for n in self.sample_sizes]

    @classmethod
    def from_mapping(cls, data: dict, defaults: dict | None = None) -> "StudyConfig":
        merged = {**(defaults or {}), **data}
        known = {
            "family",
            "thetas",
            "margin_x",
            "margin_y",
            "sample_sizes",
            "replications",
            "seed",
            "plug_in",
            "refit_margins",
            "name",
        }
        unknown = set(merged) - known
        if unknown:
            raise ValueError(f"unknown study keys: {sorted(unknown)}")
        missing = {"family", "thetas", "margin_x", "margin_y"} - set(merged)
        if missing:
            raise ValueError(f"missing study keys: {sorted(missing)}")
        kw = dict(merged)
        for key in ("margin_x", "margin_y"):
            if isinstance(kw[key], str):
                kw[key] = parse_margin(kw[key])
        return cls(**kw)


@dataclass(frozen=True)
class CellSummary:
    family: str
    theta: float
    tau: float
    rho: float
    n: int
    theta_hat_mean: float
    theta_hat_sd: float
    tau_hat_mean: float
    tau_hat_sd: float
    rho_hat_mean: float
    rho_hat_sd: float
    ratio_hat: float | None
    replications: int
    excluded: int


@dataclass
class StudyResult:
    config: StudyConfig
    cells: list[CellSummary] = field(default_factory=list)

    def cell(self, theta: float, n: int) -> CellSummary:
        for c in self.cells:
            if c.theta == theta and c.n == n:
                return c
        raise KeyError((theta, n))

    def to_records(self) -> list[dict]:
        return [asdict(c) for c in self.cells]

    def to_json(self) -> str:
        cfg = self.config
        meta = {
            "name": cfg.name,
            "family": cfg.family.value,
            "thetas": list(cfg.thetas),
            "margin_x": format_margin(cfg.margin_x),
            "margin_y": format_margin(cfg.margin_y),
            "sample_sizes": list(cfg.sample_sizes),
            "replications": cfg.replications,
            "seed": cfg.seed,
            "plug_in": cfg.plug_in,
            "refit_margins": cfg.refit_margins,
        }
        return json.dumps({"config": meta, "cells": self.to_records()}, indent=2)

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for rec in self.to_records():
                w.writerow({k: ("" if v is None else v) for k, v in rec.items()})

    def write_json(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_json())

    def format_table(self, digits: int = 6) -> str:
        """Plain-text table with one row per (theta, n) cell (``digits`` significant)."""

        def g(x):
            return "NA" if x is None else f"{x:.{digits}g}"

        head = ["theta", "tau", "rho", "n", "theta_hat", "sd", "tau_hat", "sd", "rho_hat", "sd", "ratio"]
        rows = [
            [g(c.theta), g(c.tau), g(c.rho), str(c.n), g(c.theta_hat_mean), g(c.theta_hat_sd), g(c.tau_hat_mean),
             g(c.tau_hat_sd), g(c.rho_hat_mean), g(c.rho_hat_sd), g(c.ratio_hat)]
            for c in self.cells
        ]
        width = [max(len(r[k]) for r in rows + [head]) for k in range(len(head))]
        title = f"{self.config.family.value}: {format_margin(self.config.margin_x)} x {format_margin(self.config.margin_y)}"
        lines = [title] + ["  ".join(v.rjust(w) for v, w in zip(r, width)) for r in [head] + rows]
        return "\n".join(lines)


def _replicate(config: StudyConfig, cell: int, rep: int, theta: float, n: int) -> tuple[float, float, float] | None:
    """One replication; returns ``(theta_hat, tau_hat, rho_hat)`` or None on failure."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(cell, rep)))
    truth = BivariateCountModel(CopulaSpec(config.family, theta), config.margin_x, config.margin_y)
    pairs = sample_counts(truth, n, rng)
    try:
        if config.refit_margins:
            mx = fit_nb2_simple(frequency_table(pairs[:, 0])).margin
            my = fit_nb2_simple(frequency_table(pairs[:, 1])).margin
        else:
            mx, my = config.margin_x, config.margin_y
        fit = fit_copula_theta(pairs, mx, my, config.family)
        model = BivariateCountModel(fit.copula, mx, my)
        if config.plug_in == "sample":
            tau, rho = tau_and_rho(model, support_x=int(pairs[:, 0].max()), support_y=int(pairs[:, 1].max()))
        else:
            tau, rho = tau_and_rho(model)
    except (ConvergenceError, DataError, ArithmeticError, ValueError) as exc:
        logger.warning("cell %d replication %d failed: %s", cell, rep, exc)
        return None
    return fit.theta, tau, rho


def _run_cell(config: StudyConfig, cell: int, theta: float, n: int) -> list:
    return [_replicate(config, cell, r, theta, n) for r in range(config.replications)]


def _summarise(config: StudyConfig, theta: float, n: int, runs: list) -> CellSummary:
    ok = np.array([r for r in runs if r is not None], dtype=float).reshape(-1, 3)
    excluded = len(runs) - len(ok)
    if excluded > MAX_EXCLUDED_FRACTION * len(runs):
        raise StudyFailure(f"theta={theta:g}, n={n}: {excluded} of {len(runs)} replications failed")
    truth = BivariateCountModel(CopulaSpec(config.family, theta), config.margin_x, config.margin_y)
    tau, rho = tau_and_rho(truth)
    mean = ok.mean(axis=0)
    sd = ok.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(3)
    ratio = float(mean[2] / mean[1]) if abs(mean[1]) >= _RATIO_TAU_MIN else None
    return CellSummary(
        family=config.family.value,
        theta=theta,
        tau=float(tau),
        rho=float(rho),
        n=n,
        theta_hat_mean=float(mean[0]),
        theta_hat_sd=float(sd[0]),
        tau_hat_mean=float(mean[1]),
        tau_hat_sd=float(sd[1]),
        rho_hat_mean=float(mean[2]),
        rho_hat_sd=float(sd[2]),
        ratio_hat=ratio,
        replications=len(ok),
        excluded=excluded,
    )


def run_study(config: StudyConfig, workers: int | None = 1) -> StudyResult:
    """Run every ``(theta, n)`` cell of ``config``.

    ``workers`` > 1 distributes cells over a process pool; the output is
    identical to the serial run because every replication owns its seed
    and results are reduced in cell order.
    """
    cells = config.cells()
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            futures = [pool.submit(_run_cell, config, i, t, n) for i, (t, n) in enumerate(cells)]
            runs = [f.result() for f in futures]
    else:
        runs = [_run_cell(config, i, t, n) for i, (t, n) in enumerate(cells)]
    result = StudyResult(config)
    for (t, n), cell_runs in zip(cells, runs):
        result.cells.append(_summarise(config, t, n, cell_runs))
    return result


def load_study_configs(path: str | os.PathLike, replications: int | None = None) -> list[StudyConfig]:
    """Read ``[[study]]`` tables from a TOML file.

    Top-level keys act as defaults for every study; ``replications``
    overrides the file when given.
    """
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    studies = data.pop("study", None)
    if not studies:
        raise ValueError(f"{path}: no [[study]] tables found")
    configs = []
    for i, s in enumerate(studies):
        if replications is not None:
            s = {**s, "replications": replications}
        s.setdefault("name", f"study{i + 1}")
        configs.append(StudyConfig.from_mapping(s, data))
    return configs
