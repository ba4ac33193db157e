"""Experiment configuration and disorder Monte Carlo sweeps.

Realization ``r`` at any ``sigma`` uses the random stream
``SeedSequence(entropy=seed, spawn_key=(r,))``; the same normal draws are
rescaled by ``sigma``, so every point of a sigma grid sees the same disorder
shapes. Rows are sorted by ``(sigma, realization_index)`` before output, which
makes the CSV independent of worker count and completion order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Any, Mapping, Sequence

import jsonschema
import numpy as np

from .dynamics import DecaySpec, NumericalError
from .lattice import DisorderMode, DisorderSpec, LatticeSpec
from .protocols import ProtocolPlan, make_plan, run_protocol

ROW_FIELDS = (
    "realization_index", "sigma", "mode", "f", "entanglement",
    "p_vac", "p_edge_literal", "p_edge_linear", "p_no_bulk", "p_trivial",
)
METRIC_FIELDS = ROW_FIELDS[3:]

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "protocol": {"type": "string", "enum": ["phi", "psi", "psiqutrit", "w", "ghz",
                                                 "bell1", "bell4", "psi1", "psi4", "psiq1", "psiq4"]},
        "n_d": {"type": "integer", "minimum": 1},
        "ell": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "p": {"type": "integer", "minimum": 2, "maximum": 5},
        "eta": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "timings": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_prep": {"type": "number", "exclusiveMinimum": 0},
                "t_tr": {"type": "number", "exclusiveMinimum": 0},
                "t_bar": {"type": "number", "exclusiveMinimum": 0},
                "v_tr": {"type": "number", "exclusiveMinimum": 0},
                "v_interior": {"type": "number", "exclusiveMinimum": 0},
                "v_bar": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "disorder": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"type": "string", "enum": ["od", "g", "offdiagonal", "general"]},
                "sigma": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
        },
        "realizations": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "step": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.02},
        "gamma": {"type": "number", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
    },
    "required": ["protocol"],
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "bell1"
    n_d: int = 1
    ell: int = 12
    p: int = 3
    eta: complex = -1
    timings: Mapping[str, float] = field(default_factory=dict)
    mode: DisorderMode = DisorderMode.OFF_DIAGONAL
    sigmas: tuple[float, ...] = (0.0,)
    realizations: int = 1000
    seed: int = 0
    step: float = 0.01
    gamma: float = 0.0
    workers: int = 1
    out: str = "."

    def __post_init__(self):
        object.__setattr__(self, "mode", DisorderMode.parse(self.mode))
        sig = tuple(float(s) for s in self.sigmas)
        if not sig:
            raise ConfigError("disorder.sigma: empty sigma grid")
        if any(s < 0 for s in sig) or list(sig) != sorted(sig):
            raise ConfigError("disorder.sigma: must be nonnegative and ascending")
        object.__setattr__(self, "sigmas", sig)
        if self.realizations < 1:
            raise ConfigError("realizations: must be at least 1")
        if not 0 < self.step <= 0.02:
            raise ConfigError("step: must lie in (0, 0.02]")
        if self.gamma < 0:
            raise ConfigError("gamma: must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers: must be at least 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.path))
        if errors:
            e = errors[0]
            where = ".".join(str(x) for x in e.path) or "<root>"
            raise ConfigError(f"{where}: {e.message}")
        dis = data.get("disorder", {})
        eta = data.get("eta", [-1.0, 0.0])
        return cls(
            protocol=data["protocol"],
            n_d=data.get("n_d", 1),
            ell=data.get("ell", 12),
            p=data.get("p", 3),
            eta=complex(eta[0], eta[1]),
            timings=dict(data.get("timings", {})),
            mode=dis.get("mode", "od"),
            sigmas=tuple(dis.get("sigma", [0.0])),
            realizations=data.get("realizations", 1000),
            seed=data.get("seed", 0),
            step=data.get("step", 0.01),
            gamma=data.get("gamma", 0.0),
            workers=data.get("workers", 1),
            out=data.get("out", "."),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<root>: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def plan(self) -> ProtocolPlan:
        plan = make_plan(self.protocol, n_d=self.n_d, ell=self.ell, p=self.p, eta=self.eta)
        if self.timings:
            plan = replace(plan, timings=replace(plan.timings, **self.timings))
        return plan

    def decay(self) -> DecaySpec | None:
        return DecaySpec(self.gamma) if self.gamma else None


def _realization(task: tuple[ProtocolPlan, float, DisorderMode, int, int, float, float]) -> dict:
    plan, sigma, mode, seed, index, step, gamma = task
    dis = DisorderSpec(mode, sigma, seed, index)
    row = {"realization_index": index, "sigma": sigma, "mode": mode.value}
    try:
        res = run_protocol(plan, dis, DecaySpec(gamma) if gamma else None, step, strict=False)
        m = res.metrics
        row.update(f=m.f, entanglement=m.entanglement, p_vac=m.p_vac, p_edge_literal=m.p_edge_literal,
                   p_edge_linear=m.p_edge_linear, p_no_bulk=m.p_no_bulk, p_trivial=m.p_trivial)
    except NumericalError:
        row.update({k: math.nan for k in METRIC_FIELDS})
    return row


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list[dict]

    @property
    def failed(self) -> int:
        return sum(1 for r in self.rows if math.isnan(r["f"]))

    def aggregate(self) -> list[dict]:
        """Per-sigma mean and unbiased standard deviation of each metric over finished realizations."""
        out = []
        for sigma in self.config.sigmas:
            rows = [r for r in self.rows if r["sigma"] == sigma and not math.isnan(r["f"])]
            agg = {"sigma": sigma, "mode": self.config.mode.value, "n": len(rows)}
            for k in METRIC_FIELDS:
                vals = np.array([r[k] for r in rows if r[k] is not None], dtype=float)
                agg[f"mean_{k}"] = float(vals.mean()) if vals.size else math.nan
                agg[f"std_{k}"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            out.append(agg)
        return out

    def write_rows(self, fh: IO[str]) -> None:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r[k]) for k in ROW_FIELDS})

    def write_aggregate(self, fh: IO[str]) -> None:
        agg = self.aggregate()
        fields = ["sigma", "mode", "n"] + [f"{s}_{k}" for k in METRIC_FIELDS for s in ("mean", "std")]
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for a in agg:
            w.writerow({k: _fmt(a[k]) for k in fields})


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else x


def run_sweep(config: ExperimentConfig, plan: ProtocolPlan | None = None) -> SweepResult:
    """Run every ``(sigma, realization)`` pair of the configuration."""
    plan = config.plan() if plan is None else plan
    tasks = [
        (plan, s, config.mode, config.seed, r, config.step, config.gamma)
        for s in config.sigmas
        for r in range(config.realizations)
    ]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_realization, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))
    else:
        rows = [_realization(t) for t in tasks]
    rows.sort(key=lambda r: (r["sigma"], r["realization_index"]))
    return SweepResult(config, rows)


# spectrum models ----------------------------------------------------------


def spectrum_lattice(model: str) -> LatticeSpec:
    """Chains used for the disorder-averaged spectra, at the transfer plateau values."""
    if model in ("1", "1dom", "single"):
        return LatticeSpec(N=1, ell=12, u0=0.5, u=(0.5,), v=(0.5,))
    if model in ("4", "4dom", "four"):
        return LatticeSpec(N=4, ell=4, u0=0.5, u=(0.5, 0.0, 0.0, 0.5), v=(0.5, 0.38, 0.38, 0.5), stubs=False)
    raise ValueError(f"unknown spectrum model {model!r}")


def sigma_list(text: str | Sequence[float]) -> tuple[float, ...]:
    if isinstance(text, str):
        parts = [t for t in text.replace(" ", "").split(",") if t]
        try:
            return tuple(float(t) for t in parts)
        except ValueError as exc:
            raise ConfigError(f"sigma: {exc}") from exc
    return tuple(float(t) for t in text)
