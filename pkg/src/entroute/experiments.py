"""Parameter sweeps: expand an experiment spec into simulation cells, execute
them (optionally across processes), and write one CSV row per run."""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import dataclass, replace
from typing import Optional

from . import metrics
from .engine import SimConfig, TopologySpec, run

_FLOAT_KEYS = (
    "gen_prob", "bsm_prob", "init_fidelity", "coherence_time", "decay_scale",
    "alpha", "beta", "attempt_period", "hop_latency", "duration", "warmup",
    "request_interval", "synch_overhead",
)
_INT_KEYS = ("memory", "n_requests", "retry_cap", "synch_gen_attempts", "seed", "root")


def _parse_number(value):
    if isinstance(value, str):
        if value == "inf":
            return math.inf
        return float(value)
    return value


def config_from_dict(data: dict, base: Optional[SimConfig] = None) -> SimConfig:
    """Build a SimConfig from a JSON-style dict, layered over `base`."""
    cfg = base if base is not None else SimConfig()
    fields: dict = {}
    if "topology" in data:
        fields["topology"] = TopologySpec.from_dict(data["topology"])
    for key in ("strategy", "core"):
        if key in data:
            fields[key] = data[key]
    for key in _FLOAT_KEYS:
        if key in data and data[key] is not None:
            fields[key] = float(_parse_number(data[key]))
    if "synch_overhead" in data and data["synch_overhead"] is None:
        fields["synch_overhead"] = None
    for key in _INT_KEYS:
        if key in data and data[key] is not None:
            fields[key] = int(data[key])
    for key in ("event_log", "debug_checks"):
        if key in data:
            fields[key] = bool(data[key])
    if "workload" in data and data["workload"] is not None:
        fields["workload"] = tuple(tuple(pair) for pair in data["workload"])
    if "link_overrides" in data:
        fields["link_overrides"] = tuple(tuple(o) for o in data["link_overrides"])
    return replace(cfg, **fields)


def load_config_file(path: str) -> SimConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


@dataclass(frozen=True)
class ExperimentSpec:
    """Cartesian sweep blocks over strategies, topologies, N, T_co, and seeds,
    layered over shared defaults. Cells duplicated across blocks run once."""

    cells: tuple[SimConfig, ...]
    output: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        base = config_from_dict(data.get("defaults", {}))
        cells: list[SimConfig] = []
        seen = set()
        for block in data["blocks"]:
            block_base = config_from_dict(
                {k: v for k, v in block.items()
                 if k not in ("strategies", "topologies", "n_requests", "coherence_times", "seeds")},
                base,
            )
            for topo in block.get("topologies", [None]):
                for strategy in block.get("strategies", [block_base.strategy]):
                    for n in block.get("n_requests", [block_base.n_requests]):
                        for t_co in block.get("coherence_times", [block_base.coherence_time]):
                            for seed in block.get("seeds", [block_base.seed]):
                                cfg = replace(
                                    block_base,
                                    topology=(TopologySpec.from_dict(topo) if topo
                                              else block_base.topology),
                                    strategy=strategy,
                                    n_requests=int(n),
                                    coherence_time=float(_parse_number(t_co)),
                                    seed=int(seed),
                                )
                                if cfg not in seen:
                                    seen.add(cfg)
                                    cells.append(cfg)
        return cls(tuple(cells), data.get("output"))

    @classmethod
    def load(cls, path: str) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> list[str]:
        problems = []
        if not self.cells:
            problems.append("experiment spec expands to zero cells")
        for i, cfg in enumerate(self.cells):
            for problem in cfg.validate():
                problems.append(f"cell {i}: {problem}")
        return problems


def _run_cell(cfg: SimConfig) -> str:
    return metrics.csv_row(run(cfg))


def run_experiment(spec: ExperimentSpec, jobs: int = 1,
                   progress=None) -> list[str]:
    """Execute every cell; returns CSV rows in deterministic cell order."""
    problems = spec.validate()
    if problems:
        raise ValueError("invalid experiment spec: " + "; ".join(problems))
    rows: list[str] = []
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            for i, row in enumerate(pool.imap(_run_cell, spec.cells)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(spec.cells))
    else:
        for i, cfg in enumerate(spec.cells):
            rows.append(_run_cell(cfg))
            if progress:
                progress(i + 1, len(spec.cells))
    return rows


def write_csv(rows: list[str], path: str) -> None:
    with open(path, "w") as fh:
        fh.write(metrics.CSV_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
