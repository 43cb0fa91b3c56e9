"""Per-run evaluation quantities (throughput, mean end-to-end fidelity,
Jain's fairness index) and the CSV record format used by sweeps and plots."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

CSV_COLUMNS = (
    "strategy",
    "topology",
    "topo_a",
    "topo_b",
    "n_requests",
    "t_co",
    "seed",
    "throughput",
    "mean_fidelity",
    "jain_index",
    "delivered",
    "duration",
)

CSV_HEADER = ",".join(CSV_COLUMNS)


@dataclass(frozen=True)
class TenantTally:
    """Service received by one concurrent request slot over the run."""

    tenant: int
    served: int
    failed: int
    mean_fidelity: Optional[float]


@dataclass(frozen=True)
class MetricsRecord:
    strategy: str
    topology: str
    topo_a: float
    topo_b: float
    n_requests: int
    coherence_time: float
    seed: int
    aggregate_throughput: float
    mean_fidelity: Optional[float]
    jain_index: Optional[float]
    delivered_count: int
    sim_duration: float
    per_request: tuple[TenantTally, ...]
    delivered_total: int = 0
    events: int = 0
    kprime_violations: int = 0


def jain_index(throughputs: Sequence[float]) -> Optional[float]:
    """(Sum x)^2 / (n * Sum x^2); None for an all-zero population."""
    if not throughputs:
        return None
    if any(x < 0 for x in throughputs):
        raise ValueError("throughputs must be non-negative")
    total = float(sum(throughputs))
    square_sum = float(sum(x * x for x in throughputs))
    if square_sum == 0.0:
        return None
    return (total * total) / (len(throughputs) * square_sum)


def aggregate(config, result) -> MetricsRecord:
    """Fold a core's raw tallies into the per-run record."""
    per_request = []
    for tenant, served in enumerate(result.served_by_tenant):
        fid_sum = result.fid_sum_by_tenant[tenant]
        per_request.append(
            TenantTally(
                tenant,
                served,
                result.failed_by_tenant[tenant],
                (fid_sum / served) if served else None,
            )
        )
    mean_fid = (result.fidelity_sum / result.delivered) if result.delivered else None
    return MetricsRecord(
        strategy=config.strategy,
        topology=config.topology.kind,
        topo_a=config.topology.param_a,
        topo_b=config.topology.param_b,
        n_requests=config.n_requests,
        coherence_time=config.coherence_time,
        seed=config.seed,
        aggregate_throughput=result.delivered / config.duration,
        mean_fidelity=mean_fid,
        jain_index=jain_index(result.served_by_tenant),
        delivered_count=result.delivered,
        sim_duration=config.duration,
        per_request=tuple(per_request),
        delivered_total=result.delivered_total,
        events=result.events,
        kprime_violations=result.kprime_violations,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        if value == int(value) and abs(value) < 1e15:
            return str(int(value))
        return f"{value:.6g}"
    return str(value)


def csv_row(record: MetricsRecord) -> str:
    """One CSV line, 6 significant digits, stable across reruns."""
    fields = (
        record.strategy,
        record.topology,
        record.topo_a,
        record.topo_b,
        record.n_requests,
        record.coherence_time,
        record.seed,
        record.aggregate_throughput,
        record.mean_fidelity,
        record.jain_index,
        record.delivered_count,
        record.sim_duration,
    )
    return ",".join(_fmt(f) for f in fields)


def parse_csv(text: str) -> list[dict]:
    """Read rows written by csv_row back into dicts with typed values."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    header = lines[0].split(",")
    if header != list(CSV_COLUMNS):
        raise ValueError(f"unexpected CSV header: {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        row: dict = dict(zip(header, parts))
        for key in ("topo_a", "topo_b", "t_co", "throughput", "duration"):
            row[key] = float(row[key])
        for key in ("n_requests", "seed", "delivered"):
            row[key] = int(row[key])
        for key in ("mean_fidelity", "jain_index"):
            row[key] = float(row[key]) if row[key] else None
        rows.append(row)
    return rows
