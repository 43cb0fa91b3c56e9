"""Stochastic quantum-resource layer: probabilistic pair generation on links,
exponential fidelity decay in memory, probabilistic BSM swapping with
Werner-state fidelity composition, and hard coherence-time expiry.

All functions are pure over an explicit RNG stream (one stream per run, owned
by the engine), so the whole layer is bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .topology import WERNER_FLOOR, LinkSpec


@dataclass(frozen=True)
class EntangledPair:
    """A live two-endpoint entangled resource."""

    node_a: int
    node_b: int
    fidelity_at_creation: float
    created_at: float
    swap_count: int = 0

    def __post_init__(self):
        if self.node_a == self.node_b:
            raise ValueError("pair endpoints must be distinct")
        if self.fidelity_at_creation < WERNER_FLOOR:
            raise ValueError(f"fidelity {self.fidelity_at_creation} below the Werner floor")

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.node_a, self.node_b)


@dataclass(frozen=True)
class NoiseParams:
    """Hardware parameters: generation/BSM success, initial fidelity, memory
    lifetime. tau = decay_scale * coherence_time drives the exponential decay;
    the hard cutoff at coherence_time is applied independently of decay."""

    gen_prob: float = 0.8
    bsm_prob: float = 0.9
    init_fidelity: float = 0.95
    coherence_time: float = math.inf
    decay_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gen_prob <= 1.0:
            raise ValueError(f"gen_prob {self.gen_prob} outside [0, 1]")
        if not 0.0 <= self.bsm_prob <= 1.0:
            raise ValueError(f"bsm_prob {self.bsm_prob} outside [0, 1]")
        if not WERNER_FLOOR <= self.init_fidelity <= 1.0:
            raise ValueError(f"init_fidelity {self.init_fidelity} outside [0.25, 1]")
        if self.coherence_time <= 0.0:
            raise ValueError("coherence_time must be positive")
        if self.decay_scale <= 0.0:
            raise ValueError("decay_scale must be positive")

    @property
    def tau(self) -> float:
        return self.decay_scale * self.coherence_time


def attempt_link_generation(link: LinkSpec, now: float, rng) -> Optional[EntangledPair]:
    """One heralded generation attempt; consumes exactly one RNG draw."""
    if rng.random() < link.gen_prob:
        return EntangledPair(link.u, link.v, link.init_fidelity, now)
    return None


def decay_fidelity(fidelity: float, age: float, tau: float) -> float:
    """Werner-style storage decay toward the 1/4 floor."""
    return WERNER_FLOOR + (fidelity - WERNER_FLOOR) * math.exp(-age / tau)


def decayed_fidelity(pair: EntangledPair, now: float, tau: float) -> float:
    """Fidelity of a stored pair after decaying since its creation."""
    return decay_fidelity(pair.fidelity_at_creation, now - pair.created_at, tau)


def compose_swap_fidelity(f1: float, f2: float) -> float:
    """Werner-channel composition of two segment fidelities."""
    return f1 * f2 + (1.0 - f1) * (1.0 - f2) / 3.0


def attempt_swap(
    left: EntangledPair,
    right: EntangledPair,
    at_node: int,
    now: float,
    params: NoiseParams,
    rng,
) -> Optional[EntangledPair]:
    """BSM at the shared endpoint. Both inputs are consumed either way; with
    probability bsm_prob returns the merged pair spanning the outer endpoints,
    with storage decay accrued so far folded into its creation fidelity."""
    shared = set(left.endpoints) & set(right.endpoints)
    if shared != {at_node}:
        raise ValueError(f"pairs do not share exactly endpoint {at_node}")
    if rng.random() >= params.bsm_prob:
        return None
    (outer_l,) = set(left.endpoints) - {at_node}
    (outer_r,) = set(right.endpoints) - {at_node}
    fidelity = compose_swap_fidelity(
        decayed_fidelity(left, now, params.tau),
        decayed_fidelity(right, now, params.tau),
    )
    return EntangledPair(
        outer_l, outer_r, fidelity, now, left.swap_count + right.swap_count + 1
    )


def is_expired(pair: EntangledPair, now: float, coherence_time: float) -> bool:
    """True once the pair has outlived the hard coherence cutoff."""
    return math.isfinite(coherence_time) and (now - pair.created_at) > coherence_time
