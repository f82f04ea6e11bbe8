"""Reputation engine: softmax slot selection, one-sided penalty updates,
epoch doubling with reset, and revenue allocation.

Reputations are nonpositive integers per (provider, collector-slot). Slots
labeling a verified transaction wrongly lose one unit; an absent report
counts as a -1 label, so it is penalized only when the transaction turns out
valid. After ``epoch_threshold`` verified transactions the accumulated
reputations pay out revenue, reset to zero, the threshold doubles, and the
learning rate is retuned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence


class TopologyError(ValueError):
    """A provider ended up with no collector slots."""


@dataclass(frozen=True, slots=True)
class EtaPolicy:
    """How the learning rate is chosen at scenario start and each doubling.

    ``PerEpochSqrt`` retunes eta to sqrt(ln u / T_i) whenever the threshold
    doubles; ``Fixed`` keeps the configured value forever.
    """

    kind: str
    value: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("PerEpochSqrt", "Fixed"):
            raise ValueError(f"unknown eta policy kind: {self.kind!r}")
        if self.kind == "Fixed" and (self.value is None or self.value <= 0):
            raise ValueError("Fixed eta policy needs a positive value")

    def eta_for(self, u: int, threshold: int) -> float:
        if self.kind == "Fixed":
            return float(self.value)  # type: ignore[arg-type]
        return math.sqrt(math.log(u) / threshold)


@dataclass(frozen=True, slots=True)
class ReputationState:
    """Per-provider reputation vector plus epoch counters."""

    reps: tuple[int, ...]
    cnt: int
    epoch_threshold: int
    eta: float
    epoch_index: int


@dataclass(frozen=True, slots=True)
class RevenueReport:
    """Per-slot revenue shares of one epoch's unit profit; shares sum to 1."""

    shares: tuple[float, ...]


def initial_state(u: int, threshold: int, policy: EtaPolicy) -> ReputationState:
    if u < 1:
        raise TopologyError("provider has no collector slots")
    if threshold < 1:
        raise ValueError(f"epoch threshold must be >= 1, got {threshold}")
    return ReputationState(
        reps=(0,) * u,
        cnt=0,
        epoch_threshold=threshold,
        eta=policy.eta_for(u, threshold),
        epoch_index=0,
    )


def _softmax(reps: Sequence[float], scale: float) -> tuple[float, ...]:
    if not reps:
        raise TopologyError("empty reputation vector: provider has no collectors")
    m = max(reps)
    ws = [math.exp(scale * (r - m)) for r in reps]
    total = sum(ws)
    return tuple(w / total for w in ws)


def selection_probabilities(reps: Sequence[float], eta: float) -> tuple[float, ...]:
    """Probability of each slot, proportional to exp(eta * reputation).

    Computed with max-subtraction so deeply negative reputations stay stable.
    """
    return _softmax(reps, eta)


def draw_collector(probs: Sequence[float], rng) -> int:
    """Inverse-CDF draw over slots in canonical order; advances rng once."""
    r = rng.random()
    acc = 0.0
    last = len(probs) - 1
    for k, p in enumerate(probs):
        acc += p
        if r < acc:
            return k
    return last


def penalized_slots(
    u: int, received_labels: Mapping[int, int], valid: bool
) -> tuple[int, ...]:
    """Slots that lose one reputation unit for this verified transaction.

    Verified valid: every slot whose effective label is not +1 (reported -1
    or stayed silent). Verified invalid: every slot that reported +1.
    """
    if valid:
        return tuple(k for k in range(u) if received_labels.get(k) != 1)
    return tuple(k for k in range(u) if received_labels.get(k) == 1)


def update_reputations(
    state: ReputationState, received_labels: Mapping[int, int], valid: bool
) -> ReputationState:
    """Apply one verified transaction's penalties and bump the epoch counter."""
    reps = list(state.reps)
    for k in penalized_slots(len(reps), received_labels, valid):
        reps[k] -= 1
    return ReputationState(
        reps=tuple(reps),
        cnt=state.cnt + 1,
        epoch_threshold=state.epoch_threshold,
        eta=state.eta,
        epoch_index=state.epoch_index,
    )


def revenue_shares(reps: Sequence[int], mu: float) -> RevenueReport:
    """Softmax of reputations with parameter mu > 0."""
    return RevenueReport(shares=_softmax(reps, mu))


def maybe_advance_epoch(
    state: ReputationState, u: int, mu: float, policy: EtaPolicy
) -> tuple[ReputationState, RevenueReport | None]:
    """At the epoch boundary: pay revenue, reset reputations, double T, retune eta.

    Call after every update_reputations; anywhere short of the boundary this
    is the identity.
    """
    if state.cnt < state.epoch_threshold:
        return state, None
    report = revenue_shares(state.reps, mu)
    new_threshold = state.epoch_threshold * 2
    return (
        ReputationState(
            reps=(0,) * u,
            cnt=0,
            epoch_threshold=new_threshold,
            eta=policy.eta_for(u, new_threshold),
            epoch_index=state.epoch_index + 1,
        ),
        report,
    )
