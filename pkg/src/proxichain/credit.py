"""Proximity-based credit scoring with decaying penalties.

A node's total credit is the sum of two parts. The proximity part rewards
keeping distance: every observed contact closer than the immediate threshold
subtracts ``lambda_minus / distance``, every contact at or beyond it adds
``distance / lambda_plus``. The penalty part is always non-positive and
decays hyperbolically with event age, so one misbehavior event dominates
recent history but fades instead of banning a node forever.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

MIN_SEPARATION_M = 0.05


class EventKind(Enum):
    FALSE_CLAIM = "false_claim"
    CONTACT_VIOLATION = "contact_violation"
    NETWORK_ATTACK = "network_attack"


class TemporalOrderError(Exception):
    """A penalty event is not strictly older than the evaluation tick."""


@dataclass(frozen=True)
class CreditPolicy:
    """Coefficients of the scoring rules; all tunable per deployment."""

    lambda_minus: float = 12.0
    lambda_plus: float = 2.0
    omega_fc: float = 50.0
    omega_sc: float = 10.0
    omega_na: float = 200.0
    delta_t: float = 1.0
    alpha_d: float = 0.0
    immediate_threshold: float = 2.0

    def omega(self, kind: EventKind) -> float:
        if kind is EventKind.FALSE_CLAIM:
            return self.omega_fc
        if kind is EventKind.CONTACT_VIOLATION:
            return self.omega_sc
        return self.omega_na


@dataclass(frozen=True)
class CreditEvent:
    kind: EventKind
    tick: int


@dataclass(frozen=True)
class CreditState:
    node: bytes
    prox_credit: float = 0.0
    events: tuple[CreditEvent, ...] = ()


def proximity_credit(distance_m: float, policy: CreditPolicy) -> float:
    """Score of a single contact at the given distance.

    Negative and growing like 1/L inside the immediate threshold, positive
    and linear beyond it. Callers feeding measured distances should clamp
    them to ``MIN_SEPARATION_M`` first (see accumulate_proximity); the raw
    function diverges as L approaches zero by design.
    """
    if distance_m <= 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    if distance_m < policy.immediate_threshold:
        return -policy.lambda_minus / distance_m
    return distance_m / policy.lambda_plus


def accumulate_proximity(
    state: CreditState,
    contacts: Sequence[tuple[bytes, float]],
    policy: CreditPolicy,
) -> CreditState:
    """Add the scores of one tick's observed contacts onto the running total."""
    gained = 0.0
    for _, distance in contacts:
        gained += proximity_credit(max(distance, MIN_SEPARATION_M), policy)
    return replace(state, prox_credit=state.prox_credit + gained)


def negative_credit(
    events: Iterable[CreditEvent], now: int, policy: CreditPolicy
) -> float:
    """Non-positive penalty sum, each event weighted by omega and 1/age."""
    total = 0.0
    for event in events:
        age = now - event.tick
        if age <= 0:
            raise TemporalOrderError(
                f"event at tick {event.tick} is not older than now={now}"
            )
        total -= policy.omega(event.kind) * policy.delta_t / age
    return total


def total_credit(state: CreditState, now: int, policy: CreditPolicy) -> float:
    return state.prox_credit + negative_credit(state.events, now, policy)


def record_event(state: CreditState, kind: EventKind, tick: int) -> CreditState:
    return replace(state, events=state.events + (CreditEvent(kind, tick),))


@dataclass
class CreditBook:
    """Mutable per-node credit table used by the simulation scheduler."""

    policy: CreditPolicy
    states: dict[bytes, CreditState] = field(default_factory=dict)

    def get(self, node: bytes) -> CreditState:
        return self.states.setdefault(node, CreditState(node=node))

    def add_proximity(self, node: bytes, gained: float) -> None:
        state = self.get(node)
        self.states[node] = replace(state, prox_credit=state.prox_credit + gained)

    def punish(self, node: bytes, kind: EventKind, tick: int) -> None:
        self.states[node] = record_event(self.get(node), kind, tick)

    def total(self, node: bytes, now: int) -> float:
        return total_credit(self.get(node), now, self.policy)

    def breakdown(self, node: bytes, now: int) -> tuple[float, float, float]:
        state = self.get(node)
        neg = negative_credit(state.events, now, self.policy)
        return state.prox_credit, neg, state.prox_credit + neg
