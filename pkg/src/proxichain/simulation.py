"""Discrete-time indoor world driving credits, transactions and mining.

One tick is one simulated second. Agents random-walk inside a 10 by 10 m
venue; every tick their pairwise distances feed the credit rules, immediate
contacts (below 2 m) are logged for later trace evidence, and two infection
processes (2 m and 5 m exposure radius) advance on shared random draws so
their cumulative counts are comparable tick by tick within a single run.
Diagnosed agents emit trace transactions listing only (node id, tick) pairs;
background submission/query traffic fills the rest of each block.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .consensus import difficulty_for, mine
from .credit import (
    CreditBook,
    CreditPolicy,
    EventKind,
    MIN_SEPARATION_M,
    negative_credit,
)
from .identity import (
    AuthorizedRegistry,
    NodeIdentity,
    Role,
    generate_identity,
    publish_registry,
    registry_to_json,
)
from .ledger import (
    Block,
    BlockOverflowError,
    Chain,
    InfectedUsersPool,
    MAX_BLOCK_BYTES,
    Transaction,
    TxKind,
    ZERO_HASH,
    append_block,
    encode_block_full,
    encode_contact_pairs,
    encode_transaction,
    make_genesis,
    make_transaction,
    whash_window_for,
)

# Everything in a block except its transactions has a fixed encoded size, so
# the genesis encoding doubles as the per-block overhead for batch budgeting.
_BLOCK_BASE_BYTES = len(encode_block_full(make_genesis()))


class EmptyMetricsError(Exception):
    """Statistics were requested from a run that produced no rows."""


class InfectionStatus(Enum):
    SUSCEPTIBLE = "susceptible"
    INFECTED = "infected"
    NOTIFIED = "notified"


class Behavior(Enum):
    HONEST = "honest"
    DISTANCE_VIOLATOR = "distance_violator"
    FALSE_CLAIMER = "false_claimer"
    ATTACKER = "attacker"


@dataclass(frozen=True)
class Venue:
    width: float = 10.0
    height: float = 10.0
    zone_size: float = 0.5

    @property
    def zone_count(self) -> int:
        return round(self.width / self.zone_size) * round(self.height / self.zone_size)

    def zone_of(self, position: np.ndarray) -> int:
        cols = round(self.width / self.zone_size)
        rows = round(self.height / self.zone_size)
        cx = min(int(position[0] / self.zone_size), cols - 1)
        cy = min(int(position[1] / self.zone_size), rows - 1)
        return cy * cols + cx

    def beacon_grid(self, count_per_side: int = 4, pitch: float = 4.0) -> np.ndarray:
        """Receiver anchors on a square grid centered on the venue.

        Four per side at 4 m pitch spans 12 m, so the outer rows sit 1 m
        outside the floor area (wall-mounted), keeping the grid symmetric.
        """
        span = (count_per_side - 1) * pitch
        start = (self.width - span) / 2.0
        coords = start + pitch * np.arange(count_per_side)
        xs, ys = np.meshgrid(coords, coords)
        return np.stack([xs.ravel(), ys.ravel()], axis=1)


@dataclass(frozen=True)
class Agent:
    """Read-only view of one participant's simulation state."""

    id: bytes
    position: np.ndarray
    infection: InfectionStatus
    behavior: Behavior
    contact_log: tuple[tuple[bytes, float, int], ...]


@dataclass(frozen=True)
class SimConfig:
    n_agents: int = 1000
    ticks: int = 1000
    step_std: float = 0.5
    infection_radius: float = 2.0
    seed: int = 0
    policy: CreditPolicy = field(default_factory=CreditPolicy)
    tx_per_block_mean: int = 200
    n_blocks: int = 120
    p_inf: float = 0.02
    observe_radius: float = 10.0
    retention_ticks: int = 14_000
    n_authorized: int = 4
    initial_infected: int = 1
    distance_noise_std: float = 0.0
    track_agents: Optional[tuple[int, ...]] = None
    attacker_id: Optional[int] = None
    attack_tick: Optional[int] = None
    false_claimer_id: Optional[int] = None
    false_claim_tick: Optional[int] = None
    violator_id: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_agents < 2:
            raise ValueError("need at least two agents")
        if self.infection_radius <= 0:
            raise ValueError("infection radius must be positive")


@dataclass
class WorldState:
    config: SimConfig
    venue: Venue
    positions: np.ndarray                 # (n, 2) meters
    behaviors: list[Behavior]
    infections: dict[float, np.ndarray]   # exposure radius -> infected mask
    notified: np.ndarray                  # bool (n,)
    tick: int
    streams: dict[str, np.random.Generator]
    credit: CreditBook
    iup: InfectedUsersPool
    last_contact_tick: np.ndarray         # int32 (n, n), -1 = never immediate
    last_contact_dist: np.ndarray         # float32 (n, n)
    identities: Optional[list[NodeIdentity]] = None
    authorized: Optional[list[NodeIdentity]] = None
    manager: Optional[NodeIdentity] = None
    registry: Optional[AuthorizedRegistry] = None
    pending: list[Transaction] = field(default_factory=list)
    _violator_target: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.config.n_agents

    def infected(self, radius: Optional[float] = None) -> np.ndarray:
        radius = self.config.infection_radius if radius is None else radius
        return self.infections[radius]

    def status_of(self, i: int) -> InfectionStatus:
        if self.infected()[i]:
            return InfectionStatus.INFECTED
        if self.notified[i]:
            return InfectionStatus.NOTIFIED
        return InfectionStatus.SUSCEPTIBLE

    def agent_view(self, i: int) -> Agent:
        """Materialize one agent, reconstructing its retained contact log."""
        horizon = max(self.tick - self.config.retention_ticks, 0)
        peers = np.nonzero(self.last_contact_tick[i] >= horizon)[0]
        node = self.identities[i].node_id if self.identities else bytes(32)
        log = tuple(
            (
                self.identities[j].node_id if self.identities else j.to_bytes(32, "little"),
                float(self.last_contact_dist[i, j]),
                int(self.last_contact_tick[i, j]),
            )
            for j in peers
            if j != i
        )
        return Agent(
            id=node,
            position=self.positions[i].copy(),
            infection=self.status_of(i),
            behavior=self.behaviors[i],
            contact_log=log,
        )


TRACKED_DEFAULT = 8


def _derive_streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("mobility", "infection", "traffic", "whash", "noise", "misc")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


def build_world(config: SimConfig, with_identities: bool = True) -> WorldState:
    """Lay out agents and infection seeds, plus key material when asked."""
    streams = _derive_streams(config.seed)
    n = config.n_agents
    venue = Venue()
    positions = streams["misc"].uniform(
        [0.0, 0.0], [venue.width, venue.height], size=(n, 2)
    )

    behaviors = [Behavior.HONEST] * n
    if config.attacker_id is not None:
        behaviors[config.attacker_id] = Behavior.ATTACKER
    if config.false_claimer_id is not None:
        behaviors[config.false_claimer_id] = Behavior.FALSE_CLAIMER
    if config.violator_id is not None:
        behaviors[config.violator_id] = Behavior.DISTANCE_VIOLATOR

    infections = {}
    for r in {2.0, 5.0, config.infection_radius}:
        mask = np.zeros(n, dtype=bool)
        mask[: config.initial_infected] = True
        infections[r] = mask

    identities = authorized = manager = None
    if with_identities:
        base = config.seed * 1_000_003
        identities = [generate_identity(Role.LIGHT, seed=base + i) for i in range(n)]
        manager = generate_identity(Role.MANAGER, seed=base - 1)
        authorized = [
            generate_identity(Role.AUTHORIZED, seed=base - 2 - k)
            for k in range(config.n_authorized)
        ]

    return WorldState(
        config=config,
        venue=venue,
        positions=positions,
        behaviors=behaviors,
        infections=infections,
        notified=np.zeros(n, dtype=bool),
        tick=0,
        streams=streams,
        credit=CreditBook(policy=config.policy),
        iup=InfectedUsersPool(retention_ticks=config.retention_ticks),
        last_contact_tick=np.full((n, n), -1, dtype=np.int32),
        last_contact_dist=np.zeros((n, n), dtype=np.float32),
        identities=identities,
        authorized=authorized,
        manager=manager,
    )


def _reflect(values: np.ndarray, upper: float) -> np.ndarray:
    # Fold the real line onto [0, upper] like a billiard: exact for any
    # step size, not just small ones.
    period = 2.0 * upper
    m = np.mod(values, period)
    return np.where(m > upper, period - m, m)


def step_mobility(world: WorldState, rng: Optional[np.random.Generator] = None) -> WorldState:
    """Advance every agent by a reflected Gaussian step."""
    rng = rng if rng is not None else world.streams["mobility"]
    step = rng.normal(0.0, world.config.step_std, size=world.positions.shape)
    if world.config.step_std > 0:
        world.positions += step
    vid = world.config.violator_id
    if vid is not None and world._violator_target is not None:
        # The distancing violator drifts toward wherever the crowd last was.
        world.positions[vid] += 0.8 * (world._violator_target - world.positions[vid])
    world.positions[:, 0] = _reflect(world.positions[:, 0], world.venue.width)
    world.positions[:, 1] = _reflect(world.positions[:, 1], world.venue.height)
    return world


def _pairwise_distances(world: WorldState) -> np.ndarray:
    diff = world.positions[:, None, :] - world.positions[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _contact_arrays(
    dist: np.ndarray, radius: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mask = np.triu(dist <= radius, k=1)
    ii, jj = np.nonzero(mask)
    return ii, jj, dist[ii, jj]


def extract_contacts(world: WorldState, radius: float) -> list[tuple[int, int, float]]:
    """All unordered agent pairs within the radius, with their distances."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    ii, jj, d = _contact_arrays(_pairwise_distances(world), radius)
    return [(int(i), int(j), float(x)) for i, j, x in zip(ii, jj, d)]


def _spread_one(
    world: WorldState, dist: np.ndarray, radius: float, draws: np.ndarray
) -> int:
    """Advance one exposure-radius process on this tick's shared draws."""
    infected = world.infections[radius]
    if not infected.any():
        return 0
    susceptible = ~infected
    sus_idx = np.nonzero(susceptible)[0]
    if sus_idx.size == 0:
        return 0
    exposed = dist[np.ix_(sus_idx, np.nonzero(infected)[0])].min(axis=1) <= radius
    new = sus_idx[exposed & (draws[sus_idx] < world.config.p_inf)]
    infected[new] = True
    return len(new)


def spread_infection(
    world: WorldState, radius: float, rng: Optional[np.random.Generator] = None
) -> WorldState:
    """One infection step for the process at the given exposure radius."""
    if radius not in world.infections or not world.infections[radius].any():
        raise ValueError("spread_infection requires at least one infected agent")
    rng = rng if rng is not None else world.streams["infection"]
    draws = rng.random(world.n)
    _spread_one(world, _pairwise_distances(world), radius, draws)
    return world


# ---------------------------------------------------------------------------
# Full epoch loop
# ---------------------------------------------------------------------------

@dataclass
class RunMetrics:
    rows: list[dict] = field(default_factory=list)
    credit_rows: list[tuple] = field(default_factory=list)
    contact_records: list[dict] = field(default_factory=list)
    tracked: tuple[int, ...] = ()
    interactions_per_agent: Optional[np.ndarray] = None
    prox_final: Optional[np.ndarray] = None
    tx_total: int = 0
    blocks_total: int = 0
    elapsed_s: float = 0.0


def _tracked_ids(config: SimConfig) -> tuple[int, ...]:
    if config.track_agents is not None:
        return tuple(config.track_agents)
    ids = list(range(min(TRACKED_DEFAULT, config.n_agents)))
    for extra in (config.attacker_id, config.false_claimer_id, config.violator_id):
        if extra is not None and extra not in ids:
            ids.append(extra)
    return tuple(ids)


class _CreditLens:
    """Live credit lookup backed by the run's proximity array and event book.

    The proximity totals live in a numpy array for speed; penalty events
    stay in the credit book. This object joins the two views so mining
    entitlement and reporting always see the current tick's numbers.
    """

    def __init__(self, world: WorldState, prox: np.ndarray, index_of: dict[bytes, int]):
        self.world = world
        self.prox = prox
        self.index_of = index_of

    def total(self, node_id: bytes, now: int) -> float:
        idx = self.index_of.get(node_id)
        base = float(self.prox[idx]) if idx is not None else 0.0
        events = self.world.credit.get(node_id).events
        return base + (negative_credit(events, now, self.world.config.policy) if events else 0.0)

    def breakdown(self, node_id: bytes, now: int) -> tuple[float, float, float]:
        idx = self.index_of.get(node_id)
        base = float(self.prox[idx]) if idx is not None else 0.0
        events = self.world.credit.get(node_id).events
        neg = negative_credit(events, now, self.world.config.policy) if events else 0.0
        return base, neg, base + neg

    def totals_array(self, now: int) -> np.ndarray:
        totals = self.prox.copy()
        for node, state in self.world.credit.states.items():
            idx = self.index_of.get(node)
            if idx is not None and state.events:
                totals[idx] += negative_credit(
                    state.events, now, self.world.config.policy
                )
        return totals


def _emit_trace(
    world: WorldState, i: int, now: int, metrics: RunMetrics
) -> None:
    """Diagnosed agent i reports its retained immediate contacts."""
    horizon = max(now - world.config.retention_ticks, 0)
    row_ticks = world.last_contact_tick[i]
    peers = [int(j) for j in np.nonzero(row_ticks >= horizon)[0] if j != i]
    pairs = [(world.identities[j].node_id, int(row_ticks[j])) for j in peers]
    payload = encode_contact_pairs(pairs)
    world.pending.append(make_transaction(world.identities[i], TxKind.TT, payload, now))
    world.iup.add(world.identities[i].node_id, now)
    metrics.contact_records.append(
        {
            "tick": now,
            "node_id": world.identities[i].node_id.hex(),
            "contacts": [
                {
                    "peer": world.identities[j].node_id.hex(),
                    "distance": round(float(world.last_contact_dist[i, j]), 4),
                    "tick": int(row_ticks[j]),
                }
                for j in peers
            ],
        }
    )
    if pairs and world.manager is not None:
        # The manager alarms every listed contact; they become notified.
        world.pending.append(make_transaction(world.manager, TxKind.AT, payload, now))
        world.notified[peers] = True


def _take_sized_batch(pending: list[Transaction], batch_size: int) -> tuple[Transaction, ...]:
    """Front slice of up to ``batch_size`` transactions that fits one block.

    Validation rejects any block whose full encoding passes 1 MiB, so the
    batch is cut by serialized size as well as by count; heavy trace and
    alarm payloads then spill into the next block instead of poisoning this
    one.
    """
    budget = MAX_BLOCK_BYTES - _BLOCK_BASE_BYTES
    used = 0
    taken = 0
    for tx in pending[:batch_size]:
        cost = len(encode_transaction(tx))
        if used + cost > budget:
            if taken == 0:
                raise BlockOverflowError("a single transaction exceeds block capacity")
            break
        used += cost
        taken += 1
    return tuple(pending[:taken])


def _mine_pending(
    world: WorldState,
    chain: Chain,
    miner_pool: list[NodeIdentity],
    lens: _CreditLens,
    now: int,
    flush: bool,
) -> int:
    """Batch pending transactions into blocks and mine them onto the tip."""
    config = world.config
    batch_size = config.tx_per_block_mean
    credit_now = now + 1
    mined = 0
    while world.pending and (len(world.pending) >= batch_size or flush):
        batch = _take_sized_batch(world.pending, batch_size)
        del world.pending[: len(batch)]
        miner = miner_pool[int(world.streams["misc"].integers(len(miner_pool)))]
        is_auth = miner.role in (Role.AUTHORIZED, Role.MANAGER)
        level = difficulty_for(
            lens.total(miner.node_id, credit_now), config.policy.alpha_d, is_auth
        )
        draw = int(world.streams["whash"].integers(0, 101))
        window = whash_window_for(len(chain) - 1, draw)
        candidate = Block(
            index=len(chain),
            prev_hash=chain.tip.block_hash,
            whash_window=window,
            nonce=0,
            transactions=batch,
            miner=miner.node_id,
            timestamp=now,
            block_hash=ZERO_HASH,
        )
        result = mine(chain, candidate, level)
        append_block(
            chain,
            result.block,
            world.registry,
            credit_view=lambda node: lens.total(node, credit_now),
            alpha_d=config.policy.alpha_d,
        )
        mined += 1
    return mined


def run_epoch(
    world: WorldState,
    chain: Chain,
    miners: Optional[list[int]] = None,
    rng: Optional[np.random.Generator] = None,
) -> tuple[WorldState, Chain, RunMetrics]:
    """Drive the world for ``config.ticks`` ticks, mining as batches fill.

    ``miners`` optionally fixes which agents may mine besides the static
    authorized nodes; by default the top credit decile is re-ranked at each
    tick. Credit is always evaluated at the end of the tick (now = t + 1),
    so a penalty recorded at tick t bites from the very next scheduling
    decision onward.
    """
    if world.identities is None:
        raise ValueError("run_epoch needs a world built with identities")
    if rng is not None:
        world.streams["misc"] = rng
    config = world.config
    policy = config.policy
    metrics = RunMetrics(tracked=_tracked_ids(config))
    started = time.perf_counter()
    n = world.n

    node_ids = [ident.node_id for ident in world.identities]
    index_of = {node: idx for idx, node in enumerate(node_ids)}
    prox = np.zeros(n)
    lens = _CreditLens(world, prox, index_of)
    interactions = np.zeros(n, dtype=np.int64)

    world.registry = publish_registry(
        world.manager, [a.public_key for a in world.authorized]
    )
    world.pending.append(
        make_transaction(
            world.manager,
            TxKind.REGISTRY,
            registry_to_json(world.registry).encode(),
            0,
        )
    )

    tx_rate = config.tx_per_block_mean * config.n_blocks / max(config.ticks, 1)

    for t in range(config.ticks):
        world.tick = t
        step_mobility(world)
        dist = _pairwise_distances(world)
        tx_before = len(world.pending)

        ii, jj, d_true = _contact_arrays(dist, config.observe_radius)
        if config.violator_id is not None:
            others = np.arange(n) != config.violator_id
            nearest = int(np.argmin(np.where(others, dist[config.violator_id], np.inf)))
            world._violator_target = world.positions[nearest].copy()

        # Credit scoring; measured distances may carry estimator noise.
        if config.distance_noise_std > 0:
            d_meas = d_true + world.streams["noise"].normal(
                0.0, config.distance_noise_std, size=d_true.shape
            )
        else:
            d_meas = d_true
        d_meas = np.maximum(d_meas, MIN_SEPARATION_M)
        scores = np.where(
            d_meas < policy.immediate_threshold,
            -policy.lambda_minus / d_meas,
            d_meas / policy.lambda_plus,
        )
        np.add.at(prox, ii, scores)
        np.add.at(prox, jj, scores)
        np.add.at(interactions, ii, 1)
        np.add.at(interactions, jj, 1)

        imm = d_true < policy.immediate_threshold
        if imm.any():
            pi, pj, pd = ii[imm], jj[imm], d_true[imm]
            world.last_contact_tick[pi, pj] = t
            world.last_contact_tick[pj, pi] = t
            world.last_contact_dist[pi, pj] = pd
            world.last_contact_dist[pj, pi] = pd

        # Shared draws couple the exposure-radius processes within the run.
        draws = world.streams["infection"].random(n)
        before = world.infected().copy()
        for radius in sorted(world.infections):
            _spread_one(world, dist, radius, draws)
        newly = np.nonzero(world.infected() & ~before)[0]
        for i in newly:
            _emit_trace(world, int(i), t, metrics)

        if (
            config.false_claimer_id is not None
            and t == config.false_claim_tick
            and not world.infected()[config.false_claimer_id]
        ):
            # Authorized validation cross-checks the pool; the claim fails
            # and the claimant is punished instead of traced.
            world.credit.punish(
                node_ids[config.false_claimer_id], EventKind.FALSE_CLAIM, t
            )
        if config.attacker_id is not None and t == config.attack_tick:
            world.credit.punish(
                node_ids[config.attacker_id], EventKind.NETWORK_ATTACK, t
            )

        n_tx = int(world.streams["traffic"].poisson(tx_rate))
        senders = world.streams["traffic"].integers(0, n, size=n_tx)
        kind_draw = world.streams["traffic"].random(n_tx)
        for s, kd in zip(senders, kind_draw):
            ident = world.identities[int(s)]
            if kd < 0.7:
                payload = world.venue.zone_of(world.positions[int(s)]).to_bytes(2, "little")
                kind = TxKind.ST
            else:
                payload = ident.node_id
                kind = TxKind.QT
            world.pending.append(make_transaction(ident, kind, payload, t))

        tx_count = len(world.pending) - tx_before

        pool = list(world.authorized) + [world.manager]
        if miners is not None:
            pool.extend(world.identities[m] for m in miners)
        else:
            totals = lens.totals_array(now=t + 1)
            top = np.argsort(totals, kind="stable")[-max(n // 10, 1):]
            pool.extend(world.identities[int(m)] for m in top)
        blocks = _mine_pending(
            world, chain, pool, lens, t, flush=(t == config.ticks - 1)
        )

        for idx in metrics.tracked:
            p, neg, tot = lens.breakdown(node_ids[idx], t + 1)
            metrics.credit_rows.append((t, node_ids[idx].hex(), p, neg, tot))

        metrics.rows.append(
            {
                "tick": t,
                "infected_count_2m": int(world.infections[2.0].sum()),
                "infected_count_5m": int(world.infections[5.0].sum()),
                "tx_count": tx_count,
                "blocks_mined": blocks,
            }
        )
        metrics.tx_total += tx_count
        metrics.blocks_total += blocks

    # Fold the array totals back into the book so post-run inspection of
    # CreditState objects agrees with what the run used.
    for idx, node in enumerate(node_ids):
        state = world.credit.get(node)
        world.credit.states[node] = type(state)(
            node=node, prox_credit=float(prox[idx]), events=state.events
        )

    world.iup.prune(config.ticks)
    metrics.interactions_per_agent = interactions
    metrics.prox_final = prox.copy()
    metrics.elapsed_s = time.perf_counter() - started
    return world, chain, metrics


def interaction_stats(metrics: RunMetrics) -> dict[str, float]:
    """Per-agent averages over a completed run."""
    if not metrics.rows or metrics.interactions_per_agent is None:
        raise EmptyMetricsError("run produced no metrics rows")
    return {
        "avg_interactions": float(np.mean(metrics.interactions_per_agent)),
        "avg_gained_credit": float(np.mean(metrics.prox_final)),
    }


def run_outbreak(config: SimConfig) -> list[tuple[int, int, int]]:
    """Mobility plus the coupled infection processes, no ledger plumbing.

    Returns per-tick (tick, cumulative infected at 2 m, at 5 m). Useful when
    only the epidemic curves matter; orders of magnitude faster than a full
    epoch because nothing is signed or mined.
    """
    world = build_world(config, with_identities=False)
    out = []
    for t in range(config.ticks):
        world.tick = t
        step_mobility(world)
        dist = _pairwise_distances(world)
        draws = world.streams["infection"].random(world.n)
        for radius in sorted(world.infections):
            _spread_one(world, dist, radius, draws)
        out.append(
            (t, int(world.infections[2.0].sum()), int(world.infections[5.0].sum()))
        )
    return out
