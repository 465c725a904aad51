"""Experiment runners: mining benchmarks, full traced runs, localization eval.

Every runner takes an :class:`ExperimentSpec` (or plain arguments), executes
deterministically from the seed it carries and persists CSV/JSONL artifacts
with stable ordering, so re-running one reproduces its outputs byte for byte.
Wall-clock columns are the one exception and are informative only.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import aoa
from .consensus import (
    DL_EASY,
    DL_HARD,
    LEVELS_BY_NAME,
    DifficultyLevel,
    MiningTimeoutError,
    mine,
)
from .credit import CreditPolicy
from .identity import Role, generate_identity
from .ledger import (
    Block,
    Chain,
    ZERO_HASH,
    save_chain,
    save_iup,
    whash_window_for,
)
from .simulation import SimConfig, Venue, build_world, run_epoch

ALLOWED_WHASH = (0, 20, 40, 60, 80, 100)


class ConfigError(Exception):
    """A spec file or override does not describe a runnable experiment."""


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "default"
    sim: SimConfig = field(default_factory=SimConfig)
    whash_values: tuple[int, ...] = (0, 20, 40, 60, 80, 100)
    levels: tuple[str, ...] = (DL_EASY.name, DL_HARD.name)
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if not self.whash_values:
            raise ConfigError("whash_values must not be empty")
        bad = [w for w in self.whash_values if w not in ALLOWED_WHASH]
        if bad:
            raise ConfigError(f"whash values {bad} not in {list(ALLOWED_WHASH)}")
        unknown = [lv for lv in self.levels if lv not in LEVELS_BY_NAME]
        if unknown:
            raise ConfigError(f"unknown difficulty levels {unknown}")

    def level_objects(self) -> list[DifficultyLevel]:
        return [LEVELS_BY_NAME[name] for name in self.levels]


def spec_to_json(spec: ExperimentSpec) -> str:
    body = asdict(spec)
    body["sim"]["policy"] = asdict(spec.sim.policy)
    return json.dumps(body, sort_keys=True, indent=2)


def spec_from_json(text: str) -> ExperimentSpec:
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"spec is not valid JSON: {exc}") from exc
    try:
        sim_body = dict(body.get("sim", {}))
        policy = CreditPolicy(**sim_body.pop("policy", {}))
        for key in ("track_agents",):
            if sim_body.get(key) is not None:
                sim_body[key] = tuple(sim_body[key])
        sim = SimConfig(policy=policy, **sim_body)
        return ExperimentSpec(
            name=body.get("name", "default"),
            sim=sim,
            whash_values=tuple(body.get("whash_values", ALLOWED_WHASH)),
            levels=tuple(body.get("levels", (DL_EASY.name, DL_HARD.name))),
            output_dir=body.get("output_dir", "out"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad spec field: {exc}") from exc


def load_spec(path: str) -> ExperimentSpec:
    try:
        with open(path) as fh:
            return spec_from_json(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read spec: {exc}") from exc


# ---------------------------------------------------------------------------
# Mining benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchRow:
    whash: int
    level: str
    block_index: int
    trials: int
    elapsed_s: float
    truncated: bool = False


def _bench_base_chain(depth: int, miner_id: bytes, rng: np.random.Generator) -> Chain:
    """Cheap easy-level chain long enough to honor any window draw."""
    chain = Chain()
    for _ in range(depth):
        candidate = Block(
            index=len(chain),
            prev_hash=chain.tip.block_hash,
            whash_window=whash_window_for(len(chain) - 1, int(rng.integers(0, 101))),
            nonce=0,
            transactions=(),
            miner=miner_id,
            timestamp=len(chain),
            block_hash=ZERO_HASH,
        )
        result = mine(chain, candidate, DL_EASY)
        chain.blocks.append(result.block)
    return chain


def run_mining_benchmark(
    spec: ExperimentSpec, max_trials: Optional[int] = None
) -> tuple[list[BenchRow], dict]:
    """Mine ``spec.sim.n_blocks`` empty blocks per (whash, level) cell.

    Returns the per-block rows plus a per-cell summary holding min, max,
    mean and median of both trial counts and wall-clock seconds. Rows that
    hit ``max_trials`` are marked truncated and excluded from the summary.
    """
    rng = np.random.default_rng(spec.sim.seed)
    bench_id = generate_identity(Role.AUTHORIZED, seed=spec.sim.seed).node_id
    base = _bench_base_chain(100, bench_id, rng)

    rows: list[BenchRow] = []
    summary: dict = {}
    for whash in spec.whash_values:
        for level in spec.level_objects():
            chain = Chain(blocks=list(base.blocks))
            cell: list[BenchRow] = []
            for k in range(spec.sim.n_blocks):
                candidate = Block(
                    index=len(chain),
                    prev_hash=chain.tip.block_hash,
                    whash_window=whash_window_for(len(chain) - 1, whash),
                    nonce=0,
                    transactions=(),
                    miner=bench_id,
                    timestamp=len(chain),
                    block_hash=ZERO_HASH,
                )
                try:
                    result = mine(chain, candidate, level, max_trials=max_trials)
                except MiningTimeoutError:
                    cell.append(BenchRow(whash, level.name, len(chain), max_trials or 0, 0.0, True))
                    continue
                chain.blocks.append(result.block)
                cell.append(
                    BenchRow(whash, level.name, result.block.index, result.trials, result.elapsed)
                )
            rows.extend(cell)
            kept = [r for r in cell if not r.truncated]
            if kept:
                trials = [r.trials for r in kept]
                elapsed = [r.elapsed_s for r in kept]
                summary[(whash, level.name)] = {
                    "blocks": len(kept),
                    "min_trials": min(trials),
                    "max_trials": max(trials),
                    "mean_trials": statistics.fmean(trials),
                    "median_trials": statistics.median(trials),
                    "min_s": min(elapsed),
                    "max_s": max(elapsed),
                    "mean_s": statistics.fmean(elapsed),
                    "median_s": statistics.median(elapsed),
                }
    return rows, summary


def write_bench_csv(rows: Sequence[BenchRow], summary: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "mining_metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "level", "n_wh", "trials", "elapsed_s"])
        for r in rows:
            writer.writerow([r.block_index, r.level, r.whash, r.trials, f"{r.elapsed_s:.6f}"])
    with open(os.path.join(out_dir, "mining_summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n_wh", "level", "blocks", "min_trials", "mean_trials",
             "median_trials", "max_trials", "min_s", "mean_s", "median_s", "max_s"]
        )
        for (whash, level), s in sorted(summary.items()):
            writer.writerow(
                [whash, level, s["blocks"], s["min_trials"], f"{s['mean_trials']:.3f}",
                 s["median_trials"], s["max_trials"], f"{s['min_s']:.6f}",
                 f"{s['mean_s']:.6f}", f"{s['median_s']:.6f}", f"{s['max_s']:.6f}"]
            )


# ---------------------------------------------------------------------------
# Traced contact run
# ---------------------------------------------------------------------------

@dataclass
class CtArtifacts:
    metrics_csv: str
    credits_csv: str
    contacts_jsonl: str
    chain_jsonl: str
    iup_json: str
    spec_json: str


def run_ct_experiment(spec: ExperimentSpec) -> tuple[CtArtifacts, dict]:
    """Execute a full traced run and persist its five artifacts.

    On failure the partial outputs stay on disk next to a ``.partial``
    marker so a crashed run is never mistaken for a finished one.
    """
    out = spec.output_dir
    os.makedirs(out, exist_ok=True)
    paths = CtArtifacts(
        metrics_csv=os.path.join(out, "metrics.csv"),
        credits_csv=os.path.join(out, "credits.csv"),
        contacts_jsonl=os.path.join(out, "contacts.jsonl"),
        chain_jsonl=os.path.join(out, "chain.jsonl"),
        iup_json=os.path.join(out, "iup.json"),
        spec_json=os.path.join(out, "spec.json"),
    )
    # The marker exists for the whole run; it disappears only after every
    # artifact has been flushed, so crashed runs stay distinguishable.
    marker = os.path.join(out, ".partial")
    with open(marker, "w") as fh:
        fh.write("running\n")

    world = build_world(spec.sim)
    chain = Chain()
    world, chain, metrics = run_epoch(world, chain)

    with open(paths.metrics_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["tick", "infected_count_2m", "infected_count_5m", "tx_count", "blocks_mined"]
        )
        for row in metrics.rows:
            writer.writerow(
                [row["tick"], row["infected_count_2m"], row["infected_count_5m"],
                 row["tx_count"], row["blocks_mined"]]
            )
    with open(paths.credits_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick", "node_id", "prox_credit", "neg_credit", "total"])
        for tick, node, p, neg, tot in metrics.credit_rows:
            writer.writerow([tick, node, repr(float(p)), repr(float(neg)), repr(float(tot))])
    with open(paths.contacts_jsonl, "w") as fh:
        for record in metrics.contact_records:
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    save_chain(chain, paths.chain_jsonl)
    save_iup(world.iup, paths.iup_json)
    with open(paths.spec_json, "w") as fh:
        fh.write(spec_to_json(spec))
        fh.write("\n")
    os.remove(marker)

    stats = {
        "tx_total": metrics.tx_total,
        "blocks_total": metrics.blocks_total,
        "infected_2m": metrics.rows[-1]["infected_count_2m"] if metrics.rows else 0,
        "infected_5m": metrics.rows[-1]["infected_count_5m"] if metrics.rows else 0,
        "elapsed_s": metrics.elapsed_s,
    }
    return paths, stats


# ---------------------------------------------------------------------------
# Localization evaluation
# ---------------------------------------------------------------------------

@dataclass
class LocEvalRow:
    snr_db: Optional[float]
    mean_abs_azimuth_error_deg: float
    position_rmse_m: float
    dropped_trials: int


def run_localization_eval(
    snr_list: Sequence[Optional[float]],
    trials: int,
    seed: int = 0,
    n_elements: int = 4,
    n_samples: int = 256,
) -> list[LocEvalRow]:
    """Monte Carlo over synth -> spectrum -> bearing -> triangulation.

    Each trial drops an agent uniformly into the venue, synthesizes one
    snapshot per selected receiver (the four nearest of the 16 anchors),
    estimates bearings from the spectrum peaks and intersects them. ``None``
    in ``snr_list`` means noiseless. The linear arrays cannot tell a source
    from its mirror across their axis, so the eval resolves that half-plane
    choice from the known geometry before intersecting.
    """
    if trials < 30:
        raise ValueError("need at least 30 trials per SNR point")

    beacons = Venue().beacon_grid()
    config = aoa.BlePulseConfig()
    az_errors: dict[int, list[float]] = {k: [] for k in range(len(snr_list))}
    pos_sq: dict[int, list[float]] = {k: [] for k in range(len(snr_list))}
    dropped = {k: 0 for k in range(len(snr_list))}

    for trial in range(trials):
        # Geometry is shared across the SNR rows so they differ only in
        # noise, which keeps the per-row means comparable.
        geo = np.random.default_rng(np.random.SeedSequence((seed, trial)))
        target = geo.uniform([0.5, 0.5], [9.5, 9.5])
        order = np.argsort(np.linalg.norm(beacons - target, axis=1))
        picked = beacons[order[:4]]
        elevations = geo.uniform(0.0, 5.0, size=4)

        for k, snr in enumerate(snr_list):
            noise_rng = np.random.default_rng(
                np.random.SeedSequence((seed, trial, k + 1))
            )
            bearings = []
            for b, elevation in zip(picked, elevations):
                delta = target - b
                azimuth = float(np.degrees(np.arctan2(abs(delta[1]), delta[0])))
                snap = aoa.synthesize_snapshot(
                    config,
                    aoa.awgn_channel(snr),
                    azimuth,
                    float(elevation),
                    n_elements,
                    n_samples,
                    noise_rng,
                )
                est = aoa.spectrum_peak(aoa.music_spectrum(snap, n_sources=1))
                az_errors[k].append(abs(est - azimuth))
                # Undo the mirror ambiguity using the known side of the axis.
                bearings.append(float(est) if delta[1] >= 0 else -float(est))
            try:
                point, _ = aoa.estimate_position(picked, bearings)
                pos_sq[k].append(float(np.sum((point - target) ** 2)))
            except aoa.DegenerateGeometryError:
                dropped[k] += 1

    rows: list[LocEvalRow] = []
    for k, snr in enumerate(snr_list):
        rmse = float(np.sqrt(np.mean(pos_sq[k]))) if pos_sq[k] else float("nan")
        rows.append(
            LocEvalRow(
                snr_db=snr,
                mean_abs_azimuth_error_deg=float(np.mean(az_errors[k])),
                position_rmse_m=rmse,
                dropped_trials=dropped[k],
            )
        )
    return rows


def write_loc_eval_csv(rows: Sequence[LocEvalRow], out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "loc_eval.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "mean_abs_azimuth_error_deg", "position_rmse_m", "dropped"])
        for r in rows:
            snr = "inf" if r.snr_db is None else f"{r.snr_db:g}"
            writer.writerow(
                [snr, f"{r.mean_abs_azimuth_error_deg:.4f}", f"{r.position_rmse_m:.4f}", r.dropped_trials]
            )
    return path


# ---------------------------------------------------------------------------
# Window attack experiment
# ---------------------------------------------------------------------------

def attack_window_experiment(
    chain_length: int = 30,
    reps: int = 50,
    seed: int = 0,
) -> dict:
    """Measure honest vs. exhaustive re-mining cost on a short chain.

    The honest miner extends the tip once with a secret window draw. An
    attacker who cannot read the draw must mine a candidate for every
    possible window value. The ratio of mean trial counts estimates the
    window-count multiplier predicted by the cost model.
    """
    rng = np.random.default_rng(seed)
    miner_id = generate_identity(Role.AUTHORIZED, seed=seed).node_id
    chain = _bench_base_chain(chain_length, miner_id, rng)

    honest_trials = []
    attacker_trials = []
    for rep in range(reps):
        secret = int(rng.integers(1, chain_length + 1))
        candidate = Block(
            index=len(chain),
            prev_hash=chain.tip.block_hash,
            whash_window=secret,
            nonce=0,
            transactions=(),
            miner=miner_id,
            timestamp=1000 + rep,
            block_hash=ZERO_HASH,
        )
        honest_trials.append(mine(chain, candidate, DL_EASY).trials)

        total = 0
        for guess in range(1, chain_length + 1):
            total += mine(chain, replace(candidate, whash_window=guess), DL_EASY).trials
        attacker_trials.append(total)

    honest_mean = statistics.fmean(honest_trials)
    attacker_mean = statistics.fmean(attacker_trials)
    return {
        "window_count": chain_length,
        "honest_mean_trials": honest_mean,
        "attacker_mean_trials": attacker_mean,
        "measured_ratio": attacker_mean / honest_mean,
    }
