"""Transactions, blocks, the chain store and windowed hashing.

Two encodings exist side by side and must not be confused:

* a canonical length-prefixed binary layout, used for everything that gets
  hashed or signed (any ambiguity here would let two different records share
  a digest);
* newline-delimited JSON with lowercase hex fields, used for persistence
  (``chain.jsonl``) and for the infected-users snapshot (``iup.json``).

Binary layout, little-endian throughout:

    tx        = kind u8 | len+sender | len+sender_pubkey | timestamp u64
                | len+payload | len+signature
    header    = index u64 | prev_hash 32B | window u8 | timestamp u64
                | len+miner | tx_count u32 | tx...
    full      = header | nonce u64 | block_hash 32B

where ``len+x`` is a u32 byte count followed by the bytes. The mining
preimage for a candidate block is the concatenation of the full encodings of
the window's predecessor blocks (newest first), the candidate's header and
the nonce; see :func:`whash_digest`.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator, Optional, Sequence

from .identity import AuthorizedRegistry, NodeIdentity, sign, verify, node_id_for

MAX_BLOCK_BYTES = 1_048_576
WINDOW_MAX = 100
ZERO_HASH = bytes(32)


class TxKind(Enum):
    ST = "ST"          # submission of localization data (zone index)
    TT = "TT"          # trace: immediate-distance contact ids + timestamps
    QT = "QT"          # query against the infected-users pool
    RT = "RT"          # request for a trace check
    AT = "AT"          # alarm pushed to exposed contacts
    REGISTRY = "RegistryTX"


_KIND_CODE = {k: i for i, k in enumerate(TxKind)}
_CODE_KIND = {i: k for i, k in enumerate(TxKind)}


class BlockOverflowError(Exception):
    """Serialized block size would exceed the 1 MiB bound."""


class WindowDomainError(Exception):
    """A window draw or window field lies outside [0, 100]."""


class WindowHistoryError(Exception):
    """A window asks for more predecessor blocks than the chain holds."""


class BlockRejectedError(Exception):
    """Validation refused a block; ``reason`` names the failed clause."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


def _lp(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    sender: bytes
    sender_pubkey: bytes
    payload: bytes
    timestamp: int
    signature: bytes


def tx_signing_bytes(kind: TxKind, sender: bytes, payload: bytes, timestamp: int) -> bytes:
    return (
        bytes([_KIND_CODE[kind]])
        + _lp(sender)
        + struct.pack("<Q", timestamp)
        + _lp(payload)
    )


def make_transaction(
    identity: NodeIdentity, kind: TxKind, payload: bytes, timestamp: int
) -> Transaction:
    """Build and sign a transaction in one step."""
    signature = sign(identity, tx_signing_bytes(kind, identity.node_id, payload, timestamp))
    return Transaction(
        kind=kind,
        sender=identity.node_id,
        sender_pubkey=identity.public_key,
        payload=payload,
        timestamp=timestamp,
        signature=signature,
    )


def verify_transaction(tx: Transaction) -> bool:
    """Signature valid under the embedded key, and sender id matches that key."""
    if node_id_for(tx.sender_pubkey) != tx.sender:
        return False
    message = tx_signing_bytes(tx.kind, tx.sender, tx.payload, tx.timestamp)
    return verify(tx.sender_pubkey, message, tx.signature)


def encode_transaction(tx: Transaction) -> bytes:
    return (
        bytes([_KIND_CODE[tx.kind]])
        + _lp(tx.sender)
        + _lp(tx.sender_pubkey)
        + struct.pack("<Q", tx.timestamp)
        + _lp(tx.payload)
        + _lp(tx.signature)
    )


# Trace/alarm payloads are (node_id, tick) pairs and nothing else: no names,
# no positions. Keeping the codec here makes that restriction inspectable.

def encode_contact_pairs(pairs: Sequence[tuple[bytes, int]]) -> bytes:
    out = [struct.pack("<I", len(pairs))]
    for peer, tick in pairs:
        if len(peer) != 32:
            raise ValueError("contact entries must be 32-byte node ids")
        out.append(peer + struct.pack("<Q", tick))
    return b"".join(out)


def decode_contact_pairs(payload: bytes) -> list[tuple[bytes, int]]:
    (count,) = struct.unpack_from("<I", payload, 0)
    pairs = []
    offset = 4
    for _ in range(count):
        peer = payload[offset : offset + 32]
        (tick,) = struct.unpack_from("<Q", payload, offset + 32)
        pairs.append((peer, tick))
        offset += 40
    return pairs


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    whash_window: int
    nonce: int
    transactions: tuple[Transaction, ...]
    miner: bytes
    timestamp: int
    block_hash: bytes


def encode_block_header(block: Block) -> bytes:
    """Everything that gets mined over: the block minus nonce and digest."""
    parts = [
        struct.pack("<Q", block.index),
        block.prev_hash,
        bytes([block.whash_window]),
        struct.pack("<Q", block.timestamp),
        _lp(block.miner),
        struct.pack("<I", len(block.transactions)),
    ]
    parts.extend(encode_transaction(tx) for tx in block.transactions)
    return b"".join(parts)


def encode_block_full(block: Block) -> bytes:
    return encode_block_header(block) + struct.pack("<Q", block.nonce) + block.block_hash


def block_size(
    overhead_bytes: int,
    data_bytes: int,
    encryption_overhead_bytes: int,
    n_data: int,
) -> int:
    """Block size as fixed overhead plus per-record cost times record count.

    Raises :class:`BlockOverflowError` above 1 MiB; the caller is expected to
    split the batch across blocks in that case.
    """
    if min(overhead_bytes, data_bytes, encryption_overhead_bytes, n_data) < 0:
        raise ValueError("block size inputs must be non-negative")
    size = overhead_bytes + (data_bytes + encryption_overhead_bytes) * n_data
    if size > MAX_BLOCK_BYTES:
        raise BlockOverflowError(f"{size} bytes exceeds {MAX_BLOCK_BYTES}")
    return size


# ---------------------------------------------------------------------------
# Windowed hashing
# ---------------------------------------------------------------------------

def whash_window_for(chain_length: int, rng_draw: int) -> int:
    """Resolve a window draw against the available history.

    A draw larger than the current number of blocks cannot be honored, so it
    collapses to zero (plain single-block hashing).
    """
    if not 0 <= rng_draw <= WINDOW_MAX:
        raise WindowDomainError(f"window draw {rng_draw} outside [0, {WINDOW_MAX}]")
    if chain_length < 0:
        raise ValueError("chain_length must be >= 0")
    return rng_draw if rng_draw <= chain_length else 0


def whash_preimage_prefix(blocks: Sequence[Block], candidate: Block) -> bytes:
    """Window predecessors (newest first) plus the candidate header.

    The nonce is appended separately by the mining loop so the expensive
    prefix can be hashed once per candidate instead of once per trial.
    """
    window = candidate.whash_window
    if not 0 <= window <= WINDOW_MAX:
        raise WindowDomainError(f"window {window} outside [0, {WINDOW_MAX}]")
    depth = max(window - 1, 0)
    if depth > candidate.index or depth > len(blocks):
        raise WindowHistoryError(
            f"window {window} needs {depth} predecessors, chain has {len(blocks)}"
        )
    parts = []
    for j in range(1, depth + 1):
        parts.append(encode_block_full(blocks[candidate.index - j]))
    parts.append(encode_block_header(candidate))
    return b"".join(parts)


def whash_digest(blocks: Sequence[Block], candidate: Block, nonce: int) -> bytes:
    """SHA-256 over window predecessors, candidate header and nonce."""
    prefix = whash_preimage_prefix(blocks, candidate)
    return hashlib.sha256(prefix + struct.pack("<Q", nonce)).digest()


# ---------------------------------------------------------------------------
# Chain
# ---------------------------------------------------------------------------

def make_genesis() -> Block:
    base = Block(
        index=0,
        prev_hash=ZERO_HASH,
        whash_window=0,
        nonce=0,
        transactions=(),
        miner=ZERO_HASH,
        timestamp=0,
        block_hash=ZERO_HASH,
    )
    return replace(base, block_hash=whash_digest((), base, 0))


@dataclass
class Chain:
    """Append-only block list rooted at a fixed genesis block."""

    blocks: list[Block] = field(default_factory=lambda: [make_genesis()])

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]


def append_block(
    chain: Chain,
    block: Block,
    registry: Optional[AuthorizedRegistry] = None,
    credit_view: Optional[Callable[[bytes], float]] = None,
    alpha_d: float = 0.0,
) -> Chain:
    """Validate a mined block against the tip and append it.

    When ``credit_view`` is given, the miner's difficulty entitlement is
    checked against its credit at append time; without it only the
    structural rules apply (offline verification has no credit history).
    Raises :class:`BlockRejectedError` with the failed clause on refusal.
    """
    from .consensus import DL_EASY, difficulty_for, validate_block

    if credit_view is not None:
        is_auth = registry.contains(block.miner) if registry is not None else False
        expected = difficulty_for(credit_view(block.miner), alpha_d, is_auth)
    else:
        expected = DL_EASY
    result = validate_block(
        chain,
        block,
        expected,
        registry,
        miner_credit=credit_view(block.miner) if credit_view is not None else None,
        alpha_d=alpha_d,
    )
    if not result.accepted:
        raise BlockRejectedError(result.reason, result.detail)
    chain.blocks.append(block)
    return chain


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def transaction_to_dict(tx: Transaction) -> dict:
    return {
        "kind": tx.kind.value,
        "sender": tx.sender.hex(),
        "sender_pubkey": tx.sender_pubkey.hex(),
        "timestamp": tx.timestamp,
        "payload": tx.payload.hex(),
        "signature": tx.signature.hex(),
    }


def transaction_from_dict(d: dict) -> Transaction:
    return Transaction(
        kind=TxKind(d["kind"]),
        sender=bytes.fromhex(d["sender"]),
        sender_pubkey=bytes.fromhex(d["sender_pubkey"]),
        payload=bytes.fromhex(d["payload"]),
        timestamp=int(d["timestamp"]),
        signature=bytes.fromhex(d["signature"]),
    )


def block_to_dict(block: Block) -> dict:
    return {
        "index": block.index,
        "prev_hash": block.prev_hash.hex(),
        "whash_window": block.whash_window,
        "nonce": block.nonce,
        "timestamp": block.timestamp,
        "miner": block.miner.hex(),
        "block_hash": block.block_hash.hex(),
        "transactions": [transaction_to_dict(tx) for tx in block.transactions],
    }


def block_from_dict(d: dict) -> Block:
    return Block(
        index=int(d["index"]),
        prev_hash=bytes.fromhex(d["prev_hash"]),
        whash_window=int(d["whash_window"]),
        nonce=int(d["nonce"]),
        transactions=tuple(transaction_from_dict(t) for t in d["transactions"]),
        miner=bytes.fromhex(d["miner"]),
        timestamp=int(d["timestamp"]),
        block_hash=bytes.fromhex(d["block_hash"]),
    )


def block_to_json_line(block: Block) -> str:
    return json.dumps(block_to_dict(block), sort_keys=True, separators=(",", ":"))


def save_chain(chain: Chain, path: str) -> None:
    with open(path, "w") as fh:
        for block in chain.blocks:
            fh.write(block_to_json_line(block))
            fh.write("\n")


def load_chain(path: str) -> Chain:
    blocks = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                blocks.append(block_from_dict(json.loads(line)))
    if not blocks:
        raise ValueError(f"{path} holds no blocks")
    return Chain(blocks=blocks)


# ---------------------------------------------------------------------------
# Infected users pool
# ---------------------------------------------------------------------------

@dataclass
class InfectedUsersPool:
    """Replicated record of diagnosed node ids with a retention horizon."""

    retention_ticks: int
    entries: set[tuple[bytes, int]] = field(default_factory=set)

    def add(self, node_id: bytes, tick: int) -> None:
        self.entries.add((node_id, tick))

    def prune(self, now: int) -> None:
        horizon = now - self.retention_ticks
        self.entries = {(n, t) for n, t in self.entries if t >= horizon}

    def contains(self, node_id: bytes) -> bool:
        return any(n == node_id for n, _ in self.entries)

    def to_json(self) -> str:
        rows = [
            {"node_id": n.hex(), "tick": t}
            for n, t in sorted(self.entries, key=lambda e: (e[1], e[0]))
        ]
        return json.dumps(rows, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str, retention_ticks: int) -> "InfectedUsersPool":
        pool = cls(retention_ticks=retention_ticks)
        for row in json.loads(text):
            pool.add(bytes.fromhex(row["node_id"]), int(row["tick"]))
        return pool


def save_iup(pool: InfectedUsersPool, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(pool.to_json())
        fh.write("\n")
