import dataclasses

import pytest

from proxichain.consensus import DL_EASY, mine, verify_chain
from proxichain.identity import Role, generate_identity
from proxichain.ledger import (
    MAX_BLOCK_BYTES,
    Block,
    BlockOverflowError,
    BlockRejectedError,
    Chain,
    InfectedUsersPool,
    TxKind,
    WindowDomainError,
    WindowHistoryError,
    append_block,
    block_size,
    decode_contact_pairs,
    encode_contact_pairs,
    load_chain,
    make_genesis,
    make_transaction,
    save_chain,
    verify_transaction,
    whash_digest,
    whash_preimage_prefix,
    whash_window_for,
)

MINER = generate_identity(Role.LIGHT, seed=501)
SENDER = generate_identity(Role.LIGHT, seed=502)


def _tx(payload: bytes, ts: int = 1):
    return make_transaction(SENDER, TxKind.ST, payload, ts)


def _mine_next(chain: Chain, window: int, txs=(), timestamp: int = 10) -> Block:
    candidate = Block(
        index=len(chain.blocks),
        prev_hash=chain.tip.block_hash,
        whash_window=window,
        nonce=0,
        transactions=tuple(txs),
        miner=MINER.node_id,
        timestamp=timestamp,
        block_hash=b"\x00" * 32,
    )
    return mine(chain, candidate, DL_EASY).block


def _grow(length: int, window: int = 0) -> Chain:
    chain = Chain()
    for i in range(length):
        block = _mine_next(chain, whash_window_for(len(chain.blocks), window), timestamp=i + 1)
        append_block(chain, block)
    return chain


class TestBlockSize:
    def test_no_records_is_pure_overhead(self):
        assert block_size(100, 128, 0, 0) == 100

    def test_linear_in_record_count(self):
        assert block_size(100, 128, 0, 100) == 12_900

    def test_encryption_overhead_counts_per_record(self):
        assert block_size(100, 128, 28, 100) == 100 + 156 * 100

    def test_overflow_raises(self):
        with pytest.raises(BlockOverflowError):
            block_size(0, MAX_BLOCK_BYTES, 0, 2)

    def test_exact_limit_is_allowed(self):
        assert block_size(0, MAX_BLOCK_BYTES, 0, 1) == MAX_BLOCK_BYTES

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            block_size(-1, 0, 0, 0)


class TestWindowResolution:
    def test_draw_above_chain_length_collapses_to_zero(self):
        assert whash_window_for(5, 14) == 0

    def test_draw_within_history_is_kept(self):
        assert whash_window_for(100, 14) == 14

    def test_zero_draw(self):
        assert whash_window_for(0, 0) == 0

    def test_draw_equal_to_length_is_kept(self):
        assert whash_window_for(14, 14) == 14

    def test_draw_out_of_domain(self):
        with pytest.raises(WindowDomainError):
            whash_window_for(10, 101)
        with pytest.raises(WindowDomainError):
            whash_window_for(10, -1)

    def test_negative_chain_length(self):
        with pytest.raises(ValueError):
            whash_window_for(-1, 0)


class TestWindowedDigest:
    def test_window_zero_and_one_ignore_predecessors(self):
        chain_a = _grow(5)
        chain_b = Chain()
        for i in range(5):
            append_block(chain_b, _mine_next(chain_b, 0, timestamp=100 + i))
        assert chain_a.tip.block_hash != chain_b.tip.block_hash

        for window in (0, 1):
            cand = Block(
                index=6,
                prev_hash=b"\xaa" * 32,
                whash_window=window,
                nonce=7,
                transactions=(),
                miner=MINER.node_id,
                timestamp=77,
                block_hash=b"\x00" * 32,
            )
            da = whash_digest(chain_a.blocks, cand, 7)
            db = whash_digest(chain_b.blocks, cand, 7)
            assert da == db

    def test_deeper_window_sees_predecessors(self):
        chain = _grow(6)
        cand = dataclasses.replace(chain.tip, index=6, whash_window=3, prev_hash=chain.tip.block_hash)
        reference = whash_digest(chain.blocks, cand, 0)

        tampered = list(chain.blocks)
        tampered[5] = dataclasses.replace(tampered[5], timestamp=9999)
        assert whash_digest(tampered, cand, 0) != reference

        outside = list(chain.blocks)
        outside[2] = dataclasses.replace(outside[2], timestamp=9999)
        assert whash_digest(outside, cand, 0) == reference

    def test_windows_wider_than_history_rejected(self):
        chain = _grow(2)
        cand = Block(
            index=3,
            prev_hash=chain.tip.block_hash,
            whash_window=50,
            nonce=0,
            transactions=(),
            miner=MINER.node_id,
            timestamp=5,
            block_hash=b"\x00" * 32,
        )
        with pytest.raises(WindowHistoryError):
            whash_preimage_prefix(chain.blocks, cand)

    def test_nonce_changes_digest(self):
        chain = _grow(3)
        cand = dataclasses.replace(chain.tip, index=3, prev_hash=chain.tip.block_hash)
        assert whash_digest(chain.blocks, cand, 1) != whash_digest(chain.blocks, cand, 2)


class TestAppend:
    def test_genesis_is_fixed_point(self):
        assert make_genesis() == make_genesis()
        assert make_genesis().index == 0

    def test_happy_path(self):
        chain = Chain()
        block = _mine_next(chain, 0, txs=[_tx(b"hello")])
        append_block(chain, block)
        assert len(chain.blocks) == 2
        assert chain.tip is block

    def test_stale_prev_hash_rejected(self):
        chain = _grow(3)
        stale = dataclasses.replace(chain.blocks[1])
        fork = Block(
            index=len(chain.blocks),
            prev_hash=stale.block_hash,
            whash_window=0,
            nonce=0,
            transactions=(),
            miner=MINER.node_id,
            timestamp=50,
            block_hash=b"\x00" * 32,
        )
        mined = mine(Chain(blocks=list(chain.blocks)), dataclasses.replace(fork, prev_hash=chain.tip.block_hash), DL_EASY).block
        bad = dataclasses.replace(mined, prev_hash=stale.block_hash)
        with pytest.raises(BlockRejectedError) as err:
            append_block(chain, bad)
        assert err.value.reason == "stale"

    def test_wrong_digest_rejected(self):
        chain = _grow(2)
        block = _mine_next(chain, 0)
        forged = dataclasses.replace(block, block_hash=b"\x00" * 32)
        with pytest.raises(BlockRejectedError) as err:
            append_block(chain, forged)
        assert err.value.reason == "digest"

    def test_wrong_index_rejected(self):
        chain = _grow(2)
        block = _mine_next(chain, 0)
        shifted = dataclasses.replace(block, index=9)
        with pytest.raises(BlockRejectedError) as err:
            append_block(chain, shifted)
        assert err.value.reason == "index"

    def test_bad_tx_signature_rejected(self):
        chain = Chain()
        tx = _tx(b"payload")
        bad_tx = dataclasses.replace(tx, payload=b"other")
        block = _mine_next(chain, 0, txs=[bad_tx])
        with pytest.raises(BlockRejectedError) as err:
            append_block(chain, block)
        assert err.value.reason == "signature"


class TestSerialization:
    def test_roundtrip_is_bit_exact(self, tmp_path):
        chain = Chain()
        for i in range(4):
            txs = [_tx(bytes([i, j]), ts=i * 10 + j) for j in range(3)]
            append_block(chain, _mine_next(chain, whash_window_for(len(chain.blocks), i), txs, timestamp=i + 1))

        path = tmp_path / "chain.jsonl"
        save_chain(chain, str(path))
        first = path.read_bytes()

        restored = load_chain(str(path))
        assert restored.blocks == chain.blocks
        assert verify_chain(restored) == []

        save_chain(restored, str(path))
        assert path.read_bytes() == first

    def test_loaded_chain_preserves_tx_validity(self, tmp_path):
        chain = Chain()
        append_block(chain, _mine_next(chain, 0, txs=[_tx(b"x", ts=3)]))
        path = tmp_path / "c.jsonl"
        save_chain(chain, str(path))
        restored = load_chain(str(path))
        assert all(verify_transaction(tx) for tx in restored.tip.transactions)


class TestContactPairs:
    def test_roundtrip(self):
        pairs = [(bytes([i]) * 32, i * 1000) for i in range(5)]
        assert decode_contact_pairs(encode_contact_pairs(pairs)) == pairs

    def test_empty(self):
        assert decode_contact_pairs(encode_contact_pairs([])) == []

    def test_record_width_is_forty_bytes(self):
        blob = encode_contact_pairs([(b"\x01" * 32, 7)])
        assert len(blob) == 4 + 40

    def test_bad_id_length_rejected(self):
        with pytest.raises(ValueError):
            encode_contact_pairs([(b"short", 1)])


class TestInfectedUsersPool:
    def test_retention_prunes_old_entries(self):
        pool = InfectedUsersPool(retention_ticks=100)
        pool.add(b"\x01" * 32, tick=10)
        pool.add(b"\x02" * 32, tick=150)
        pool.prune(now=200)
        assert not pool.contains(b"\x01" * 32)
        assert pool.contains(b"\x02" * 32)

    def test_entry_on_horizon_survives(self):
        pool = InfectedUsersPool(retention_ticks=50)
        pool.add(b"\x03" * 32, tick=150)
        pool.prune(now=200)
        assert pool.contains(b"\x03" * 32)

    def test_json_roundtrip(self):
        pool = InfectedUsersPool(retention_ticks=10)
        pool.add(b"\x04" * 32, tick=1)
        pool.add(b"\x05" * 32, tick=2)
        restored = InfectedUsersPool.from_json(pool.to_json(), retention_ticks=10)
        assert restored.entries == pool.entries
