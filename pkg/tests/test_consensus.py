import dataclasses

import numpy as np
import pytest
from scipy import stats

from proxichain.consensus import (
    DL_EASY,
    DL_HARD,
    LEVELS_BY_NAME,
    MiningTimeoutError,
    attack_cost_model,
    block_difficulty,
    difficulty_for,
    digest_satisfies,
    expected_interval,
    mine,
    validate_block,
    verify_chain,
)
from proxichain.identity import Role, generate_identity
from proxichain.ledger import (
    Block,
    Chain,
    TxKind,
    append_block,
    make_transaction,
    whash_window_for,
)

MINER = generate_identity(Role.LIGHT, seed=601)


def _candidate(chain: Chain, window: int = 0, txs=(), timestamp: int = 10) -> Block:
    return Block(
        index=len(chain.blocks),
        prev_hash=chain.tip.block_hash,
        whash_window=window,
        nonce=0,
        transactions=tuple(txs),
        miner=MINER.node_id,
        timestamp=timestamp,
        block_hash=b"\x00" * 32,
    )


def _grow(length: int) -> Chain:
    chain = Chain()
    for i in range(length):
        window = whash_window_for(len(chain.blocks), i % 3)
        append_block(chain, mine(chain, _candidate(chain, window, timestamp=i + 1), DL_EASY).block)
    return chain


class TestDigestPrefix:
    def test_easy_level_accepts_one_zero_nibble(self):
        assert digest_satisfies(b"\x0f" + b"\xff" * 31, DL_EASY)
        assert not digest_satisfies(b"\x10" + b"\xff" * 31, DL_EASY)

    def test_hard_level_needs_four_zero_nibbles(self):
        assert digest_satisfies(b"\x00\x00" + b"\xff" * 30, DL_HARD)
        assert not digest_satisfies(b"\x00\x0f" + b"\xff" * 30, DL_HARD)
        assert not digest_satisfies(b"\x00\x10" + b"\xff" * 30, DL_HARD)

    def test_hard_implies_easy(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            digest = bytes(rng.integers(0, 256, size=32, dtype=np.uint8))
            if digest_satisfies(digest, DL_HARD):
                assert digest_satisfies(digest, DL_EASY)

    def test_level_registry(self):
        assert LEVELS_BY_NAME["DL_e"] is DL_EASY
        assert LEVELS_BY_NAME["DL_h"] is DL_HARD
        assert DL_EASY.bits == 4
        assert DL_HARD.bits == 16


class TestEntitlement:
    def test_credit_at_threshold_gets_easy(self):
        assert difficulty_for(0.0, 0.0, is_authorized=False) is DL_EASY

    def test_credit_below_threshold_gets_hard(self):
        assert difficulty_for(-1e-9, 0.0, is_authorized=False) is DL_HARD

    def test_authorized_overrides_any_credit(self):
        assert difficulty_for(-1e6, 0.0, is_authorized=True) is DL_EASY

    def test_threshold_is_relative(self):
        assert difficulty_for(5.0, 10.0, is_authorized=False) is DL_HARD
        assert difficulty_for(15.0, 10.0, is_authorized=False) is DL_EASY


class TestMine:
    def test_result_validates_on_tip(self):
        chain = _grow(3)
        result = mine(chain, _candidate(chain), DL_EASY)
        assert digest_satisfies(result.block.block_hash, DL_EASY)
        assert validate_block(chain, result.block, DL_EASY).accepted

    def test_mined_block_reports_trial_count(self):
        chain = Chain()
        result = mine(chain, _candidate(chain), DL_EASY)
        assert result.trials == result.nonce + 1

    def test_satisfying_start_takes_one_trial(self):
        chain = _grow(2)
        first = mine(chain, _candidate(chain), DL_EASY)
        again = mine(chain, _candidate(chain), DL_EASY, nonce_start=first.nonce)
        assert again.trials == 1
        assert again.block == first.block

    def test_every_window_size_validates(self):
        chain = _grow(6)
        for window in range(len(chain.blocks) + 1):
            block = mine(chain, _candidate(chain, window), DL_EASY).block
            result = validate_block(chain, block, DL_EASY)
            assert result.accepted, (window, result.reason)

    def test_timeout_budget(self):
        chain = Chain()
        cand = _candidate(chain)
        nonce = 0
        while True:
            probe = mine(chain, cand, DL_EASY, nonce_start=nonce)
            if probe.nonce > nonce:
                break
            nonce = probe.nonce + 1
        with pytest.raises(MiningTimeoutError):
            mine(chain, cand, DL_EASY, nonce_start=nonce, max_trials=1)

    def test_hard_block_clears_easy_prefix_too(self):
        chain = Chain()
        block = mine(chain, _candidate(chain), DL_HARD).block
        assert digest_satisfies(block.block_hash, DL_HARD)
        assert digest_satisfies(block.block_hash, DL_EASY)

    def test_easy_trials_follow_geometric_law(self):
        """Trial counts over many blocks should fit Geometric(p = 2^-4).

        Chi-square on coarse bins at the 1% level; with p = 1/16 the mean
        sits near 16 and the tail decays fast enough for five bins.
        """
        chain = Chain()
        trials = []
        for i in range(300):
            result = mine(chain, _candidate(chain, timestamp=i + 1), DL_EASY)
            trials.append(result.trials)
            append_block(chain, result.block)
        trials = np.asarray(trials)

        p = 1.0 / 16.0
        edges = [(1, 5), (6, 11), (12, 18), (19, 30), (31, None)]
        observed = []
        expected = []
        for lo, hi in edges:
            if hi is None:
                observed.append(np.sum(trials >= lo))
                expected.append(len(trials) * (1 - p) ** (lo - 1))
            else:
                observed.append(np.sum((trials >= lo) & (trials <= hi)))
                expected.append(
                    len(trials) * ((1 - p) ** (lo - 1) - (1 - p) ** hi)
                )
        statistic, pvalue = stats.chisquare(observed, expected)
        assert pvalue > 0.01, (statistic, pvalue, observed, expected)


class TestRejectionReasons:
    def test_window_out_of_range(self):
        chain = _grow(2)
        bad = dataclasses.replace(_candidate(chain), whash_window=101)
        result = validate_block(chain, bad, DL_EASY)
        assert (result.accepted, result.reason) == (False, "window")

    def test_window_past_chain_start(self):
        chain = _grow(2)
        bad = dataclasses.replace(_candidate(chain), whash_window=50)
        result = validate_block(chain, bad, DL_EASY)
        assert (result.accepted, result.reason) == (False, "window")

    def test_oversized_block(self):
        chain = Chain()
        sender = generate_identity(Role.LIGHT, seed=602)
        big = make_transaction(sender, TxKind.ST, b"\x00" * 1_100_000, 1)
        bad = _candidate(chain, txs=[big])
        result = validate_block(chain, bad, DL_EASY)
        assert (result.accepted, result.reason) == (False, "overflow")

    def test_prefix_miss(self):
        from proxichain.ledger import whash_digest

        chain = _grow(2)
        cand = _candidate(chain)
        nonce = 0
        while digest_satisfies(whash_digest(chain.blocks, cand, nonce), DL_EASY):
            nonce += 1
        honest_digest = whash_digest(chain.blocks, cand, nonce)
        block = dataclasses.replace(cand, nonce=nonce, block_hash=honest_digest)
        result = validate_block(chain, block, DL_EASY)
        assert (result.accepted, result.reason) == (False, "prefix")

    def test_easy_digest_where_hard_was_required(self):
        chain = _grow(2)
        easy = mine(chain, _candidate(chain), DL_EASY).block
        if digest_satisfies(easy.block_hash, DL_HARD):
            easy = mine(chain, _candidate(chain, timestamp=999), DL_EASY).block
        result = validate_block(chain, easy, DL_HARD)
        assert (result.accepted, result.reason) == (False, "entitlement")

    def test_credit_mismatch_is_entitlement(self):
        chain = _grow(2)
        hard = mine(chain, _candidate(chain), DL_HARD).block
        result = validate_block(chain, hard, DL_HARD, miner_credit=10.0, alpha_d=0.0)
        assert (result.accepted, result.reason) == (False, "entitlement")

    def test_matching_credit_accepted(self):
        chain = _grow(2)
        hard = mine(chain, _candidate(chain), DL_HARD).block
        result = validate_block(chain, hard, DL_HARD, miner_credit=-5.0, alpha_d=0.0)
        assert result.accepted


class TestVerifyChain:
    def test_clean_chain_has_no_violations(self):
        assert verify_chain(_grow(8)) == []

    def test_tampered_timestamp_is_caught(self):
        chain = _grow(8)
        chain.blocks[4] = dataclasses.replace(chain.blocks[4], timestamp=424242)
        reasons = {(v.index, v.reason) for v in verify_chain(chain)}
        assert (4, "digest") in reasons

    def test_tampered_hash_breaks_linkage(self):
        chain = _grow(8)
        chain.blocks[4] = dataclasses.replace(chain.blocks[4], block_hash=b"\x11" * 32)
        reasons = {(v.index, v.reason) for v in verify_chain(chain)}
        assert (4, "digest") in reasons
        assert (5, "linkage") in reasons

    def test_tampered_genesis_is_caught(self):
        chain = _grow(3)
        chain.blocks[0] = dataclasses.replace(chain.blocks[0], timestamp=1)
        reasons = {(v.index, v.reason) for v in verify_chain(chain)}
        assert (0, "digest") in reasons


class TestAnalyticModel:
    def test_difficulty_ratio_between_levels(self):
        target = 0.37
        ratio = block_difficulty(DL_HARD, target) / block_difficulty(DL_EASY, target)
        assert ratio == pytest.approx(4.0)

    def test_difficulty_guards(self):
        with pytest.raises(ValueError):
            block_difficulty(DL_EASY, 0.0)
        with pytest.raises(ValueError):
            block_difficulty(DL_EASY, -1.0)

    def test_interval_scales_with_rate_and_bits(self):
        base = expected_interval(1.0, 4, 1e6)
        assert expected_interval(1.0, 4, 2e6) == pytest.approx(base / 2)
        assert expected_interval(1.0, 16, 1e6) == pytest.approx(base * 2 ** 12)
        with pytest.raises(ValueError):
            expected_interval(1.0, 4, 0.0)

    def test_attack_cost_ratio_is_window_size(self):
        for n_wh in (1, 14, 100):
            honest, attacker = attack_cost_model(n_wh, bits_b=16)
            assert honest == n_wh * 2.0 ** 16
            assert attacker / honest == pytest.approx(n_wh)

    def test_attack_cost_guard(self):
        with pytest.raises(ValueError):
            attack_cost_model(0, bits_b=4)
