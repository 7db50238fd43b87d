import math
from fractions import Fraction

import numpy as np
import pytest

from rso_puf.core import (
    PufInstance,
    delta,
    eval_response_word,
    evaluate,
    random_challenges,
    sample_instance,
)
from rso_puf.errors import BankExhaustedError, ContractViolationError, StabilityError
from rso_puf.metrics import hd
from rso_puf.rso import (
    ChallengeBank,
    ObfuscationSet,
    SimTrng,
    brute_force_model_count,
    build_bank,
    derive_set,
    extraction_probability,
    extraction_probability_exact,
    hex_to_word,
    n_min_arbiter,
    n_min_rso,
    obfuscate,
    read_exchange_log,
    select_stable_challenges,
    split_word,
    update_set,
    word_to_hex,
    write_exchange_log,
)


@pytest.fixture(scope="module")
def device64():
    puf = sample_instance(64, seed=2)
    from rso_puf.core import calibrate_noise

    return puf.with_noise(calibrate_noise(puf, 0.05))


@pytest.fixture(scope="module")
def bank64(device64):
    return build_bank(device64, m=4, bank_count=3, rng=10)


class TestWordCodec:
    def test_round_trip(self, rng):
        for n in (7, 32, 64, 129):
            word = rng.integers(0, 2, size=n, dtype=np.uint8)
            assert np.array_equal(hex_to_word(word_to_hex(word), n), word)

    def test_split_sizes(self):
        a, b = split_word(np.arange(7))
        assert len(a) == 4 and len(b) == 3


class TestStableSelection:
    def test_zero_noise_accepts_everything(self):
        p = sample_instance(32, seed=3)      # noise_sigma = 0
        picked = select_stable_challenges(p, 100, rng=0)
        assert picked.shape == (100, 32)

    def test_margin_respected(self, device64):
        picked = select_stable_challenges(device64, 200, k_sigma=4.0, rng=1)
        margins = np.abs(delta(device64, picked))
        assert (margins >= 4.0 * device64.noise_sigma).all()

    def test_gaussian_tail_bound_of_policy(self):
        # flip probability of a just-selected challenge: Q(4) ~ 3.17e-5
        q4 = 0.5 * math.erfc(4.0 / math.sqrt(2.0))
        assert q4 == pytest.approx(3.17e-5, rel=0.01)

    def test_selected_challenges_never_flip(self, device64):
        picked = select_stable_challenges(device64, 64, rng=2)
        reference = evaluate(device64, picked)
        rng = np.random.default_rng(5)
        for _ in range(10000 // 64):
            assert np.array_equal(
                evaluate(device64, picked, noisy=True, rng=rng), reference
            )

    def test_exhaustion_error(self, device64):
        with pytest.raises(StabilityError):
            select_stable_challenges(
                device64, 1000, k_sigma=50.0, rng=0, max_candidates=5000
            )


class TestBank:
    def test_shapes_and_storage_arithmetic(self, device64):
        bank = build_bank(device64, m=8, bank_count=1, rng=11)
        assert bank.challenges.shape == (1, 8, 64, 64)
        # 8 keys x 64 challenges x 64 bits = 32768 bits = 4 KB per bank
        assert bank.stored_bits_per_bank == 32768
        assert bank.stored_bits_per_bank // 8 == 4096

    def test_file_round_trip(self, bank64, tmp_path):
        path = tmp_path / "bank.txt"
        path.write_text(bank64.to_text())
        back = ChallengeBank.from_text(path.read_text())
        assert np.array_equal(back.challenges, bank64.challenges)
        assert back.k_sigma == bank64.k_sigma
        assert back.active_bank == bank64.active_bank

    def test_rejects_single_key(self):
        with pytest.raises(ContractViolationError):
            ChallengeBank(challenges=np.zeros((1, 1, 8, 8), dtype=np.uint8))

    def test_malformed_header(self):
        with pytest.raises(ContractViolationError):
            ChallengeBank.from_text("m=2 n=oops bank_count=1 k=4.0\n")


class TestDeriveSet:
    def test_keys_match_direct_evaluation(self, device64, bank64):
        oset = derive_set(device64, bank64)
        assert oset.m == 4
        for g in range(4):
            expected = eval_response_word(device64, bank64.challenges[0, g])
            assert np.array_equal(oset.keys[g], expected)

    def test_tiny_instance_hand_check(self):
        # bias-only weights: every response bit is 1, so keys are all-ones
        p = PufInstance(n=4, omega=np.array([0, 0, 0, 0, 1.0]))
        bank = ChallengeBank(
            challenges=random_challenges(4, 2 * 4, rng=0).reshape(1, 2, 4, 4)
        )
        oset = derive_set(p, bank)
        assert (oset.keys == 1).all()

    def test_rederivation_identical(self, device64, bank64):
        a = derive_set(device64, bank64)
        b = derive_set(device64, bank64)
        assert np.array_equal(a.keys, b.keys)


class TestObfuscate:
    def test_zero_keys_are_identity(self, device64):
        oset = ObfuscationSet(keys=np.zeros((2, 64), dtype=np.uint8))
        ch = random_challenges(64, 64, rng=6)
        ex = obfuscate(oset, SimTrng(0), device64, ch, indices=(0, 1))
        assert np.array_equal(ex.r_hat, evaluate(device64, ch))

    def test_forced_indices_deterministic(self, device64, bank64):
        oset = derive_set(device64, bank64)
        ch = random_challenges(64, 64, rng=7)
        a = obfuscate(oset, SimTrng(0), device64, ch, indices=(1, 2))
        b = obfuscate(oset, SimTrng(99), device64, ch, indices=(1, 2))
        assert np.array_equal(a.r_hat, b.r_hat)

    def test_both_sides_recomputed_independently(self, device64, bank64):
        # masked challenge then mask response, rebuilt by hand
        oset = derive_set(device64, bank64)
        ch = random_challenges(64, 64, rng=8)
        ex = obfuscate(oset, SimTrng(1), device64, ch)
        i, j = ex.key_i_index, ex.key_j_index
        assert np.array_equal(ex.c_prime, ch ^ oset.keys[i])
        assert np.array_equal(
            ex.r_hat, evaluate(device64, ch ^ oset.keys[i]) ^ oset.keys[j]
        )
        assert np.array_equal(np.concatenate([ex.r_hat_a, ex.r_hat_b]), ex.r_hat)

    def test_xor_involution(self, device64, bank64):
        # unmasking with the same keys recovers the challenge set and the
        # raw response exactly, across many exchanges
        oset = derive_set(device64, bank64)
        trng = SimTrng(3)
        rng_ch = np.random.default_rng(4)
        for _ in range(200):
            ch = random_challenges(64, 64, rng=rng_ch)
            ex = obfuscate(oset, trng, device64, ch)
            assert np.array_equal(ex.c_prime ^ oset.keys[ex.key_i_index], ch)
            assert np.array_equal(ex.r_hat ^ oset.keys[ex.key_j_index], ex.r_prime)

    def test_trng_draws_logged(self, device64, bank64):
        oset = derive_set(device64, bank64)
        trng = SimTrng(12)
        ch = random_challenges(64, 64, rng=9)
        ex = obfuscate(oset, trng, device64, ch)
        assert trng.log == [ex.key_i_index, ex.key_j_index]

    def test_reliability_preserved_exactly(self, device64, bank64):
        # masking is an isometry: per re-read, the masked word moves by
        # exactly as many bits as the raw word
        oset = derive_set(device64, bank64)
        ch = random_challenges(64, 64, rng=10)
        clean = obfuscate(oset, SimTrng(0), device64, ch, indices=(0, 1))
        rng = np.random.default_rng(11)
        for _ in range(50):
            noisy = obfuscate(
                oset, SimTrng(0), device64, ch, indices=(0, 1), noisy=True, rng=rng
            )
            assert hd(noisy.r_hat, clean.r_hat) == hd(noisy.r_prime, clean.r_prime)

    def test_masked_bits_balanced(self, device64):
        rng = np.random.default_rng(13)
        keys = rng.integers(0, 2, size=(8, 64), dtype=np.uint8)
        oset = ObfuscationSet(keys=keys)
        trng = SimTrng(14)
        ones = 0
        total = 0
        for _ in range(300):
            ch = random_challenges(64, 64, rng=rng)
            ex = obfuscate(oset, trng, device64, ch)
            ones += int(ex.r_hat.sum())
            total += 64
        assert ones / total == pytest.approx(0.5, abs=0.03)

    def test_wrong_shape_rejected(self, device64, bank64):
        oset = derive_set(device64, bank64)
        with pytest.raises(ContractViolationError):
            obfuscate(oset, SimTrng(0), device64, random_challenges(64, 8, rng=0))


class TestThresholdFormulas:
    def test_minimum_crps_published_values(self):
        assert n_min_arbiter(64, 0.05) == 650
        assert n_min_rso(64, 0.05, 2) == 2600

    def test_minimum_crps_edge_cases(self):
        assert n_min_arbiter(1, 0.5) == 2
        assert n_min_arbiter(128, 0.05) == 1290
        assert n_min_rso(64, 0.05, 1) == n_min_arbiter(64, 0.05)
        assert n_min_rso(64, 0.05, 8) == 41600

    def test_ratio_is_exactly_m_squared(self):
        for m in (2, 4, 8, 16, 32):
            assert n_min_rso(64, 0.05, m) == m * m * n_min_arbiter(64, 0.05)

    def test_epsilon_out_of_range(self):
        with pytest.raises(ContractViolationError):
            n_min_arbiter(64, 0.0)
        with pytest.raises(ContractViolationError):
            n_min_arbiter(64, 1.0)

    def test_extraction_probability_log_form(self):
        # Eq. form m^2 / C(2600, 650); the exact log10 is -632.62 (the
        # prose rounds it to "1e-630")
        assert extraction_probability(64, 0.05, 2) == pytest.approx(-632.62, abs=0.05)

    def test_extraction_probability_small_case_exact(self):
        # n=4, eps=0.5 -> N_arb=5, N_rso=20: exact rational cross-check
        exact = extraction_probability_exact(4, 0.5, 2)
        assert exact == Fraction(4, math.comb(20, 5))
        assert extraction_probability(4, 0.5, 2) == pytest.approx(
            math.log10(float(exact)), rel=1e-12
        )

    def test_extraction_probability_degenerate(self):
        # m=1: N_rso = N_arb so the binomial is 1 and log10(m^2) = 0
        assert extraction_probability(64, 0.05, 1) == pytest.approx(0.0, abs=1e-12)

    def test_brute_force_count(self):
        assert brute_force_model_count(64, 0.05, 2) == pytest.approx(391.3, abs=0.05)
        assert brute_force_model_count(64, 0.05, 1) == 0.0
        expected = 2 * 330 * math.log10(4)
        assert brute_force_model_count(32, 0.05, 4) == pytest.approx(expected)


class TestUpdateSet:
    def test_advances_and_changes_keys(self, device64):
        bank = build_bank(device64, m=4, bank_count=3, rng=20)
        first = derive_set(device64, bank)
        second = update_set(bank, device64)
        assert bank.active_bank == 1
        assert not np.array_equal(first.keys, second.keys)

    def test_double_update_advances_by_two(self, device64):
        bank = build_bank(device64, m=4, bank_count=3, rng=21)
        update_set(bank, device64)
        update_set(bank, device64)
        assert bank.active_bank == 2

    def test_exhaustion_is_retirement(self, device64):
        bank = build_bank(device64, m=2, bank_count=1, rng=22)
        with pytest.raises(BankExhaustedError):
            update_set(bank, device64)

    def test_fresh_sets_differ_across_seeds(self, device64):
        # over several provisioning seeds, consecutive key sets never repeat
        for seed in range(5):
            bank = build_bank(device64, m=4, bank_count=2, rng=100 + seed)
            a = derive_set(device64, bank)
            b = update_set(bank, device64)
            assert not np.array_equal(a.keys, b.keys)


class TestExchangeLog:
    def test_round_trip(self, device64, bank64, tmp_path):
        oset = derive_set(device64, bank64)
        trng = SimTrng(30)
        rng = np.random.default_rng(31)
        exchanges = [
            obfuscate(oset, trng, device64, random_challenges(64, 64, rng=rng))
            for _ in range(5)
        ]
        path = tmp_path / "exchanges.jsonl"
        write_exchange_log(exchanges, path)
        records = read_exchange_log(path)
        assert len(records) == 5
        for rec, ex in zip(records, exchanges):
            assert rec["i"] == ex.key_i_index
            assert rec["j"] == ex.key_j_index
            assert np.array_equal(hex_to_word(rec["r_hat"], 64), ex.r_hat)
            assert np.array_equal(hex_to_word(rec["c"][0], 64), ex.challenges[0])
