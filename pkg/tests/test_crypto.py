"""Vector-commitment and threshold-signature behavior, including metering."""

import math
import random

import pytest

from coded_mbrb.crypto import (
    BelowThresholdError,
    CONSTANT_SCHEME,
    Commitment,
    EmptyVectorError,
    InvalidSharePresentError,
    KAPPA_BITS,
    Keyring,
    MERKLE_SCHEME,
    MixedCommitmentsError,
    SignatureShare,
    Signer,
    ThresholdSignature,
    UnknownSignerError,
    id_bits,
    ts_combine,
    ts_sign_share,
    ts_verify,
    ts_verify_share,
    vc_commit,
    vc_verify,
)


def make_vector(rng, count=8, size=16):
    return [rng.randbytes(size) for _ in range(count)]


class TestVectorCommitment:
    def test_commit_is_deterministic(self):
        vec = make_vector(random.Random(1))
        assert vc_commit(vec) == vc_commit(vec)

    def test_all_proofs_verify(self):
        vec = make_vector(random.Random(2))
        c, proofs = vc_commit(vec)
        for i, (element, proof) in enumerate(zip(vec, proofs), 1):
            assert proof.index == i
            assert vc_verify(c, proof, element, i)

    def test_single_byte_flip_changes_digest(self):
        vec = make_vector(random.Random(3))
        altered = list(vec)
        flipped = bytearray(altered[4])
        flipped[0] ^= 0x01
        altered[4] = bytes(flipped)
        assert vc_commit(vec)[0].digest != vc_commit(altered)[0].digest

    def test_tampered_elements_rejected(self):
        rng = random.Random(4)
        vec = make_vector(rng)
        c, proofs = vc_commit(vec)
        for _ in range(1000):
            i = rng.randrange(len(vec))
            tampered = bytearray(vec[i])
            bit = rng.randrange(len(tampered) * 8)
            tampered[bit // 8] ^= 1 << (bit % 8)
            assert not vc_verify(c, proofs[i], bytes(tampered), i + 1)

    def test_proof_index_swap_rejected(self):
        vec = make_vector(random.Random(5))
        c, proofs = vc_commit(vec)
        for i in range(len(vec)):
            for j in range(len(vec)):
                if i != j:
                    assert not vc_verify(c, proofs[i], vec[i], j + 1)

    def test_empty_vector_rejected(self):
        with pytest.raises(EmptyVectorError):
            vc_commit([])

    def test_vector_length_is_bound(self):
        vec = make_vector(random.Random(6), count=5)
        c5, proofs5 = vc_commit(vec)
        c8, _ = vc_commit(vec + [b"\x00" * 16] * 3)
        assert c5.digest != c8.digest
        assert not vc_verify(c8, proofs5[0], vec[0], 1)

    def test_merkle_proof_metering(self):
        for count in (1, 2, 5, 8, 16, 100):
            vec = [bytes([i]) * 4 for i in range(count)]
            _, proofs = vc_commit(vec, MERKLE_SCHEME)
            depth = max(1, math.ceil(math.log2(count))) if count > 1 else 1
            assert proofs[0].metered_size_bits == KAPPA_BITS * depth

    def test_constant_scheme_same_validity_smaller_meter(self):
        rng = random.Random(7)
        vec = make_vector(rng)
        c, proofs = vc_commit(vec, CONSTANT_SCHEME)
        assert c.scheme_id == CONSTANT_SCHEME
        for i, (element, proof) in enumerate(zip(vec, proofs), 1):
            assert proof.metered_size_bits == KAPPA_BITS
            assert vc_verify(c, proof, element, i)
        tampered = bytearray(vec[0])
        tampered[0] ^= 0xFF
        assert not vc_verify(c, proofs[0], bytes(tampered), 1)

    def test_schemes_do_not_cross_verify(self):
        vec = make_vector(random.Random(8))
        c_m, proofs_m = vc_commit(vec, MERKLE_SCHEME)
        c_c, _ = vc_commit(vec, CONSTANT_SCHEME)
        assert not vc_verify(c_c, proofs_m[0], vec[0], 1)


class TestThresholdSignatures:
    def setup_method(self):
        self.keyring = Keyring.generate(n=8, t=2, master_seed=99)
        vec = make_vector(random.Random(9))
        self.c, _ = vc_commit(vec)
        self.c_other, _ = vc_commit(make_vector(random.Random(10)))

    def test_tau_value(self):
        assert self.keyring.tau == (8 + 2) // 2 + 1 == 6

    def test_share_roundtrip(self):
        share = ts_sign_share(3, self.c, self.keyring)
        assert ts_verify_share(self.c, share, 3, self.keyring)

    def test_share_wrong_signer_rejected(self):
        share = ts_sign_share(3, self.c, self.keyring)
        for wrong in range(1, 9):
            if wrong != 3:
                assert not ts_verify_share(self.c, share, wrong, self.keyring)

    def test_share_wrong_commitment_rejected(self):
        share = ts_sign_share(3, self.c, self.keyring)
        assert not ts_verify_share(self.c_other, share, 3, self.keyring)

    def test_share_determinism_and_metering(self):
        one = ts_sign_share(3, self.c, self.keyring)
        two = ts_sign_share(3, self.c, self.keyring)
        assert one == two
        assert one.metered_size_bits == KAPPA_BITS + id_bits(8)

    def test_unknown_signer(self):
        with pytest.raises(UnknownSignerError):
            ts_sign_share(9, self.c, self.keyring)

    def test_combine_exactly_tau(self):
        shares = [ts_sign_share(i, self.c, self.keyring) for i in range(1, 7)]
        sigma = ts_combine(shares, self.keyring)
        assert ts_verify(self.c, sigma, self.keyring)
        assert sigma.metered_size_bits == KAPPA_BITS

    def test_combine_below_threshold(self):
        shares = [ts_sign_share(i, self.c, self.keyring) for i in range(1, 6)]
        with pytest.raises(BelowThresholdError):
            ts_combine(shares, self.keyring)

    def test_combine_duplicate_signer_not_counted(self):
        shares = [ts_sign_share(i, self.c, self.keyring) for i in range(1, 6)]
        shares.append(ts_sign_share(5, self.c, self.keyring))  # 6 shares, 5 signers
        with pytest.raises(BelowThresholdError):
            ts_combine(shares, self.keyring)

    def test_combine_mixed_commitments(self):
        shares = [ts_sign_share(i, self.c, self.keyring) for i in range(1, 6)]
        shares.append(ts_sign_share(6, self.c_other, self.keyring))
        with pytest.raises(MixedCommitmentsError):
            ts_combine(shares, self.keyring)

    def test_combine_invalid_share_present(self):
        shares = [ts_sign_share(i, self.c, self.keyring) for i in range(1, 6)]
        forged = SignatureShare(
            signer=6,
            commitment=self.c,
            share=b"\x00" * 32,
            metered_size_bits=KAPPA_BITS + id_bits(8),
        )
        with pytest.raises(InvalidSharePresentError):
            ts_combine(shares + [forged], self.keyring)

    def test_verify_cross_commitment(self):
        shares = [ts_sign_share(i, self.c, self.keyring) for i in range(1, 7)]
        sigma = ts_combine(shares, self.keyring)
        assert not ts_verify(self.c_other, sigma, self.keyring)

    def test_handbuilt_sigma_with_invalid_share_rejected(self):
        shares = [ts_sign_share(i, self.c, self.keyring) for i in range(1, 6)]
        forged = SignatureShare(
            signer=6,
            commitment=self.c,
            share=b"\xff" * 32,
            metered_size_bits=KAPPA_BITS + id_bits(8),
        )
        sigma = ThresholdSignature(commitment=self.c, evidence=tuple(shares) + (forged,))
        assert not ts_verify(self.c, sigma, self.keyring)

    def test_signer_handle_signs_own_id_only(self):
        handle = Signer(self.keyring, 4)
        share = handle.sign_share(self.c)
        assert share.signer == 4
        assert ts_verify_share(self.c, share, 4, self.keyring)

    def test_forged_share_bytes_never_verify(self):
        rng = random.Random(11)
        for _ in range(1000):
            fake = SignatureShare(
                signer=rng.randint(1, 8),
                commitment=self.c,
                share=rng.randbytes(32),
                metered_size_bits=KAPPA_BITS + id_bits(8),
            )
            assert not ts_verify_share(self.c, fake, fake.signer, self.keyring)
