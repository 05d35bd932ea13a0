"""Signature scheme and certificate chain behavior."""

import hashlib
import random

import pytest

from idplane import crypto


def seeded_keys(label: str) -> crypto.KeyPair:
    return crypto.KeyPair.from_seed(hashlib.sha256(label.encode()).digest())


def flip_bit(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


class TestSignatures:
    def test_roundtrip_1000_random_pairs(self):
        rng = random.Random(1234)
        for i in range(1000):
            keys = crypto.KeyPair.from_seed(rng.randbytes(32))
            message = rng.randbytes(rng.randint(1, 64))
            sig = keys.sign(message)
            assert crypto.verify(keys.public_key, message, sig), f"pair {i}"

    def test_random_single_bit_mutations_fail(self):
        rng = random.Random(99)
        for i in range(1000):
            keys = crypto.KeyPair.from_seed(rng.randbytes(32))
            message = rng.randbytes(32)
            sig = keys.sign(message)
            target = rng.choice(["message", "signature", "key"])
            if target == "message":
                mutated = flip_bit(message, rng.randrange(len(message) * 8))
                assert not crypto.verify(keys.public_key, mutated, sig)
            elif target == "signature":
                mutated_sig = crypto.Signature(
                    flip_bit(sig.bytes_, rng.randrange(len(sig.bytes_) * 8))
                )
                assert not crypto.verify(keys.public_key, message, mutated_sig)
            else:
                mutated_key = flip_bit(keys.public_key, rng.randrange(256))
                assert not crypto.verify(mutated_key, message, sig)

    def test_exhaustive_bit_sweep_on_sample_pairs(self):
        rng = random.Random(7)
        for _ in range(3):
            keys = crypto.KeyPair.from_seed(rng.randbytes(32))
            message = rng.randbytes(16)
            sig = keys.sign(message)
            for bit in range(len(message) * 8):
                assert not crypto.verify(keys.public_key, flip_bit(message, bit), sig)
            for bit in range(len(sig.bytes_) * 8):
                assert not crypto.verify(
                    keys.public_key, message, crypto.Signature(flip_bit(sig.bytes_, bit))
                )
            for bit in range(len(keys.public_key) * 8):
                assert not crypto.verify(flip_bit(keys.public_key, bit), message, sig)

    def test_wrong_key_fails(self):
        a, b = seeded_keys("a"), seeded_keys("b")
        sig = a.sign(b"msg")
        assert crypto.verify(a.public_key, b"msg", sig)
        assert not crypto.verify(b.public_key, b"msg", sig)

    def test_deterministic_keygen_and_signatures(self):
        k1 = seeded_keys("same")
        k2 = seeded_keys("same")
        assert k1.public_key == k2.public_key
        assert k1.sign(b"x").bytes_ == k2.sign(b"x").bytes_

    def test_wrong_scheme_id_rejected(self):
        keys = seeded_keys("s")
        sig = keys.sign(b"m")
        bad = crypto.Signature(sig.bytes_, scheme_id="other")
        assert not crypto.verify(keys.public_key, b"m", bad)


def make_chain(depth3: bool = True, now: int = 50, lifetime: int = 100):
    root_keys = seeded_keys("root")
    inter_keys = seeded_keys("inter")
    leaf_keys = seeded_keys("leaf")
    root_spec = crypto.CertSpec("net.org.root", root_keys.public_key, 0, lifetime * 10)
    inter_spec = crypto.CertSpec("net.org.ica", inter_keys.public_key, 0, lifetime * 5)
    leaf_spec = crypto.CertSpec("net.org.peer0", leaf_keys.public_key, 0, lifetime)
    if depth3:
        chain = crypto.issue_certificate_chain(
            root_keys, root_spec, intermediates=[(inter_spec, inter_keys)], leaf=leaf_spec
        )
    else:
        chain = crypto.issue_certificate_chain(root_keys, root_spec)
    return chain, root_keys, leaf_keys


class TestCertificateChains:
    def test_root_only_chain_verifies(self):
        chain, _, _ = make_chain(depth3=False)
        assert len(chain) == 1
        assert crypto.verify_certificate_chain(chain, chain[0], now=10)

    def test_depth3_chain_verifies_inside_validity(self):
        chain, _, _ = make_chain()
        assert len(chain) == 3
        for now in (0, 50, 99):
            assert crypto.verify_certificate_chain(chain, chain[0], now=now)

    def test_truncating_root_gives_untrusted_root(self):
        chain, _, _ = make_chain()
        with pytest.raises(crypto.UntrustedRoot):
            crypto.verify_certificate_chain(chain[1:], chain[0], now=50)

    def test_different_trusted_root_rejected(self):
        chain, _, _ = make_chain()
        other_keys = seeded_keys("other-root")
        other = crypto.issue_certificate_chain(
            other_keys, crypto.CertSpec("other.root", other_keys.public_key, 0, 1000)
        )
        with pytest.raises(crypto.UntrustedRoot):
            crypto.verify_certificate_chain(chain, other[0], now=50)

    def test_middle_cert_resigned_with_wrong_key_breaks_link_1(self):
        chain, _, _ = make_chain()
        rogue = seeded_keys("rogue")
        tampered_middle = crypto.Certificate(
            subject_name=chain[1].subject_name,
            subject_public_key=chain[1].subject_public_key,
            issuer_name=chain[1].issuer_name,
            valid_from=chain[1].valid_from,
            valid_to=chain[1].valid_to,
            issuer_signature=rogue.sign(chain[1].signing_bytes()),
        )
        tampered = (chain[0], tampered_middle, chain[2])
        with pytest.raises(crypto.BrokenLink) as err:
            crypto.verify_certificate_chain(tampered, chain[0], now=50)
        assert err.value.index == 1

    def test_expired_leaf_names_its_index(self):
        chain, _, _ = make_chain(lifetime=100)
        with pytest.raises(crypto.Expired) as err:
            crypto.verify_certificate_chain(chain, chain[0], now=100)
        assert err.value.index == 2

    def test_time_before_validity_is_expired(self):
        root_keys = seeded_keys("root")
        spec = crypto.CertSpec("r", root_keys.public_key, 10, 20)
        chain = crypto.issue_certificate_chain(root_keys, spec)
        with pytest.raises(crypto.Expired):
            crypto.verify_certificate_chain(chain, chain[0], now=5)
        assert crypto.verify_certificate_chain(chain, chain[0], now=10)

    def test_empty_validity_window_rejected_at_issuance(self):
        keys = seeded_keys("k")
        with pytest.raises(crypto.CryptoError):
            crypto.issue_certificate_chain(
                keys, crypto.CertSpec("r", keys.public_key, 5, 5)
            )

    def test_missing_root_spec_rejected(self):
        with pytest.raises(crypto.EmptySpec):
            crypto.issue_certificate_chain(seeded_keys("k"), None)

    def test_chain_serialization_roundtrip(self):
        chain, _, _ = make_chain()
        data = crypto.chain_to_bytes(chain)
        assert crypto.chain_from_bytes(data) == chain
