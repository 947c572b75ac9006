import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecake.crypto import (
    SIZE,
    FuzzyPair,
    Rng,
    UsageError,
    check_freshness,
    encode,
    fresh_nonce,
    gen,
    h,
    hash_backend,
    pad_identity,
    rep,
    xor_mask,
)

block = st.binary(min_size=SIZE, max_size=SIZE)

# sha256 of b"\x00\x00\x00\x03abc", computed with `openssl dgst -sha256`
GOLDEN_ABC = "d04b72a650ce0f8ce4963330a53ee2832733d2baeffff3c1d8e256cca096d120"


class TestHash:
    def test_golden_value(self):
        assert h([b"abc"]).hex() == GOLDEN_ABC

    def test_deterministic(self):
        assert h([b"x"]) == h([b"x"])
        assert len(h([b"x"])) == SIZE

    def test_length_prefix_separates_fields(self):
        assert h([b"AB", b"C"]) != h([b"A", b"BC"])
        assert h([b"AB", b"C"]) != h([b"ABC"])

    def test_timestamps_encode_as_u64(self):
        assert encode([5]) == b"\x00\x00\x00\x08" + (5).to_bytes(8, "big")

    @pytest.mark.parametrize("bad", [[], b"abc", ()])
    def test_empty_or_unlisted_parts(self, bad):
        with pytest.raises(UsageError):
            h(bad)

    def test_rejects_non_bytes_part(self):
        with pytest.raises(UsageError):
            h(["abc"])

    def test_backend_swap(self):
        toy = lambda data: hashlib.blake2s(data).digest()
        with hash_backend(toy):
            assert h([b"abc"]) == hashlib.blake2s(encode([b"abc"])).digest()
        assert h([b"abc"]).hex() == GOLDEN_ABC

    def test_backend_wrong_width(self):
        with hash_backend(lambda d: b"short"):
            with pytest.raises(UsageError):
                h([b"abc"])

    @settings(max_examples=200)
    @given(a=st.binary(max_size=40), b=st.binary(max_size=40), cut=st.integers(0, 80))
    def test_encoding_injective(self, a, b, cut):
        joined = a + b
        cut = min(cut, len(joined))
        a2, b2 = joined[:cut], joined[cut:]
        if (a, b) != (a2, b2):
            assert h([a, b]) != h([a2, b2])

    def test_pure_over_many_evaluations(self):
        rng = Rng(3)
        inputs = [rng.bytes(rng.randrange(1, 64)) for _ in range(10_000)]
        first = [h([x]) for x in inputs]
        assert first == [h([x]) for x in inputs]


class TestXor:
    @given(a=block)
    def test_self_inverse(self, a):
        assert xor_mask(a, a) == bytes(SIZE)

    @given(a=block)
    def test_identity(self, a):
        assert xor_mask(a, bytes(SIZE)) == a

    @settings(max_examples=500)
    @given(a=block, b=block)
    def test_involution(self, a, b):
        assert xor_mask(xor_mask(a, b), b) == a

    @pytest.mark.parametrize("a,b", [(b"\x00" * 31, b"\x00" * 32), (b"\x00" * 32, b"")])
    def test_length_mismatch(self, a, b):
        with pytest.raises(UsageError):
            xor_mask(a, b)


class TestFuzzyExtractor:
    bio = b"fingerprint-template-0001"

    def test_round_trip(self):
        fp = gen(self.bio, Rng(1))
        assert rep(self.bio, fp.tau) == fp.sigma
        assert fp.sigma == h([self.bio, fp.tau])

    def test_seeds_give_different_helpers(self):
        assert gen(self.bio, Rng(1)).tau != gen(self.bio, Rng(2)).tau

    def test_same_seed_same_pair(self):
        assert gen(self.bio, Rng(9)) == gen(self.bio, Rng(9))
        assert isinstance(gen(self.bio, Rng(9)), FuzzyPair)

    @given(bit=st.integers(0, 8 * 25 - 1))
    def test_flipped_bit_changes_sigma(self, bit):
        fp = gen(self.bio, Rng(1))
        noisy = bytearray(self.bio)
        noisy[bit // 8] ^= 1 << (bit % 8)
        assert rep(bytes(noisy), fp.tau) != fp.sigma

    def test_rep_deterministic(self):
        tau = Rng(4).bytes()
        assert rep(self.bio, tau) == rep(self.bio, tau)

    def test_empty_bio(self):
        with pytest.raises(UsageError):
            gen(b"", Rng(0))
        with pytest.raises(UsageError):
            rep(b"", bytes(32))

    def test_bad_tau(self):
        with pytest.raises(UsageError):
            rep(self.bio, b"short")


class TestNonces:
    def test_reproducible(self):
        a, b = Rng(11), Rng(11)
        assert [fresh_nonce(a) for _ in range(5)] == [fresh_nonce(b) for _ in range(5)]

    def test_consecutive_distinct(self):
        rng = Rng(1)
        draws = [fresh_nonce(rng) for _ in range(10_000)]
        assert len(set(draws)) == len(draws)
        assert all(len(d) == SIZE for d in draws)

    def test_seeds_differ(self):
        assert fresh_nonce(Rng(1)) != fresh_nonce(Rng(2))


class TestFreshness:
    @pytest.mark.parametrize("ts,now,expected", [
        (1000, 1500, True),
        (0, 5000, False),
        (1000, 3000, True),    # boundary is inclusive
        (1000, 3001, False),
        (3000, 1000, True),
    ])
    def test_window(self, ts, now, expected):
        assert check_freshness(ts, now, 2000) is expected

    @given(ts=st.integers(0, 10**12), now=st.integers(0, 10**12), d=st.integers(1, 10**6))
    def test_symmetric(self, ts, now, d):
        assert check_freshness(ts, now, d) == check_freshness(now, ts, d)

    def test_nonpositive_delta(self):
        with pytest.raises(UsageError):
            check_freshness(0, 0, 0)


def test_pad_identity():
    assert pad_identity("alice") == b"alice" + bytes(27)
    with pytest.raises(UsageError):
        pad_identity("x" * 33)
    with pytest.raises(UsageError):
        pad_identity("")
