import random

from scipy import stats

from repuchain.core_types import SimSignature
from repuchain.crypto_sim import (
    KeyRegistry,
    VrfOutput,
    keypair_from_secret,
    sign,
    substream,
    vrf_eval,
)


def test_sign_deterministic(registry):
    kp = registry.issue(1)
    msg = b"hello"
    assert sign(kp, msg) == sign(kp, msg)


def test_sign_verify_roundtrip(registry):
    kp = registry.issue(1)
    msg = b"payload"
    assert registry.verify(kp.public, msg, sign(kp, msg))


def test_verify_rejects_other_messages(registry):
    kp = registry.issue(1)
    rng = random.Random(3)
    for _ in range(500):
        m1 = rng.randbytes(24)
        m2 = rng.randbytes(24)
        if m1 == m2:
            continue
        assert not registry.verify(kp.public, m2, sign(kp, m1))


def test_verify_rejects_unknown_public(registry):
    stranger = keypair_from_secret(99, b"\x55" * 32)
    assert not registry.verify(stranger.public, b"m", sign(stranger, b"m"))


def test_unforgeability_100k_random_attempts(registry):
    kp = registry.issue(1)
    msg = b"forge me"
    rng = random.Random(1234)
    accepted = 0
    for _ in range(100_000):
        if registry.verify(kp.public, msg, SimSignature(tag=rng.randbytes(32))):
            accepted += 1
    assert accepted == 0


def test_vrf_deterministic_and_verifies(registry):
    kp = registry.issue(2)
    out1 = vrf_eval(kp, b"input")
    out2 = vrf_eval(kp, b"input")
    assert out1 == out2
    assert registry.vrf_verify(kp.public, b"input", out1)


def test_vrf_tamper_detected(registry):
    kp = registry.issue(2)
    rng = random.Random(9)
    for _ in range(1000):
        inp = rng.randbytes(16)
        out = vrf_eval(kp, inp)
        value = bytearray(out.value)
        value[rng.randrange(32)] ^= 1 << rng.randrange(8)
        assert not registry.vrf_verify(kp.public, inp, VrfOutput(bytes(value), out.proof))
        proof = bytearray(out.proof)
        proof[rng.randrange(32)] ^= 1 << rng.randrange(8)
        assert not registry.vrf_verify(kp.public, inp, VrfOutput(out.value, bytes(proof)))


def test_vrf_low_bits_uniform_chi_square(registry):
    # low 32 bits of the VRF value over 10^4 distinct inputs, 64 buckets
    kp = registry.issue(3)
    buckets = [0] * 64
    n = 10_000
    for i in range(n):
        value = vrf_eval(kp, i.to_bytes(8, "big")).value
        low32 = int.from_bytes(value[-4:], "big")
        buckets[low32 * 64 >> 32] += 1
    _, p = stats.chisquare(buckets)
    assert p > 0.001


def test_frozen_vectors(crypto_vectors):
    for entry in crypto_vectors["keypairs"]:
        kp = keypair_from_secret(entry["node_id"], bytes.fromhex(entry["secret"]))
        assert kp.public.hex() == entry["public"]
    for entry in crypto_vectors["sign"]:
        kp = keypair_from_secret(0, bytes.fromhex(entry["secret"]))
        tag = sign(kp, bytes.fromhex(entry["msg"])).tag
        assert tag.hex() == entry["tag"]
    for entry in crypto_vectors["vrf"]:
        kp = keypair_from_secret(0, bytes.fromhex(entry["secret"]))
        out = vrf_eval(kp, bytes.fromhex(entry["input"]))
        assert out.value.hex() == entry["value"]
        assert out.proof.hex() == entry["proof"]


def test_registry_issues_distinct_deterministic_keys():
    r1 = KeyRegistry(root_seed=5)
    r2 = KeyRegistry(root_seed=5)
    kps1 = [r1.issue(i) for i in range(10)]
    kps2 = [r2.issue(i) for i in range(10)]
    assert kps1 == kps2
    assert len({kp.secret for kp in kps1}) == 10


def test_substreams_independent_and_reproducible():
    a1 = substream(1, "provider", 0)
    a2 = substream(1, "provider", 0)
    b = substream(1, "provider", 1)
    seq_a1 = [a1.random() for _ in range(5)]
    seq_a2 = [a2.random() for _ in range(5)]
    seq_b = [b.random() for _ in range(5)]
    assert seq_a1 == seq_a2
    assert seq_a1 != seq_b
