"""Domain objects shared by every layer: transactions, labels, blocks, Merkle roots.

Canonical serialization rule (used for every digest and signature in the
system): fields are concatenated in declared order, each prefixed with its
byte length as an 8-byte big-endian integer; integer payloads are themselves
8-byte big-endian; lists are an 8-byte big-endian element count followed by
the length-prefixed elements. The hash everywhere is SHA-256 (256-bit
digests), frozen so the published test vectors stay stable.

The ``ground_truth_valid`` bit on a transaction is a simulation-only oracle
field. By convention it is read exclusively through the ``validate_*``
helpers in :mod:`repuchain.nodes`; it is not part of the canonical wire
bytes, so digests and signatures never depend on it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

DIGEST_SIZE = 32
ZERO_DIGEST = b"\x00" * DIGEST_SIZE

# One-byte domain tags for the per-round commitment: invalid entries then
# unchecked entries, each tagged so the two lists cannot be confused.
TAG_INVALID = b"\x01"
TAG_UNCHECKED = b"\x02"
TAG_TRANSFER = b"\x03"


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def enc_int(value: int) -> bytes:
    """8-byte big-endian encoding of a nonnegative integer."""
    return value.to_bytes(8, "big")


def enc_field(payload: bytes) -> bytes:
    """Length-prefix a field payload."""
    return len(payload).to_bytes(8, "big") + payload


def enc_list(items: Sequence[bytes]) -> bytes:
    """Element count followed by length-prefixed items."""
    return enc_int(len(items)) + b"".join(enc_field(i) for i in items)


@dataclass(frozen=True, slots=True)
class SimSignature:
    """Keyed-hash tag standing in for a digital signature."""

    tag: bytes


@dataclass(frozen=True, slots=True)
class Transaction:
    """Provider-signed payload; (provider_id, seq, timestamp) is its identity.

    Resubmitting an unchecked transaction reuses the identical value, so the
    identity triple is stable across retries.
    """

    provider_id: int
    seq: int
    timestamp: int
    ground_truth_valid: bool
    signature: SimSignature

    @property
    def txid(self) -> tuple[int, int, int]:
        return (self.provider_id, self.seq, self.timestamp)


# Cached: the same transaction's bytes are rebuilt at every signature check
# along the provider -> collector -> governor path.
@lru_cache(maxsize=1 << 16)
def tx_signing_bytes(provider_id: int, seq: int, timestamp: int) -> bytes:
    """Bytes the provider signs: identity triple only (oracle bit excluded)."""
    return (
        enc_field(enc_int(provider_id))
        + enc_field(enc_int(seq))
        + enc_field(enc_int(timestamp))
    )


def tx_wire_bytes(tx: Transaction) -> bytes:
    """Canonical wire form: signed triple plus the provider signature tag."""
    return tx_signing_bytes(tx.provider_id, tx.seq, tx.timestamp) + enc_field(
        tx.signature.tag
    )


@dataclass(frozen=True, slots=True)
class LabeledTransaction:
    """A transaction plus one collector's +1/-1 label and signature."""

    tx: Transaction
    label: int
    collector_id: int
    signature: SimSignature

    def __post_init__(self) -> None:
        if self.label not in (+1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.label}")


def label_signing_bytes(tx: Transaction, label: int) -> bytes:
    """Bytes the collector signs: the wire transaction and its label."""
    return enc_field(tx_wire_bytes(tx)) + enc_field(enc_int(1 if label == 1 else 0))


@dataclass(frozen=True, slots=True)
class Block:
    """Serial-numbered block; prev_hash chains it to the previous block."""

    serial: int
    leader_id: int
    tx_list: tuple[Transaction, ...]
    mt_root: bytes
    prev_hash: bytes


def block_bytes(block: Block) -> bytes:
    return (
        enc_field(enc_int(block.serial))
        + enc_field(enc_int(block.leader_id))
        + enc_field(enc_list([tx_wire_bytes(t) for t in block.tx_list]))
        + enc_field(block.mt_root)
        + enc_field(block.prev_hash)
    )


def hash_block(block: Block) -> bytes:
    return sha256(block_bytes(block))


def make_genesis() -> Block:
    """Fixed bootstrap block: serial 0, empty lists, all-zero prev hash."""
    return Block(serial=0, leader_id=0, tx_list=(), mt_root=ZERO_DIGEST, prev_hash=ZERO_DIGEST)


@dataclass(frozen=True, slots=True)
class RoundLists:
    """One round's screening partition; the three lists are disjoint."""

    tx_list: tuple[Transaction, ...]
    invalid_list: tuple[Transaction, ...]
    unchecked_list: tuple[Transaction, ...]


def merkle_root(items: Sequence[bytes]) -> bytes:
    """Binary Merkle root; leaves are item hashes in order.

    An odd node at any level is promoted unchanged (no duplication). The
    empty list maps to the all-zero digest; a single item's root is its leaf
    hash.
    """
    if not items:
        return ZERO_DIGEST
    level = [sha256(item) for item in items]
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(sha256(level[i] + level[i + 1]))
        if len(level) % 2 == 1:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def commitment_items(
    invalid_list: Sequence[Transaction], unchecked_list: Sequence[Transaction]
) -> list[bytes]:
    """Tagged leaves committing (invalid_list, unchecked_list) jointly."""
    return [TAG_INVALID + tx_wire_bytes(t) for t in invalid_list] + [
        TAG_UNCHECKED + tx_wire_bytes(t) for t in unchecked_list
    ]


def lists_commitment_root(
    invalid_list: Sequence[Transaction], unchecked_list: Sequence[Transaction]
) -> bytes:
    return merkle_root(commitment_items(invalid_list, unchecked_list))
