"""Canonical wire accounting shared by the simulator, metrics, and replay log.

One message encodes as: 1-byte kind tag, the commitment digest, the fragment
tuples behind 1-byte presence flags, then the signature payload (shares or
one threshold signature). Sizes are reported in bits: 24 bits of framing
(kind + two presence flags) plus the metered sizes of the constituents.

Digests below feed the event log ("digest16" column) and the channel
integrity check; they cover every field that reaches the wire.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .protocol import ProtocolMessage

FRAMING_BITS = 24


@dataclass(frozen=True)
class RawMessage:
    """Arbitrary bytes a Byzantine node pushes onto a channel."""

    payload: bytes


def message_size_bits(msg, n: int) -> int:
    """Metered wire size of one message under the canonical encoding."""
    if msg is None:
        return 0
    if isinstance(msg, RawMessage):
        return 8 + 8 * len(msg.payload)
    if isinstance(msg, ProtocolMessage):
        bits = FRAMING_BITS + msg.commitment.metered_size_bits
        for ft in (msg.frag_a, msg.frag_b):
            if ft is not None:
                bits += 8 * len(ft.fragment.data) + ft.proof.metered_size_bits
        if msg.shares is not None:
            bits += sum(s.metered_size_bits for s in msg.shares)
        if msg.threshold_sig is not None:
            bits += msg.threshold_sig.metered_size_bits
        return bits
    # Baseline echo: full payload plus the carried shares.
    bits = FRAMING_BITS + 8 * len(msg.payload)
    bits += sum(s.metered_size_bits for s in msg.shares)
    return bits


def message_digest16(msg) -> str:
    """16-hex-char fingerprint of the canonical encoding."""
    h = hashlib.sha256()
    if msg is None:
        h.update(b"\xff")
        return h.hexdigest()[:16]
    if isinstance(msg, RawMessage):
        h.update(b"R")
        h.update(msg.payload)
        return h.hexdigest()[:16]
    if isinstance(msg, ProtocolMessage):
        h.update(msg.kind.value.encode())
        h.update(msg.commitment.scheme_id.encode())
        h.update(msg.commitment.digest)
        for ft in (msg.frag_a, msg.frag_b):
            if ft is None:
                h.update(b"\x00")
            else:
                h.update(b"\x01")
                h.update(ft.index.to_bytes(2, "big"))
                h.update(ft.fragment.data)
                h.update(ft.proof.path)
        if msg.shares is not None:
            h.update(len(msg.shares).to_bytes(1, "big"))
            for s in msg.shares:
                h.update(s.signer.to_bytes(2, "big"))
                h.update(s.share)
        if msg.threshold_sig is not None:
            sigma = msg.threshold_sig
            h.update(b"T")
            h.update(sigma.commitment.digest)
            for s in sigma.evidence:
                h.update(s.signer.to_bytes(2, "big"))
                h.update(s.share)
        return h.hexdigest()[:16]
    h.update(b"E")
    h.update(msg.payload)
    for s in msg.shares:
        h.update(s.signer.to_bytes(2, "big"))
        h.update(s.share)
    return h.hexdigest()[:16]


def payload_digest16(payload: bytes) -> str:
    """Fingerprint for application payloads (delivery log lines)."""
    return hashlib.sha256(payload).hexdigest()[:16]
