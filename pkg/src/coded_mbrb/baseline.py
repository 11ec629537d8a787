"""Uncoded signed echo broadcast, used only as a communication-cost comparator.

The sender signs the payload hash and broadcasts the full payload with its
share; every node, on its first valid receipt, adds its own share and
re-broadcasts payload plus all shares seen so far. A node delivers once it
holds strictly more than (n+t)/2 distinct shares over one payload hash. Each
node broadcasts at most twice, so a re-broadcasting node pays at least
(n-1) * |m| bytes: the linear-in-n per-node cost the coded protocol removes.

No delivery guarantees are claimed under message drops; this exists so
experiments can meter both protocols on the same grid.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .crypto import Commitment, Keyring, SignatureShare, ts_sign_share, ts_verify_share

ECHO_SCHEME = "hash-echo"


@dataclass(frozen=True)
class EchoMessage:
    """Full payload plus every signature share the emitter had seen."""

    payload: bytes
    shares: tuple[SignatureShare, ...]


def payload_commitment(payload: bytes) -> Commitment:
    return Commitment(digest=hashlib.sha256(payload).digest(), scheme_id=ECHO_SCHEME)


class BaselineNodeState:
    """Echo-broadcast node driven by the same engine contract as the protocol."""

    def __init__(self, node_id: int, sender_id: int, n: int, keyring: Keyring):
        self.node_id = node_id
        self.sender_id = sender_id
        self.n = n
        self.keyring = keyring
        self.accepted: Commitment | None = None
        self.payload: bytes | None = None
        self.shares: dict[int, SignatureShare] = {}
        self.rebroadcast_done = False
        self.broadcast_started = False
        self.delivered: bytes | None = None
        self.delivered_at: int | None = None
        self.batches_emitted = 0

    @property
    def is_sender(self) -> bool:
        return self.node_id == self.sender_id

    def baseline_broadcast(self, m: bytes) -> list[tuple]:
        if not self.is_sender or self.broadcast_started:
            raise RuntimeError("baseline broadcast is single-shot, sender only")
        self.broadcast_started = True
        c = payload_commitment(m)
        sig_s = ts_sign_share(self.node_id, c, self.keyring)
        self.accepted = c
        self.payload = m
        self.shares[self.node_id] = sig_s
        self.batches_emitted += 1
        return [tuple([EchoMessage(payload=m, shares=(sig_s,))] * self.n)]

    def _valid(self, msg: EchoMessage, c: Commitment) -> bool:
        if not msg.shares:
            return False
        if not any(s.signer == self.sender_id for s in msg.shares):
            return False
        return all(ts_verify_share(c, s, s.signer, self.keyring) for s in msg.shares)

    def _maybe_deliver(self, at_event: int) -> bytes | None:
        if self.delivered is None and 2 * len(self.shares) > self.keyring.n + self.keyring.t:
            self.delivered = self.payload
            self.delivered_at = at_event
            return self.payload
        return None

    def handle_event(self, msg, from_id: int, at_event: int) -> tuple[list[tuple], bytes | None]:
        if not isinstance(msg, EchoMessage) or not msg.payload:
            return [], None
        c = payload_commitment(msg.payload)
        # Echo only the first payload seen; later payload hashes are ignored.
        if self.accepted is not None and self.accepted != c:
            return [], None
        if not self._valid(msg, c):
            return [], None
        if self.accepted is None:
            self.accepted = c
            self.payload = msg.payload
        for share in msg.shares:
            self.shares.setdefault(share.signer, share)
        batches: list[tuple] = []
        if not self.rebroadcast_done:
            self.rebroadcast_done = True
            own = ts_sign_share(self.node_id, c, self.keyring)
            self.shares.setdefault(self.node_id, own)
            carried = tuple(self.shares[i] for i in sorted(self.shares))
            self.batches_emitted += 1
            batches.append(tuple([EchoMessage(payload=msg.payload, shares=carried)] * self.n))
        return batches, self._maybe_deliver(at_event)
