"""Three-phase coded broadcast state machine, as a pure event-driven engine.

Wire messages (all carry one vector commitment):

* SEND   — sender to node j: fragment j with its proof, plus the sender's
           signature share.
* FORWARD — node to all: optionally its own fragment, plus exactly two
           shares (the sender's and its own). Spreads fragments and builds
           the signing quorum.
* BUNDLE — node to all, after a threshold signature exists and >= k
           fragments are held: the emitter's fragment, optionally the
           recipient's, plus the threshold signature. Amplifies delivery.

A node signs at most one commitment, sends at most four send-to-all batches
per instance, stores only verified material, and delivers at most once.
Handlers are deterministic: (state, event) -> (state', batches, delivery).
Structurally malformed or invalid messages are silently ignored.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from . import ecc
from .crypto import (
    Commitment,
    InclusionProof,
    Keyring,
    MERKLE_SCHEME,
    SignatureShare,
    ThresholdSignature,
    ts_combine,
    ts_sign_share,
    ts_verify,
    ts_verify_share,
    vc_commit,
    vc_verify,
)
from .ecc import CodeParams, Fragment


class ProtocolError(Exception):
    pass


class NotSenderError(ProtocolError):
    pass


class DoubleBroadcastError(ProtocolError):
    pass


class MessageKind(enum.Enum):
    SEND = "SEND"
    FORWARD = "FORWARD"
    BUNDLE = "BUNDLE"


@dataclass(frozen=True)
class FragmentTuple:
    """A fragment together with its inclusion proof (indices must agree)."""

    fragment: Fragment
    proof: InclusionProof

    def __post_init__(self):
        if self.fragment.index != self.proof.index:
            raise ProtocolError("fragment/proof index mismatch")

    @property
    def index(self) -> int:
        return self.fragment.index


@dataclass(frozen=True)
class ProtocolMessage:
    """Tagged union of the three wire messages.

    SEND:    frag_a set, frag_b None, shares = (sender's,), no threshold_sig.
    FORWARD: frag_a optional, frag_b None, shares = (sender's, forwarder's).
    BUNDLE:  frag_a set, frag_b optional, shares None, threshold_sig set.
    """

    kind: MessageKind
    commitment: Commitment
    frag_a: FragmentTuple | None = None
    frag_b: FragmentTuple | None = None
    shares: tuple[SignatureShare, ...] | None = None
    threshold_sig: ThresholdSignature | None = None


@dataclass(frozen=True)
class Delivery:
    """An application-level delivery at a logical event timestamp."""

    message: bytes
    at_event: int

    def __post_init__(self):
        if not self.message:
            raise ProtocolError("delivered message must be non-empty")


# One send-to-all batch: entry j-1 is addressed to node j (None = empty slot).
Batch = tuple


def broadcast_batch(message: ProtocolMessage, n: int) -> Batch:
    return tuple([message] * n)


def compute_frag_vec_commit(
    m: bytes, params: CodeParams, vc_scheme: str = MERKLE_SCHEME
) -> tuple[Commitment, list[FragmentTuple]]:
    """Encode m, commit to the fragment vector, zip fragments with proofs."""
    fragments = ecc.encode_split(m, params)
    commitment, proofs = vc_commit([f.data for f in fragments], vc_scheme)
    return commitment, [FragmentTuple(f, p) for f, p in zip(fragments, proofs)]


def is_valid(
    c: Commitment,
    frag_tuples,
    sigs,
    is_thresh: bool,
    *,
    keyring: Keyring,
    sender_id: int,
) -> bool:
    """Validity of received message content.

    Share mode: every share verifies for c and one of them is the designated
    sender's. Threshold mode: the aggregate verifies for c. In both modes
    every non-None fragment tuple must verify against c.
    """
    if is_thresh:
        if not ts_verify(c, sigs, keyring):
            return False
    else:
        if not sigs:
            return False
        for share in sigs:
            if not ts_verify_share(c, share, share.signer, keyring):
                return False
        if not any(share.signer == sender_id for share in sigs):
            return False
    for ft in frag_tuples:
        if ft is None:
            continue
        if not vc_verify(c, ft.proof, ft.fragment.data, ft.fragment.index):
            return False
    return True


def structurally_sound(msg, n: int, fragment_len: int) -> bool:
    """Cheap shape checks applied before any cryptographic validation."""
    if not isinstance(msg, ProtocolMessage):
        return False
    for ft in (msg.frag_a, msg.frag_b):
        if ft is None:
            continue
        if not isinstance(ft, FragmentTuple):
            return False
        if not 1 <= ft.index <= n or len(ft.fragment.data) != fragment_len:
            return False
    if msg.kind is MessageKind.SEND:
        return (
            msg.frag_a is not None
            and msg.frag_b is None
            and msg.threshold_sig is None
            and msg.shares is not None
            and len(msg.shares) == 1
        )
    if msg.kind is MessageKind.FORWARD:
        return (
            msg.frag_b is None
            and msg.threshold_sig is None
            and msg.shares is not None
            and len(msg.shares) == 2
        )
    if msg.kind is MessageKind.BUNDLE:
        return (
            msg.frag_a is not None
            and msg.shares is None
            and isinstance(msg.threshold_sig, ThresholdSignature)
        )
    return False


@dataclass
class CommitmentStore:
    """Everything a node has verified and kept for one commitment."""

    fragments: dict[int, FragmentTuple] = field(default_factory=dict)
    shares: dict[int, SignatureShare] = field(default_factory=dict)
    threshold_sig: ThresholdSignature | None = None


class NodeState:
    """Per-node protocol state; one event applied at a time."""

    def __init__(
        self,
        node_id: int,
        sender_id: int,
        params: CodeParams,
        keyring: Keyring,
        vc_scheme: str = MERKLE_SCHEME,
    ):
        self.node_id = node_id
        self.sender_id = sender_id
        self.params = params
        self.keyring = keyring
        self.vc_scheme = vc_scheme

        self.signed_commitment: Commitment | None = None
        self.stores: dict[Commitment, CommitmentStore] = {}
        self.poisoned: set[Commitment] = set()
        self.sent_forward = False
        self.sent_forward_with_fragment = False
        self.bundle_sent = False
        self.broadcast_started = False
        self.delivered: bytes | None = None
        self.delivered_at: int | None = None
        self.batches_emitted = 0

    @property
    def is_sender(self) -> bool:
        return self.node_id == self.sender_id

    # -- internals ------------------------------------------------------------

    def _store_for(self, c: Commitment) -> CommitmentStore:
        store = self.stores.get(c)
        if store is None:
            store = self.stores[c] = CommitmentStore()
        return store

    def _sign(self, c: Commitment) -> SignatureShare:
        # A correct node signs at most one commitment, ever.
        if self.signed_commitment is None:
            self.signed_commitment = c
        elif self.signed_commitment != c:
            raise AssertionError("attempted to sign a second commitment")
        share = ts_sign_share(self.node_id, c, self.keyring)
        self._store_for(c).shares[self.node_id] = share
        return share

    def _count_batch(self):
        self.batches_emitted += 1
        # Lemma-level cap: 1 SEND + 1 FORWARD + 2 BUNDLE for the sender,
        # 2 FORWARD + 2 BUNDLE otherwise.
        if self.batches_emitted > 4:
            raise AssertionError(f"node {self.node_id} exceeded 4 send-to-all batches")

    # -- operations -------------------------------------------------------

    def mbrb_broadcast(self, m: bytes) -> list[Batch]:
        """Sender only: encode, commit, sign, and emit one SEND per node."""
        if not self.is_sender:
            raise NotSenderError(f"node {self.node_id} is not the designated sender")
        if self.broadcast_started:
            raise DoubleBroadcastError("instance is single-shot")
        self.broadcast_started = True
        commitment, tuples = compute_frag_vec_commit(m, self.params, self.vc_scheme)
        sig_s = self._sign(commitment)
        batch = tuple(
            ProtocolMessage(
                kind=MessageKind.SEND,
                commitment=commitment,
                frag_a=tuples[j],
                shares=(sig_s,),
            )
            for j in range(self.params.n)
        )
        self._count_batch()
        return [batch]

    def handle_send(self, msg: ProtocolMessage, from_id: int) -> list[Batch]:
        # SEND is only meaningful from the designated sender, addressed to us.
        if from_id != self.sender_id or msg.frag_a.index != self.node_id:
            return []
        c = msg.commitment
        if not is_valid(
            c, (msg.frag_a,), msg.shares, False,
            keyring=self.keyring, sender_id=self.sender_id,
        ):
            return []
        if self.sent_forward_with_fragment:
            return []
        if self.signed_commitment is not None and self.signed_commitment != c:
            return []
        sender_share = next(s for s in msg.shares if s.signer == self.sender_id)
        store = self._store_for(c)
        store.fragments[msg.frag_a.index] = msg.frag_a
        store.shares[self.sender_id] = sender_share
        sig_i = self._sign(c)
        forward = ProtocolMessage(
            kind=MessageKind.FORWARD,
            commitment=c,
            frag_a=msg.frag_a,
            shares=(sender_share, sig_i),
        )
        self.sent_forward = True
        self.sent_forward_with_fragment = True
        self._count_batch()
        return [broadcast_batch(forward, self.params.n)]

    def handle_forward(self, msg: ProtocolMessage, from_id: int) -> list[Batch]:
        c = msg.commitment
        if not is_valid(
            c, (msg.frag_a,), msg.shares, False,
            keyring=self.keyring, sender_id=self.sender_id,
        ):
            return []
        if self.signed_commitment is not None and self.signed_commitment != c:
            return []
        store = self._store_for(c)
        for share in msg.shares:
            store.shares.setdefault(share.signer, share)
        if msg.frag_a is not None:
            store.fragments.setdefault(msg.frag_a.index, msg.frag_a)
        if self.sent_forward:
            return []
        sender_share = next(s for s in msg.shares if s.signer == self.sender_id)
        sig_i = self._sign(c)
        forward = ProtocolMessage(
            kind=MessageKind.FORWARD,
            commitment=c,
            frag_a=None,
            shares=(sender_share, sig_i),
        )
        self.sent_forward = True
        self._count_batch()
        return [broadcast_batch(forward, self.params.n)]

    def handle_bundle(self, msg: ProtocolMessage, from_id: int) -> list[Batch]:
        c = msg.commitment
        if not is_valid(
            c, (msg.frag_a, msg.frag_b), msg.threshold_sig, True,
            keyring=self.keyring, sender_id=self.sender_id,
        ):
            return []
        store = self._store_for(c)
        store.fragments.setdefault(msg.frag_a.index, msg.frag_a)
        if store.threshold_sig is None:
            store.threshold_sig = msg.threshold_sig
        if msg.frag_b is None:
            return []
        store.fragments.setdefault(msg.frag_b.index, msg.frag_b)
        if self.bundle_sent or msg.frag_b.index != self.node_id:
            return []
        bundle = ProtocolMessage(
            kind=MessageKind.BUNDLE,
            commitment=c,
            frag_a=msg.frag_b,
            frag_b=None,
            threshold_sig=msg.threshold_sig,
        )
        self.bundle_sent = True
        self._count_batch()
        return [broadcast_batch(bundle, self.params.n)]

    def get_thresh_sig(self, c: Commitment) -> ThresholdSignature | None:
        """Stored aggregate, or a fresh combine once strictly more than
        (n+t)/2 distinct shares are held; None below quorum."""
        store = self.stores.get(c)
        if store is None:
            return None
        if store.threshold_sig is not None:
            return store.threshold_sig
        if 2 * len(store.shares) > self.keyring.n + self.keyring.t:
            store.threshold_sig = ts_combine(store.shares.values(), self.keyring)
            return store.threshold_sig
        return None

    def check_quorum_and_deliver(self, at_event: int) -> tuple[list[Batch], bytes | None]:
        """Phase II progress rule, run after every state mutation."""
        if self.delivered is not None:
            return [], None
        for c in sorted(self.stores, key=lambda x: x.digest):
            if c in self.poisoned:
                continue
            store = self.stores[c]
            if len(store.fragments) < self.params.k:
                continue
            if self.get_thresh_sig(c) is None:
                continue
            chosen = sorted(store.fragments)[: self.params.k]
            payload = ecc.reconstruct(
                [store.fragments[i].fragment for i in chosen], self.params
            )
            recomputed, tuples = compute_frag_vec_commit(
                payload, self.params, self.vc_scheme
            )
            if recomputed != c:
                # The committed vector is not a codeword; no retry can succeed.
                self.poisoned.add(c)
                continue
            sigma = self.get_thresh_sig(c)
            own = tuples[self.node_id - 1]
            store.fragments[own.index] = own
            batch = tuple(
                ProtocolMessage(
                    kind=MessageKind.BUNDLE,
                    commitment=c,
                    frag_a=own,
                    frag_b=tuples[j],
                    threshold_sig=sigma,
                )
                for j in range(self.params.n)
            )
            self.bundle_sent = True
            self.delivered = payload
            self.delivered_at = at_event
            self._count_batch()
            return [batch], payload
        return [], None

    def handle_event(self, msg, from_id: int, at_event: int) -> tuple[list[Batch], bytes | None]:
        """Engine entry point: shape-check, dispatch, then the progress rule."""
        if not structurally_sound(msg, self.params.n, self.params.fragment_len):
            return [], None
        if msg.kind is MessageKind.SEND:
            batches = self.handle_send(msg, from_id)
        elif msg.kind is MessageKind.FORWARD:
            batches = self.handle_forward(msg, from_id)
        else:
            batches = self.handle_bundle(msg, from_id)
        more, delivered = self.check_quorum_and_deliver(at_event)
        return batches + more, delivered

    # -- auditing --------------------------------------------------------------

    def audit(self):
        """Deep store-soundness check (test hook): everything stored verifies."""
        for c, store in self.stores.items():
            for idx, ft in store.fragments.items():
                assert idx == ft.index
                assert vc_verify(c, ft.proof, ft.fragment.data, ft.index)
            for signer, share in store.shares.items():
                assert signer == share.signer
                assert ts_verify_share(c, share, signer, self.keyring)
            if store.threshold_sig is not None:
                assert ts_verify(c, store.threshold_sig, self.keyring)
        if self.delivered is not None:
            assert self.bundle_sent

    def fingerprint(self) -> str:
        """Stable digest of the full state, for replay comparisons."""
        h = hashlib.sha256()
        h.update(self.signed_commitment.digest if self.signed_commitment else b"-")
        h.update(bytes([self.sent_forward, self.sent_forward_with_fragment, self.bundle_sent]))
        h.update(self.delivered if self.delivered is not None else b"-")
        for c in sorted(self.stores, key=lambda x: x.digest):
            store = self.stores[c]
            h.update(c.digest)
            for idx in sorted(store.fragments):
                h.update(idx.to_bytes(2, "big"))
                h.update(store.fragments[idx].fragment.data)
            for signer in sorted(store.shares):
                h.update(signer.to_bytes(2, "big"))
                h.update(store.shares[signer].share)
            h.update(b"T" if store.threshold_sig is not None else b"-")
        return h.hexdigest()
