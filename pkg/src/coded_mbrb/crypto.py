"""Simulated, honestly-metered cryptography: vector commitments and threshold signatures.

Two vector-commitment schemes are built in:

* ``merkle`` — a real Merkle tree over the fragment vector. Proofs carry the
  sibling path and meter their true size, kappa * ceil(log2 n) bits.
* ``constant-size-simulated`` — identical mechanics (same path travels inside
  the proof object), but the proof meters kappa bits, matching the accounting
  of constant-size schemes. Experiments that reproduce O(|m| + n*kappa) byte
  budgets select this scheme.

The (tau, n) threshold signature scheme is simulated with keyed MACs: a share
is HMAC(seed_i, digest) and a "threshold signature" is an opaque object whose
hidden evidence holds >= tau distinct valid shares; it meters kappa bits
regardless of evidence size. Forgery is prevented structurally: shares can
only be minted through a Keyring (or a per-node Signer handle), never
assembled from raw bytes by protocol code.

Leaves and internal tree nodes are domain-separated (prefix bytes 0x00/0x01)
and the commitment binds the vector length (prefix 0x02), so cross-length and
structure-reuse collisions are ruled out.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field

KAPPA_BITS = 256
_DIGEST_LEN = KAPPA_BITS // 8

MERKLE_SCHEME = "merkle"
CONSTANT_SCHEME = "constant-size-simulated"
VC_SCHEMES = (MERKLE_SCHEME, CONSTANT_SCHEME)

_LEAF_PREFIX = b"\x00"
_NODE_PREFIX = b"\x01"
_ROOT_PREFIX = b"\x02"


class CryptoError(Exception):
    pass


class EmptyVectorError(CryptoError):
    pass


class UnknownSignerError(CryptoError):
    pass


class BelowThresholdError(CryptoError):
    pass


class MixedCommitmentsError(CryptoError):
    pass


class InvalidSharePresentError(CryptoError):
    pass


def _sha256(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


def id_bits(n: int) -> int:
    """Bits needed to name one of n nodes (at least 1)."""
    return max(1, (n - 1).bit_length())


@dataclass(frozen=True)
class Commitment:
    """Fixed-size digest binding an ordered fragment vector."""

    digest: bytes
    scheme_id: str

    def __post_init__(self):
        if len(self.digest) != _DIGEST_LEN:
            raise CryptoError(f"commitment digest must be {_DIGEST_LEN} bytes")

    @property
    def metered_size_bits(self) -> int:
        return KAPPA_BITS


@dataclass(frozen=True)
class InclusionProof:
    """Proof that element `index` belongs to a committed vector.

    `path` is scheme-encoded: 4-byte leaf count followed by the sibling
    digests bottom-up. The constant-size scheme carries the same path but
    meters only kappa bits.
    """

    index: int
    path: bytes
    metered_size_bits: int
    scheme_id: str


@dataclass(frozen=True)
class SignatureShare:
    """One node's share over a commitment; pairs (share bytes, signer id)."""

    signer: int
    commitment: Commitment
    share: bytes
    metered_size_bits: int


@dataclass(frozen=True)
class ThresholdSignature:
    """Opaque aggregate attesting >= tau distinct signers; meters kappa bits."""

    commitment: Commitment
    evidence: tuple[SignatureShare, ...] = field(repr=False)
    metered_size_bits: int = KAPPA_BITS


@dataclass
class Keyring:
    """System parameters plus per-node secret seeds (simulator-owned).

    tau = floor((n + t) / 2) + 1. Share verification is memoized per
    (signer, digest) so repeated checks cost a bytes compare, not an HMAC.
    """

    n: int
    t: int
    kappa: int = KAPPA_BITS
    _seeds: tuple[bytes, ...] = field(default=(), repr=False)
    _share_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def generate(cls, n: int, t: int, master_seed: int) -> "Keyring":
        if n < 1:
            raise CryptoError("need at least one node")
        base = master_seed.to_bytes(8, "big", signed=False)
        seeds = tuple(
            _sha256(b"node-seed", base, i.to_bytes(2, "big")) for i in range(1, n + 1)
        )
        return cls(n=n, t=t, _seeds=seeds)

    @property
    def tau(self) -> int:
        return (self.n + self.t) // 2 + 1

    @property
    def share_size_bits(self) -> int:
        return self.kappa + id_bits(self.n)

    def _expected_share(self, signer: int, digest: bytes) -> bytes:
        key = (signer, digest)
        cached = self._share_cache.get(key)
        if cached is None:
            cached = hmac.new(self._seeds[signer - 1], b"ts-share" + digest, hashlib.sha256).digest()
            self._share_cache[key] = cached
        return cached


@dataclass(frozen=True)
class Signer:
    """Capability handle: lets one node sign with its own seed and nothing else."""

    keyring: Keyring
    node_id: int

    def sign_share(self, c: Commitment) -> SignatureShare:
        return ts_sign_share(self.node_id, c, self.keyring)


# --- Vector commitments -------------------------------------------------------


def _leaf_hash(data: bytes) -> bytes:
    return _sha256(_LEAF_PREFIX, data)


def _build_levels(leaves: list[bytes]) -> list[list[bytes]]:
    # Pad to a power of two with empty-leaf hashes; at least two leaves so
    # every proof carries a real sibling.
    width = 2
    while width < len(leaves):
        width *= 2
    padded = leaves + [_leaf_hash(b"")] * (width - len(leaves))
    levels = [padded]
    while len(levels[-1]) > 1:
        prev = levels[-1]
        levels.append(
            [_sha256(_NODE_PREFIX, prev[i], prev[i + 1]) for i in range(0, len(prev), 2)]
        )
    return levels


def _root_digest(count: int, root: bytes) -> bytes:
    return _sha256(_ROOT_PREFIX, count.to_bytes(4, "big"), root)


def _proof_bits(scheme_id: str, depth: int) -> int:
    if scheme_id == CONSTANT_SCHEME:
        return KAPPA_BITS
    return KAPPA_BITS * depth


def vc_commit(elements, scheme_id: str = MERKLE_SCHEME) -> tuple[Commitment, list[InclusionProof]]:
    """Commit to an ordered vector; returns the digest and one proof per index."""
    elements = list(elements)
    if not elements:
        raise EmptyVectorError("cannot commit to an empty vector")
    if scheme_id not in VC_SCHEMES:
        raise CryptoError(f"unknown VC scheme {scheme_id!r}")
    if any(len(e) != len(elements[0]) for e in elements):
        raise CryptoError("vector elements must be equal-length")
    count = len(elements)
    levels = _build_levels([_leaf_hash(e) for e in elements])
    depth = len(levels) - 1
    commitment = Commitment(digest=_root_digest(count, levels[-1][0]), scheme_id=scheme_id)
    count_prefix = count.to_bytes(4, "big")
    proofs = []
    for i in range(count):
        siblings = []
        pos = i
        for level in levels[:-1]:
            siblings.append(level[pos ^ 1])
            pos //= 2
        proofs.append(
            InclusionProof(
                index=i + 1,
                path=count_prefix + b"".join(siblings),
                metered_size_bits=_proof_bits(scheme_id, depth),
                scheme_id=scheme_id,
            )
        )
    return commitment, proofs


def vc_verify(c: Commitment, proof: InclusionProof, element: bytes, index: int) -> bool:
    """True iff (element, index, proof) is consistent with commitment c."""
    if not isinstance(proof, InclusionProof) or proof.scheme_id != c.scheme_id:
        return False
    if len(proof.path) < 4 or (len(proof.path) - 4) % _DIGEST_LEN != 0:
        return False
    count = int.from_bytes(proof.path[:4], "big")
    if not 1 <= index <= count or index != proof.index:
        return False
    siblings = [
        proof.path[i : i + _DIGEST_LEN] for i in range(4, len(proof.path), _DIGEST_LEN)
    ]
    width = 2
    while width < count:
        width *= 2
    if len(siblings) != width.bit_length() - 1:
        return False
    node = _leaf_hash(element)
    pos = index - 1
    for sibling in siblings:
        if pos % 2 == 0:
            node = _sha256(_NODE_PREFIX, node, sibling)
        else:
            node = _sha256(_NODE_PREFIX, sibling, node)
        pos //= 2
    return _root_digest(count, node) == c.digest


# --- Threshold signatures -----------------------------------------------------


def ts_sign_share(signer: int, c: Commitment, keyring: Keyring) -> SignatureShare:
    """Produce signer's share over c. Deterministic per (signer, digest)."""
    if not 1 <= signer <= keyring.n:
        raise UnknownSignerError(f"no seed for node {signer}")
    return SignatureShare(
        signer=signer,
        commitment=c,
        share=keyring._expected_share(signer, c.digest),
        metered_size_bits=keyring.share_size_bits,
    )


def ts_verify_share(c: Commitment, share: SignatureShare, signer: int, keyring: Keyring) -> bool:
    if not isinstance(share, SignatureShare) or share.signer != signer:
        return False
    if not 1 <= signer <= keyring.n:
        return False
    return hmac.compare_digest(share.share, keyring._expected_share(signer, c.digest))


def ts_combine(shares, keyring: Keyring) -> ThresholdSignature:
    """Aggregate >= tau valid shares with distinct signers into one signature."""
    shares = list(shares)
    if not shares:
        raise BelowThresholdError("no shares supplied")
    commitment = shares[0].commitment
    if any(s.commitment != commitment for s in shares):
        raise MixedCommitmentsError("shares span multiple commitments")
    for s in shares:
        if not ts_verify_share(commitment, s, s.signer, keyring):
            raise InvalidSharePresentError(f"share by node {s.signer} does not verify")
    distinct = {s.signer: s for s in shares}
    if len(distinct) < keyring.tau:
        raise BelowThresholdError(
            f"{len(distinct)} distinct signers, threshold is {keyring.tau}"
        )
    evidence = tuple(distinct[i] for i in sorted(distinct))
    return ThresholdSignature(commitment=commitment, evidence=evidence)


def ts_verify(c: Commitment, sigma: ThresholdSignature, keyring: Keyring) -> bool:
    """True iff sigma's evidence holds >= tau valid shares with distinct signers for c."""
    if not isinstance(sigma, ThresholdSignature):
        return False
    distinct = set()
    for s in sigma.evidence:
        if ts_verify_share(c, s, s.signer, keyring):
            distinct.add(s.signer)
    return len(distinct) >= keyring.tau
