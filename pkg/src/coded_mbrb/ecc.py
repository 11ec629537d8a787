"""k-of-n erasure codec: systematic Reed-Solomon over GF(2^8) at shard level.

A payload of `payload_len` bytes is zero-padded to `k * fragment_len` and cut
into k data shards; n-k parity shards are derived so that *any* k of the n
fragments reconstruct the payload exactly (erasure-only; no error correction).

Construction
------------
Generator matrix G = V · V_top^{-1}, where V is the n x k Vandermonde matrix
with evaluation points 1..n and V_top its first k rows. The top k rows of G
are the identity (data shards pass through unchanged), and every k x k
submatrix of G is invertible, which gives the any-k reconstruction guarantee.

Bulk byte work (row scaling and XOR accumulation) runs on numpy uint8 arrays
through a precomputed 256x256 multiplication table; the small k x k matrix
algebra stays in plain Python.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class EccError(Exception):
    """Base class for codec failures."""


class InvalidThresholdError(EccError):
    """k out of range, or n not representable in GF(2^8)."""


class EmptyPayloadError(EccError):
    """Zero-length payloads are not encodable."""


class LengthMismatchError(EccError):
    """Input length disagrees with the code parameters."""


class InsufficientFragmentsError(EccError):
    """Fewer than k distinct fragment indices supplied."""


class InconsistentCodewordError(EccError):
    """Supplied fragments do not lie on a single codeword."""


# --- GF(2^8) arithmetic (primitive polynomial 0x11D) -------------------------

_PRIM = 0x11D
_EXP = [0] * 512
_LOG = [0] * 256

_x = 1
for _i in range(255):
    _EXP[_i] = _x
    _LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= _PRIM
for _i in range(255, 512):
    _EXP[_i] = _EXP[_i - 255]
del _x, _i


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("no inverse of 0 in GF(2^8)")
    return _EXP[255 - _LOG[a]]


# MUL_TABLE[c] is the lookup row mapping byte b -> c*b; applied to whole
# numpy rows via fancy indexing.
_MUL_TABLE = np.zeros((256, 256), dtype=np.uint8)
for _a in range(1, 256):
    for _b in range(1, 256):
        _MUL_TABLE[_a, _b] = _EXP[_LOG[_a] + _LOG[_b]]
del _a, _b


def _mat_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        ai = a[i]
        oi = out[i]
        for t in range(inner):
            c = ai[t]
            if c == 0:
                continue
            bt = b[t]
            for j in range(cols):
                if bt[j]:
                    oi[j] ^= gf_mul(c, bt[j])
    return out


def _mat_inv(m: list[list[int]]) -> list[list[int]]:
    """Gauss-Jordan inversion over GF(2^8); raises on singular input."""
    size = len(m)
    aug = [row[:] + [1 if i == j else 0 for j in range(size)] for i, row in enumerate(m)]
    for col in range(size):
        pivot = next((r for r in range(col, size) if aug[r][col]), None)
        if pivot is None:
            raise InconsistentCodewordError("singular decode matrix")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = gf_inv(aug[col][col])
        aug[col] = [gf_mul(v, inv) for v in aug[col]]
        for r in range(size):
            if r != col and aug[r][col]:
                factor = aug[r][col]
                aug[r] = [v ^ gf_mul(factor, p) for v, p in zip(aug[r], aug[col])]
    return [row[size:] for row in aug]


@lru_cache(maxsize=None)
def _generator_matrix(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """n x k generator with identity on top; any k rows are invertible."""
    vander = [[1] * k for _ in range(n)]
    for i in range(n):
        point = i + 1
        for j in range(1, k):
            vander[i][j] = gf_mul(vander[i][j - 1], point)
    top_inv = _mat_inv([row[:] for row in vander[:k]])
    return tuple(tuple(row) for row in _mat_mul(vander, top_inv))


# --- Public types -------------------------------------------------------------


@dataclass(frozen=True)
class CodeParams:
    """Shape of one codeword: n fragments, any k of which reconstruct."""

    n: int
    k: int
    fragment_len: int
    payload_len: int

    @property
    def padding(self) -> int:
        return self.k * self.fragment_len - self.payload_len


@dataclass(frozen=True)
class Fragment:
    """One codeword piece: 1-based index plus fragment_len bytes."""

    index: int
    data: bytes


def derive_params(n: int, k: int, payload_len: int) -> CodeParams:
    """Fix code parameters for a payload: fragment_len = ceil(payload_len / k)."""
    if payload_len == 0:
        raise EmptyPayloadError("payload must be at least 1 byte")
    if payload_len < 0:
        raise LengthMismatchError("negative payload length")
    if k < 1 or k > n:
        raise InvalidThresholdError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n > 255:
        raise InvalidThresholdError("GF(2^8) codec supports at most 255 fragments")
    fragment_len = -(-payload_len // k)
    return CodeParams(n=n, k=k, fragment_len=fragment_len, payload_len=payload_len)


def encode_split(m: bytes, params: CodeParams) -> list[Fragment]:
    """Encode m into n fragments; fragments 1..k are the padded k-way split."""
    if len(m) != params.payload_len:
        raise LengthMismatchError(
            f"payload is {len(m)} bytes, params expect {params.payload_len}"
        )
    k, n, flen = params.k, params.n, params.fragment_len
    padded = m + b"\x00" * params.padding
    data = np.frombuffer(padded, dtype=np.uint8).reshape(k, flen)
    gen = _generator_matrix(n, k)
    fragments = [Fragment(index=j + 1, data=padded[j * flen : (j + 1) * flen]) for j in range(k)]
    for i in range(k, n):
        acc = np.zeros(flen, dtype=np.uint8)
        for j, coeff in enumerate(gen[i]):
            if coeff:
                acc ^= _MUL_TABLE[coeff][data[j]]
        fragments.append(Fragment(index=i + 1, data=acc.tobytes()))
    return fragments


def reconstruct(fragments, params: CodeParams) -> bytes:
    """Recover the payload from any >= k distinct-index fragments.

    With more than k fragments supplied, the extras are checked against the
    re-encoded codeword and InconsistentCodewordError is raised on mismatch.
    """
    k, n, flen = params.k, params.n, params.fragment_len
    by_index: dict[int, Fragment] = {}
    for frag in fragments:
        if not 1 <= frag.index <= n:
            raise LengthMismatchError(f"fragment index {frag.index} outside 1..{n}")
        if len(frag.data) != flen:
            raise LengthMismatchError(
                f"fragment {frag.index} has {len(frag.data)} bytes, expected {flen}"
            )
        prev = by_index.setdefault(frag.index, frag)
        if prev.data != frag.data:
            raise InconsistentCodewordError(f"conflicting data for index {frag.index}")
    if len(by_index) < k:
        raise InsufficientFragmentsError(
            f"have {len(by_index)} distinct fragments, need {k}"
        )

    chosen = sorted(by_index)[:k]
    gen = _generator_matrix(n, k)
    sub = [list(gen[idx - 1]) for idx in chosen]
    sub_inv = _mat_inv(sub)
    rows = [np.frombuffer(by_index[idx].data, dtype=np.uint8) for idx in chosen]
    data_rows = []
    for j in range(k):
        acc = np.zeros(flen, dtype=np.uint8)
        for t, coeff in enumerate(sub_inv[j]):
            if coeff:
                acc ^= _MUL_TABLE[coeff][rows[t]]
        data_rows.append(acc)
    padded = b"".join(row.tobytes() for row in data_rows)
    payload = padded[: params.payload_len]

    extras = set(by_index) - set(chosen)
    if extras:
        reencoded = {f.index: f.data for f in encode_split(payload, params)}
        for idx in extras:
            if by_index[idx].data != reencoded[idx]:
                raise InconsistentCodewordError(
                    f"fragment {idx} inconsistent with codeword of decoded payload"
                )
    return payload
