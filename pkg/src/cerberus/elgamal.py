"""Hashed ElGamal over sender identities, with threshold decryption.

A ciphertext is ``(g^r, id XOR mask(pk^r))``. Each moderator turns its
Shamir share ``s_i`` of the secret key into a decryption share ``c1^s_i``;
any k of those, raised to their Lagrange coefficients and multiplied,
give back ``c1^sk = pk^r`` and therefore the mask.

Decryption shares carry no proof of correctness. A moderator that submits a
bogus share makes the combiner output a wrong identity without any error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from cerberus.errors import (
    DuplicateIndexError,
    EncodingError,
    InsufficientSharesError,
    ParameterError,
)
from cerberus.group import Element, Group, Scalar, xof, xor_bytes
from cerberus.shamir import SecretShare, lagrange_at_zero

ID_LEN = 32

ID_MASK_TAG = b"id-mask"
IDENTITY_TAG = b"identity"


@dataclass(frozen=True)
class Identity:
    """Fixed-width 32-byte sender identity."""

    value: bytes

    def __post_init__(self):
        if len(self.value) != ID_LEN:
            raise EncodingError(f"identity must be {ID_LEN} bytes")

    @classmethod
    def from_account(cls, account: str) -> "Identity":
        """Digest an arbitrary account identifier down to 32 bytes."""
        return cls(xof(IDENTITY_TAG, account.encode(), ID_LEN))

    @classmethod
    def from_label(cls, label: str | bytes) -> "Identity":
        """Length-prefixed, zero-padded encoding of a short label (<= 31 bytes)."""
        raw = label.encode() if isinstance(label, str) else label
        if len(raw) > ID_LEN - 1:
            raise EncodingError(f"label longer than {ID_LEN - 1} bytes; use from_account")
        return cls(bytes([len(raw)]) + raw + bytes(ID_LEN - 1 - len(raw)))

    def label(self) -> bytes | None:
        """Inverse of :meth:`from_label`, or None if this is not a padded label."""
        n = self.value[0]
        if n > ID_LEN - 1 or any(self.value[1 + n :]):
            return None
        return self.value[1 : 1 + n]

    def __str__(self):
        raw = self.label()
        if raw is not None:
            try:
                return raw.decode()
            except UnicodeDecodeError:
                pass
        return self.value.hex()


@dataclass(frozen=True)
class IdentityCiphertext:
    c1: Element
    c2: bytes

    def to_bytes(self, group: Group) -> bytes:
        return group.encode_element(self.c1) + self.c2

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "IdentityCiphertext":
        if len(data) != group.element_len + ID_LEN:
            raise EncodingError("ciphertext has wrong length")
        c1 = group.decode_element(data[: group.element_len])
        return cls(c1, data[group.element_len :])


@dataclass(frozen=True)
class DecryptionShare:
    index: int
    d: Element


def ciphertext_len(group: Group) -> int:
    return group.element_len + ID_LEN


def identity_mask(group: Group, shared_point: Element) -> bytes:
    return xof(ID_MASK_TAG, group.encode_element(shared_point), ID_LEN)


def encrypt_identity(group: Group, pk_mod: Element, identity: Identity, r: Scalar) -> IdentityCiphertext:
    r %= group.q
    if r == 0:
        raise ParameterError("encryption randomness must be non-zero")
    c1 = group.base_exp(r)
    c2 = xor_bytes(identity.value, identity_mask(group, group.exp(pk_mod, r)))
    return IdentityCiphertext(c1, c2)


def decrypt_identity(group: Group, sk: Scalar, ct: IdentityCiphertext) -> Identity:
    """Single-key decryption; the reference the threshold path must agree with."""
    return Identity(xor_bytes(ct.c2, identity_mask(group, group.exp(ct.c1, sk))))


def verify_encryption(group: Group, pk_mod: Element, identity, r, x1) -> bool:
    """True iff ``x1`` is exactly the encryption of ``identity`` under randomness ``r``.

    Never raises; malformed inputs are simply rejected.
    """
    try:
        if not isinstance(x1, IdentityCiphertext) or not isinstance(identity, Identity):
            return False
        if not isinstance(r, int) or not 0 < r < group.q:
            return False
        expected = encrypt_identity(group, pk_mod, identity, r)
    except Exception:
        return False
    return expected.c1 == x1.c1 and expected.c2 == x1.c2


def decryption_share(group: Group, share: SecretShare, c1: Element) -> DecryptionShare:
    if c1 == group.identity or not group.contains(c1):
        raise EncodingError("c1 must be a non-identity group element")
    return DecryptionShare(share.index, group.exp(c1, share.value))


def combine_points(group: Group, shares: Sequence[DecryptionShare]) -> Element:
    lambdas = lagrange_at_zero(group, [s.index for s in shares])
    return group.mul(*(group.exp(s.d, lam) for s, lam in zip(shares, lambdas)))


def combine_shares(group: Group, shares: Sequence[DecryptionShare], c2: bytes, k: int) -> Identity:
    """Recover the identity from at least ``k`` decryption shares."""
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise DuplicateIndexError(f"duplicate decryption share indices {indices}")
    if len(shares) < k:
        raise InsufficientSharesError(len(shares), k)
    if len(c2) != ID_LEN:
        raise EncodingError(f"c2 must be {ID_LEN} bytes")
    return Identity(xor_bytes(c2, identity_mask(group, combine_points(group, shares))))
