"""Two-round threshold Schnorr signatures (FROST) and plain Schnorr.

Aggregated signatures are ordinary Schnorr signatures ``(R, z)`` with
``g^z = R * pk^c`` and ``c = H(R || pk || msg)``, so the single-signer
verifier accepts both and a recipient cannot tell k or n from a signature.

Signing keys are dealt by a trusted dealer (see :mod:`cerberus.keys`); there
is no distributed key generation here.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from typing import Sequence

from cerberus.errors import (
    EncodingError,
    NonceReuseError,
    ParameterError,
    RosterError,
)
from cerberus.group import Element, Group, Scalar
from cerberus.shamir import lagrange_at_zero

RHO_TAG = b"frost-rho"
CHALLENGE_TAG = b"schnorr-challenge"


@dataclass(frozen=True)
class SigningKeyShare:
    index: int
    value: Scalar
    group_pk: Element
    verification_share: Element

    def check(self, group: Group) -> None:
        if group.base_exp(self.value) != self.verification_share:
            raise ParameterError(f"verification share of moderator {self.index} does not match")


@dataclass(frozen=True)
class NonceCommitment:
    index: int
    D: Element
    E: Element

    def to_bytes(self, group: Group) -> bytes:
        return self.index.to_bytes(4, "big") + group.encode_element(self.D) + group.encode_element(self.E)

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "NonceCommitment":
        el = group.element_len
        if len(data) != 4 + 2 * el:
            raise EncodingError("commitment has wrong length")
        return cls(
            int.from_bytes(data[:4], "big"),
            group.decode_element(data[4 : 4 + el]),
            group.decode_element(data[4 + el :]),
        )


@dataclass(frozen=True)
class SignatureShare:
    index: int
    z: Scalar


@dataclass(frozen=True)
class Signature:
    R: Element
    z: Scalar

    def to_bytes(self, group: Group) -> bytes:
        return group.encode_element(self.R) + group.encode_scalar(self.z)

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "Signature":
        if len(data) != group.element_len + group.scalar_len:
            raise EncodingError("signature has wrong length")
        R = group.decode_element(data[: group.element_len], allow_identity=True)
        return cls(R, group.decode_scalar(data[group.element_len :]))


def signature_len(group: Group) -> int:
    return group.element_len + group.scalar_len


class SigningNonces:
    """Secret round-1 nonces ``(d, e)``. Usable for exactly one signature share."""

    def __init__(self, d: Scalar, e: Scalar, commitment: NonceCommitment):
        self._pair = (d, e)
        self.commitment = commitment
        self._lock = threading.Lock()

    @property
    def used(self) -> bool:
        return self._pair is None

    def consume(self) -> tuple[Scalar, Scalar]:
        with self._lock:
            if self._pair is None:
                raise NonceReuseError("signing nonces already used")
            pair, self._pair = self._pair, None
            return pair


def round1_commit(group: Group, index: int, rng: random.Random) -> tuple[SigningNonces, NonceCommitment]:
    d = group.random_nonzero_scalar(rng)
    e = group.random_nonzero_scalar(rng)
    commitment = NonceCommitment(index, group.base_exp(d), group.base_exp(e))
    return SigningNonces(d, e, commitment), commitment


def _sorted_roster(roster: Sequence[NonceCommitment]) -> list[NonceCommitment]:
    ordered = sorted(roster, key=lambda c: c.index)
    indices = [c.index for c in ordered]
    if len(set(indices)) != len(indices):
        raise RosterError(f"duplicate indices in roster {indices}")
    if not ordered:
        raise RosterError("empty roster")
    return ordered


def encode_roster(group: Group, roster: Sequence[NonceCommitment]) -> bytes:
    return b"".join(c.to_bytes(group) for c in _sorted_roster(roster))


def binding_factor(group: Group, index: int, msg: bytes, roster_bytes: bytes) -> Scalar:
    data = index.to_bytes(4, "big") + len(msg).to_bytes(8, "big") + msg + roster_bytes
    return group.hash_to_scalar(RHO_TAG, data)


def challenge(group: Group, R: Element, pk: Element, msg: bytes) -> Scalar:
    data = group.encode_element(R) + group.encode_element(pk) + msg
    return group.hash_to_scalar(CHALLENGE_TAG, data)


@dataclass(frozen=True)
class SigningContext:
    """Values every signer and the aggregator derive from (roster, msg, group key)."""

    roster: list[NonceCommitment]
    rho: dict[int, Scalar]
    lambdas: dict[int, Scalar]
    R: Element
    c: Scalar


def signing_context(group: Group, roster: Sequence[NonceCommitment], msg: bytes, group_pk: Element) -> SigningContext:
    ordered = _sorted_roster(roster)
    roster_bytes = encode_roster(group, ordered)
    rho = {c.index: binding_factor(group, c.index, msg, roster_bytes) for c in ordered}
    R = group.mul(*(group.mul(c.D, group.exp(c.E, rho[c.index])) for c in ordered))
    lambdas = dict(zip((c.index for c in ordered), lagrange_at_zero(group, [c.index for c in ordered])))
    return SigningContext(ordered, rho, lambdas, R, challenge(group, R, group_pk, msg))


def round2_sign(
    group: Group,
    key_share: SigningKeyShare,
    nonces: SigningNonces,
    msg: bytes,
    roster: Sequence[NonceCommitment],
) -> SignatureShare:
    """Produce this signer's share ``z_i = d + e*rho_i + lambda_i*s_i*c``.

    The nonces are consumed first, so they are gone even if the roster turns
    out to be unusable.
    """
    d, e = nonces.consume()
    ctx = signing_context(group, roster, msg, key_share.group_pk)
    if key_share.index not in ctx.rho:
        raise RosterError(f"signer {key_share.index} is not in the roster")
    if nonces.commitment not in ctx.roster:
        raise RosterError(f"roster commitment for signer {key_share.index} was altered")
    i = key_share.index
    z = (d + e * ctx.rho[i] + ctx.lambdas[i] * key_share.value * ctx.c) % group.q
    return SignatureShare(i, z)


def verify_share(
    group: Group,
    roster: Sequence[NonceCommitment],
    share: SignatureShare,
    msg: bytes,
    verification_share: Element,
    group_pk: Element,
    ctx: SigningContext | None = None,
) -> bool:
    """Check one signer's share: ``g^z == D_i * E_i^rho_i * Y_i^(lambda_i*c)``."""
    if ctx is None:
        try:
            ctx = signing_context(group, roster, msg, group_pk)
        except (RosterError, ValueError):
            return False
    i = share.index
    if i not in ctx.rho or not 0 <= share.z < group.q:
        return False
    mine = next(c for c in ctx.roster if c.index == i)
    rhs = group.mul(
        mine.D,
        group.exp(mine.E, ctx.rho[i]),
        group.exp(verification_share, ctx.lambdas[i] * ctx.c),
    )
    return group.base_exp(share.z) == rhs


def aggregate(
    group: Group,
    roster: Sequence[NonceCommitment],
    shares: Sequence[SignatureShare],
    msg: bytes,
    group_pk: Element,
    ctx: SigningContext | None = None,
) -> Signature:
    if len(shares) != len(roster):
        raise RosterError(f"{len(shares)} shares for a roster of {len(roster)}")
    if {s.index for s in shares} != {c.index for c in roster} or len({s.index for s in shares}) != len(shares):
        raise RosterError("share indices do not match roster indices")
    ctx = ctx or signing_context(group, roster, msg, group_pk)
    return Signature(ctx.R, sum(s.z for s in shares) % group.q)


def sign_single(group: Group, sk: Scalar, msg: bytes, rng: random.Random) -> Signature:
    nonce = group.random_nonzero_scalar(rng)
    R = group.base_exp(nonce)
    c = challenge(group, R, group.base_exp(sk), msg)
    return Signature(R, (nonce + sk * c) % group.q)


def verify(group: Group, pk: Element, msg: bytes, sig: Signature) -> bool:
    """Plain Schnorr check ``g^z == R * pk^c``. Rejects out-of-group or non-canonical values."""
    try:
        if not (0 <= sig.z < group.q and group.contains(sig.R) and group.contains(pk)):
            return False
        if pk == group.identity:
            return False
        c = challenge(group, sig.R, pk, msg)
        return group.base_exp(sig.z) == group.mul(sig.R, group.exp(pk, c))
    except (TypeError, AttributeError):
        return False
