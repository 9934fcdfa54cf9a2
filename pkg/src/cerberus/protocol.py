"""Token issuance, message sealing, envelope checks, voting and identity recovery.

Nothing in here does I/O. The moderator daemon and the client library wrap
these functions with a transport.

Flow::

    client                                   moderators (n of them)
    begin_token(id) -> TokenRequest  ----->  check_token_request, round 1
                                     <-----  commitments
    roster of k commitments          ----->  round 2
                                     <-----  signature shares
    finalize_token -> Token
    seal_message(m, token) -> MessageEnvelope   (travels with m)

    reporter: ReportRequest(envelope) ----->  moderator_vote
                                     <-----  decryption share | deny | reject
    recover_identity(k shares) -> Identity
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

from cerberus import elgamal, frost
from cerberus.elgamal import DecryptionShare, Identity, IdentityCiphertext
from cerberus.errors import (
    EncodingError,
    InsufficientSharesError,
    KeyMismatchError,
    ShareVerificationError,
    TokenReuseError,
)
from cerberus.frost import NonceCommitment, Signature, SignatureShare
from cerberus.group import Element, Group, Scalar, xof, xor_bytes
from cerberus.shamir import SecretShare, ThresholdParams

TOKEN_TAG = b"cerberus/v1/token"
X2_MASK_TAG = b"x2-mask"
DEFAULT_SKEW_SECS = 300

Clock = Callable[[], int]


def system_clock() -> int:
    return int(time.time())


class Reason(str, Enum):
    BAD_ENCRYPTION = "bad-encryption"
    STALE_TIMESTAMP = "stale-timestamp"
    BAD_TOKEN = "bad-token"
    X2_MISMATCH = "x2-mismatch"
    BAD_SRC_SIG = "bad-src-sig"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class PublicSetup:
    """Everything public about one moderator deployment."""

    group: Group
    params: ThresholdParams
    enc_pk: Element
    sign_pk: Element
    verification_shares: dict[int, Element]


@dataclass(frozen=True)
class Token:
    x1: IdentityCiphertext
    pk_eph: Element
    issued_at: int
    sig_mod: Signature

    def to_bytes(self, group: Group) -> bytes:
        return (
            self.x1.to_bytes(group)
            + group.encode_element(self.pk_eph)
            + self.issued_at.to_bytes(8, "big")
            + self.sig_mod.to_bytes(group)
        )

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "Token":
        if len(data) != token_len(group):
            raise EncodingError("token has wrong length")
        ct_len = elgamal.ciphertext_len(group)
        el = group.element_len
        x1 = IdentityCiphertext.from_bytes(group, data[:ct_len])
        pk_eph = group.decode_element(data[ct_len : ct_len + el])
        issued_at = int.from_bytes(data[ct_len + el : ct_len + el + 8], "big")
        sig = Signature.from_bytes(group, data[ct_len + el + 8 :])
        return cls(x1, pk_eph, issued_at, sig)


def token_len(group: Group) -> int:
    return elgamal.ciphertext_len(group) + group.element_len + 8 + frost.signature_len(group)


@dataclass(frozen=True)
class MessageEnvelope:
    message: bytes
    token: Token
    x2: bytes
    sig_src: Signature

    def to_bytes(self, group: Group) -> bytes:
        return (
            len(self.message).to_bytes(4, "big")
            + self.message
            + self.token.to_bytes(group)
            + self.x2
            + self.sig_src.to_bytes(group)
        )

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "MessageEnvelope":
        if len(data) < 4:
            raise EncodingError("envelope truncated")
        m_len = int.from_bytes(data[:4], "big")
        t_len = token_len(group)
        x_len = elgamal.ciphertext_len(group)
        if len(data) != 4 + m_len + t_len + x_len + frost.signature_len(group):
            raise EncodingError("envelope has wrong length")
        pos = 4 + m_len
        message = data[4:pos]
        token = Token.from_bytes(group, data[pos : pos + t_len])
        pos += t_len
        x2 = data[pos : pos + x_len]
        sig = Signature.from_bytes(group, data[pos + x_len :])
        return cls(message, token, x2, sig)


@dataclass(frozen=True)
class TokenRequest:
    id_src: Identity
    x1: IdentityCiphertext
    r: Scalar
    pk_eph: Element
    issued_at: int


@dataclass(frozen=True)
class ReportRequest:
    envelope: MessageEnvelope


class VotePolicy(Protocol):
    def __call__(self, message: bytes, token: Token) -> bool: ...


class AlwaysApprove:
    def __call__(self, message, token):
        return True

    def __repr__(self):
        return "always-approve"


class AlwaysDeny:
    def __call__(self, message, token):
        return False

    def __repr__(self):
        return "always-deny"


class KeywordPolicy:
    """Approve when the message contains any keyword (case-insensitive)."""

    def __init__(self, keywords: Sequence[str]):
        self.keywords = tuple(k.lower() for k in keywords if k)

    def __call__(self, message, token):
        text = message.decode("utf-8", errors="replace").lower()
        return any(k in text for k in self.keywords)

    def __repr__(self):
        return "keywords:" + ",".join(self.keywords)


def policy_from_spec(spec: str) -> VotePolicy:
    """Parse ``always-approve``, ``always-deny`` or ``keywords:a,b,c``."""
    if spec == "always-approve":
        return AlwaysApprove()
    if spec == "always-deny":
        return AlwaysDeny()
    for prefix in ("keywords:", "keyword-list:"):
        if spec.startswith(prefix):
            return KeywordPolicy(spec[len(prefix) :].split(","))
    raise ValueError(f"unknown vote policy {spec!r}")


# -- token issuance ----------------------------------------------------------


def begin_token(
    group: Group,
    id_src: Identity,
    pk_mod: Element,
    clock: Clock = system_clock,
    rng: random.Random | None = None,
    *,
    r: Scalar | None = None,
) -> tuple[TokenRequest, Scalar]:
    """Encrypt the identity and draw the ephemeral key pair.

    Returns the request to send to moderators and the ephemeral secret key,
    which must stay with the client.
    """
    rng = rng or random.SystemRandom()
    if r is None:
        r = group.random_nonzero_scalar(rng)
    sk_eph = group.random_nonzero_scalar(rng)
    x1 = elgamal.encrypt_identity(group, pk_mod, id_src, r)
    req = TokenRequest(id_src, x1, r, group.base_exp(sk_eph), int(clock()))
    return req, sk_eph


def check_token_request(
    group: Group,
    req: TokenRequest,
    pk_mod: Element,
    now: int,
    skew_secs: int = DEFAULT_SKEW_SECS,
) -> Reason | None:
    """Moderator-side check. Returns None to accept, otherwise the rejection reason."""
    if not elgamal.verify_encryption(group, pk_mod, req.id_src, req.r, req.x1):
        return Reason.BAD_ENCRYPTION
    if abs(now - req.issued_at) > skew_secs:
        return Reason.STALE_TIMESTAMP
    return None


def token_transcript(group: Group, x1: IdentityCiphertext, pk_eph: Element, issued_at: int) -> bytes:
    return TOKEN_TAG + x1.to_bytes(group) + group.encode_element(pk_eph) + issued_at.to_bytes(8, "big")


def request_transcript(group: Group, req: TokenRequest) -> bytes:
    return token_transcript(group, req.x1, req.pk_eph, req.issued_at)


def finalize_token(
    setup: PublicSetup,
    req: TokenRequest,
    roster: Sequence[NonceCommitment],
    sig_shares: Sequence[SignatureShare],
) -> Token:
    """Check every signature share, aggregate them, and drop ``r``."""
    group = setup.group
    if len(sig_shares) < setup.params.k:
        raise InsufficientSharesError(len(sig_shares), setup.params.k)
    msg = request_transcript(group, req)
    ctx = frost.signing_context(group, roster, msg, setup.sign_pk)
    bad = [
        s.index
        for s in sig_shares
        if s.index not in setup.verification_shares
        or not frost.verify_share(group, roster, s, msg, setup.verification_shares[s.index], setup.sign_pk, ctx)
    ]
    if bad:
        raise ShareVerificationError(bad)
    sig = frost.aggregate(group, roster, sig_shares, msg, setup.sign_pk, ctx)
    if not frost.verify(group, setup.sign_pk, msg, sig):
        raise ShareVerificationError([s.index for s in sig_shares])
    return Token(req.x1, req.pk_eph, req.issued_at, sig)


# -- sending -------------------------------------------------------------------


class TokenLedger:
    """Client-side record of spent tokens, keyed by ephemeral public key."""

    def __init__(self):
        self._spent: set[Element] = set()
        self._lock = threading.Lock()

    def consume(self, token: Token) -> None:
        with self._lock:
            if token.pk_eph in self._spent:
                raise TokenReuseError("token already used to seal a message")
            self._spent.add(token.pk_eph)

    def __contains__(self, token: Token) -> bool:
        return token.pk_eph in self._spent


def x2_for(group: Group, x1: IdentityCiphertext, message: bytes) -> bytes:
    x1_bytes = x1.to_bytes(group)
    return xor_bytes(x1_bytes, xof(X2_MASK_TAG, message, len(x1_bytes)))


def seal_message(
    group: Group,
    message: bytes,
    token: Token,
    sk_eph: Scalar,
    ledger: TokenLedger,
    rng: random.Random | None = None,
) -> MessageEnvelope:
    if group.base_exp(sk_eph) != token.pk_eph:
        raise KeyMismatchError("ephemeral secret key does not match token")
    ledger.consume(token)
    x2 = x2_for(group, token.x1, message)
    sig_src = frost.sign_single(group, sk_eph, x2, rng or random.SystemRandom())
    return MessageEnvelope(message, token, x2, sig_src)


def verify_envelope(group: Group, env: MessageEnvelope, sign_pk: Element) -> Reason | None:
    """Any hop may run this. Returns None to accept, otherwise the rejection reason."""
    tok = env.token
    try:
        transcript = token_transcript(group, tok.x1, tok.pk_eph, tok.issued_at)
    except (EncodingError, OverflowError):
        return Reason.BAD_TOKEN
    if not group.contains(tok.pk_eph) or tok.pk_eph == group.identity:
        return Reason.BAD_TOKEN
    if not frost.verify(group, sign_pk, transcript, tok.sig_mod):
        return Reason.BAD_TOKEN
    if env.x2 != x2_for(group, tok.x1, env.message):
        return Reason.X2_MISMATCH
    if not frost.verify(group, tok.pk_eph, env.x2, env.sig_src):
        return Reason.BAD_SRC_SIG
    return None


# -- reporting -----------------------------------------------------------------


class Vote(str, Enum):
    APPROVE = "approve"
    DENY = "deny"
    REJECT = "reject"


@dataclass(frozen=True)
class VoteOutcome:
    vote: Vote
    share: DecryptionShare | None = None
    reason: Reason | None = None


def moderator_vote(
    group: Group,
    report: ReportRequest,
    key_share: SecretShare,
    policy: VotePolicy,
    sign_pk: Element,
) -> VoteOutcome:
    env = report.envelope
    reason = verify_envelope(group, env, sign_pk)
    if reason is not None:
        return VoteOutcome(Vote.REJECT, reason=reason)
    if not policy(env.message, env.token):
        return VoteOutcome(Vote.DENY)
    return VoteOutcome(Vote.APPROVE, share=elgamal.decryption_share(group, key_share, env.token.x1.c1))


def recover_identity(
    group: Group,
    report: ReportRequest,
    shares: Sequence[DecryptionShare],
    params: ThresholdParams,
) -> Identity:
    return elgamal.combine_shares(group, shares, report.envelope.token.x1.c2, params.k)
