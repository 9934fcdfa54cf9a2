"""Trusted-dealer key ceremony, moderator share files and roster files.

Share file, version 1 (binary, big-endian)::

    magic      4 bytes   b"CRBS"
    version    1 byte    1
    suite id   1 byte
    n          2 bytes
    k          2 bytes
    index      2 bytes
    enc share  scalar    Shamir share of the decryption key
    sign share scalar    Shamir share of the signing key
    verif share element  g^(sign share)
    enc pk     element   moderators' encryption public key
    sign pk    element   moderators' signing public key

Roster file, version 1 (text, one record per line, ``#`` comments)::

    cerberus-roster 1
    suite modp2048-q256
    threshold <k> <n>
    enc-pk <hex>
    sign-pk <hex>
    moderator <index> <host:port> <hex verification share>
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from cerberus.errors import EncodingError, ParameterError
from cerberus.frost import SigningKeyShare
from cerberus.group import Element, Group, Scalar, get_suite
from cerberus.protocol import PublicSetup
from cerberus.shamir import SecretShare, ThresholdParams, deal, reconstruct

SHARE_MAGIC = b"CRBS"
SHARE_VERSION = 1
ROSTER_HEADER = "cerberus-roster 1"


@dataclass(frozen=True)
class ModeratorKeys:
    """One moderator's secret material plus the public setup."""

    group: Group
    params: ThresholdParams
    index: int
    enc_share: SecretShare
    sign_share: SigningKeyShare
    enc_pk: Element

    @property
    def sign_pk(self) -> Element:
        return self.sign_share.group_pk

    def to_bytes(self) -> bytes:
        g = self.group
        return b"".join(
            [
                SHARE_MAGIC,
                bytes([SHARE_VERSION, g.suite_id]),
                self.params.n.to_bytes(2, "big"),
                self.params.k.to_bytes(2, "big"),
                self.index.to_bytes(2, "big"),
                g.encode_scalar(self.enc_share.value),
                g.encode_scalar(self.sign_share.value),
                g.encode_element(self.sign_share.verification_share),
                g.encode_element(self.enc_pk),
                g.encode_element(self.sign_pk),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModeratorKeys":
        if len(data) < 12 or data[:4] != SHARE_MAGIC:
            raise EncodingError("not a share file")
        if data[4] != SHARE_VERSION:
            raise EncodingError(f"unsupported share file version {data[4]}")
        group = get_suite(data[5])
        n = int.from_bytes(data[6:8], "big")
        k = int.from_bytes(data[8:10], "big")
        index = int.from_bytes(data[10:12], "big")
        sl, el = group.scalar_len, group.element_len
        if len(data) != 12 + 2 * sl + 3 * el:
            raise EncodingError("share file has wrong length")
        pos = 12
        enc_s = group.decode_scalar(data[pos : pos + sl])
        sign_s = group.decode_scalar(data[pos + sl : pos + 2 * sl])
        pos += 2 * sl
        # a share may legitimately be zero, making its verification share the identity
        verif = group.decode_element(data[pos : pos + el], allow_identity=True)
        enc_pk = group.decode_element(data[pos + el : pos + 2 * el])
        sign_pk = group.decode_element(data[pos + 2 * el : pos + 3 * el])
        params = ThresholdParams(k, n)
        if not 1 <= index <= n:
            raise EncodingError(f"share index {index} outside 1..{n}")
        sign_share = SigningKeyShare(index, sign_s, sign_pk, verif)
        sign_share.check(group)
        return cls(group, params, index, SecretShare(index, enc_s), sign_share, enc_pk)


@dataclass
class Roster:
    setup: PublicSetup
    addresses: dict[int, str] = field(default_factory=dict)

    @property
    def group(self) -> Group:
        return self.setup.group

    @property
    def params(self) -> ThresholdParams:
        return self.setup.params

    @property
    def indices(self) -> list[int]:
        return sorted(self.setup.verification_shares)

    def dumps(self) -> str:
        g = self.group
        lines = [
            ROSTER_HEADER,
            f"suite {g.name}",
            f"threshold {self.params.k} {self.params.n}",
            f"enc-pk {g.encode_element(self.setup.enc_pk).hex()}",
            f"sign-pk {g.encode_element(self.setup.sign_pk).hex()}",
        ]
        for i in self.indices:
            vs = g.encode_element(self.setup.verification_shares[i]).hex()
            lines.append(f"moderator {i} {self.addresses.get(i, '-')} {vs}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Roster":
        records = [
            ln.split() for ln in (raw.split("#", 1)[0].strip() for raw in text.splitlines()) if ln
        ]
        if not records or " ".join(records[0]) != ROSTER_HEADER:
            raise EncodingError("missing roster header")
        fields: dict[str, list[str]] = {}
        mods: dict[int, tuple[str, str]] = {}
        for rec in records[1:]:
            if rec[0] == "moderator" and len(rec) == 4:
                if not rec[1].isdigit():
                    raise EncodingError(f"bad moderator index {rec[1]!r}")
                idx = int(rec[1])
                if idx in mods:
                    raise EncodingError(f"duplicate moderator {idx}")
                mods[idx] = (rec[2], rec[3])
            elif rec[0] in ("suite", "threshold", "enc-pk", "sign-pk") and rec[0] not in fields:
                fields[rec[0]] = rec[1:]
            else:
                raise EncodingError(f"bad roster line: {' '.join(rec)}")
        try:
            group = get_suite(fields["suite"][0])
            k, n = (int(x) for x in fields["threshold"])
            enc_pk = group.decode_element(bytes.fromhex(fields["enc-pk"][0]))
            sign_pk = group.decode_element(bytes.fromhex(fields["sign-pk"][0]))
        except (KeyError, ValueError, IndexError) as exc:
            raise EncodingError(f"incomplete roster: {exc}") from None
        params = ThresholdParams(k, n)
        if sorted(mods) != list(range(1, n + 1)):
            raise EncodingError(f"roster must list moderators 1..{n}")
        try:
            verification = {
                i: group.decode_element(bytes.fromhex(vs), allow_identity=True) for i, (_, vs) in mods.items()
            }
        except ValueError as exc:
            raise EncodingError(f"bad verification share: {exc}") from None
        addresses = {i: addr for i, (addr, _) in mods.items() if addr != "-"}
        return cls(PublicSetup(group, params, enc_pk, sign_pk, verification), addresses)

    @classmethod
    def load(cls, path: str | Path) -> "Roster":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class Dealing:
    """Output of the key ceremony. The two secrets exist only in memory."""

    setup: PublicSetup
    moderators: list[ModeratorKeys]
    enc_sk: Scalar
    sign_sk: Scalar


def deal_keys(group: Group, params: ThresholdParams, rng: random.Random | None = None) -> Dealing:
    """Deal independent decryption and signing keys to ``params.n`` moderators."""
    rng = rng or random.SystemRandom()
    enc_sk = group.random_nonzero_scalar(rng)
    sign_sk = group.random_nonzero_scalar(rng)
    enc_pk = group.base_exp(enc_sk)
    sign_pk = group.base_exp(sign_sk)
    enc_shares = deal(group, enc_sk, params, rng)
    sign_shares = deal(group, sign_sk, params, rng)
    moderators = []
    for es, ss in zip(enc_shares, sign_shares):
        sk_share = SigningKeyShare(ss.index, ss.value, sign_pk, group.base_exp(ss.value))
        moderators.append(ModeratorKeys(group, params, es.index, es, sk_share, enc_pk))
    setup = PublicSetup(
        group,
        params,
        enc_pk,
        sign_pk,
        {m.index: m.sign_share.verification_share for m in moderators},
    )
    return Dealing(setup, moderators, enc_sk, sign_sk)


def self_check(setup: PublicSetup, moderators: list[ModeratorKeys]) -> None:
    """Reconstruct both keys from the first k shares and compare with the public keys."""
    group = setup.group
    subset = moderators[: setup.params.k]
    if len(subset) < setup.params.k:
        raise ParameterError("not enough shares for a self-check")
    enc_sk = reconstruct(group, [m.enc_share for m in subset])
    sign_sk = reconstruct(group, [SecretShare(m.index, m.sign_share.value) for m in subset])
    if group.base_exp(enc_sk) != setup.enc_pk or group.base_exp(sign_sk) != setup.sign_pk:
        raise ParameterError("shares do not reconstruct the public keys")
    for m in moderators:
        if setup.verification_shares[m.index] != m.sign_share.verification_share:
            raise ParameterError(f"verification share mismatch for moderator {m.index}")
