"""Prime-order groups, scalar arithmetic, hashing and canonical encodings.

Three suites are provided:

``ristretto255``
    The production suite: the prime-order Ristretto group over Curve25519,
    backed by libsodium. Elements are their canonical 32-byte encodings.
``modp2048-q256``
    A Schnorr group (256-bit prime-order subgroup of the integers modulo a
    2048-bit prime). Pure Python plus gmpy2; slower, no libsodium needed.
``toy23``
    The order-11 subgroup of the integers modulo 23. Small enough to
    enumerate every exponent, which the tests use for brute-force discrete
    logs. Never use it for anything else.

Scalars are plain ``int`` values in ``[0, q)``. Elements are opaque values
owned by their group (``bytes`` for ristretto255, ``int`` otherwise); protocol
code only manipulates them through :class:`Group` methods. Scalars encode
as fixed-width big-endian integers.
"""

from __future__ import annotations

import abc
import hashlib
import random
from typing import Any

import gmpy2
import pysodium

from cerberus.errors import EncodingError, EntropyError

Scalar = int
Element = Any

# Constants below were derived from SHAKE256("cerberus schnorr group v1/q")
# and SHAKE256(".../m"): q is the next prime above the 256-bit stream value,
# p = q*m + 1 for the first even m (stepping by 2) that makes p a 2048-bit
# prime, and g = 2^((p-1)/q) mod p.
_MODP2048_Q = 0xCF9D17EB07FA0795EE71AF64A2E02BEFDEEA6DD4C70FB8589FE3810534D12B53
_MODP2048_P = int(
    "8e6fc49f4201d86085771fc0c918ac79ce946b4478d99ba9fda5cbbd9124ea5a"
    "8b2d85955387a2d124f099feed2a6fbbe334bb9132bee36927cad78bfb7d3edb"
    "7e7f82068e12be69635736d3e6169ad304fd967f3fb01e939c29b47bef562b84"
    "c494164d856b8f19163b9698c0e3275dff2de71120e7f66d31a95aae1b339a97"
    "e7a7ae465be0a23885ffc99e058e8786b925581b3577c195869fe4d8becfc8ab"
    "b96934162e971fff2b45e92c901e2c2491027b125d4496355f014cbceba0724b"
    "e20ba44431d79173b4237f1fcdc6b81ab2825207c3945d4637465958f9861f20"
    "501b30d7c098814e553f08c78bcee598ba12678acab72d6eb4a81f1ba8b16239",
    16,
)
_MODP2048_G = int(
    "5b7528a0e1a4e55c77ebb85c667c014f525d1eafc8202bfd1bc7de939b1ba104"
    "b84f91fe87d08fd1dd1b794f9e2da71f9a0262f8b9297da7e5acbf7c26ca456e"
    "1b093bc016581351178c1476cbf2f94b480cdca1955ed695be34e8795095b23d"
    "f26c94e67a679d54cb2922270a18e0aefc7dff0c1509ddef8ccf194b9164f5b5"
    "7b31cbe83f5a55f2576e70d037ff3475530570352639a2e98dfaf2b5772145fc"
    "a8999fe93ad4eb6d464bc5bb027af3492aaf171e1e7919d660609ed21e6b4ac3"
    "c97bd09499ef11bc6ec547ad2f198fc1b8b61fbf15eec6eb1b0a26bf11f2dff6"
    "2dab4939435e8e80167844b63af0c8ac5053b567ada16163dc155a9208c89708",
    16,
)

# 2^252 + 27742317777372353535851937790883648493
_RISTRETTO_L = 0x1000000000000000000000000000000014DEF9DEA2F79CD65812631A5CF5D3ED


def xof(domain_tag: bytes, data: bytes, out_len: int) -> bytes:
    """SHAKE256 over a length-prefixed domain tag followed by ``data``.

    Shorter outputs are prefixes of longer ones for the same inputs.
    """
    if out_len < 1:
        raise ValueError("out_len must be at least 1")
    if not 1 <= len(domain_tag) <= 255:
        raise ValueError("domain tag must be 1..255 bytes")
    h = hashlib.shake_256()
    h.update(bytes([len(domain_tag)]))
    h.update(domain_tag)
    h.update(data)
    return h.digest(out_len)


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


class Group(abc.ABC):
    """A cyclic group of prime order ``q`` with a fixed generator."""

    name: str
    suite_id: int
    q: int
    element_len: int

    @property
    def scalar_len(self) -> int:
        return (self.q.bit_length() + 7) // 8

    def __repr__(self):
        return f"<Group {self.name}>"

    # -- group operations ---------------------------------------------------

    @property
    @abc.abstractmethod
    def identity(self) -> Element: ...

    @property
    @abc.abstractmethod
    def generator(self) -> Element: ...

    @abc.abstractmethod
    def exp(self, base: Element, e: Scalar) -> Element:
        """``base`` raised to ``e`` (scalar multiplication in additive notation)."""

    @abc.abstractmethod
    def base_exp(self, e: Scalar) -> Element: ...

    @abc.abstractmethod
    def _op(self, a: Element, b: Element) -> Element: ...

    @abc.abstractmethod
    def contains(self, x: Any) -> bool:
        """True iff ``x`` is a (canonical) element of the prime-order group."""

    @abc.abstractmethod
    def encode_element(self, x: Element) -> bytes: ...

    @abc.abstractmethod
    def _decode(self, data: bytes) -> Element:
        """Parse ``data`` (already length-checked); raise EncodingError if not in the group."""

    def mul(self, *elements: Element) -> Element:
        acc = self.identity
        for x in elements:
            acc = self._op(acc, x)
        return acc

    def decode_element(self, data: bytes, *, allow_identity: bool = False) -> Element:
        if len(data) != self.element_len:
            raise EncodingError(f"{self.name}: element must be {self.element_len} bytes, got {len(data)}")
        x = self._decode(bytes(data))
        if x == self.identity and not allow_identity:
            raise EncodingError(f"{self.name}: identity element not allowed here")
        return x

    # -- scalars --------------------------------------------------------------

    def scalar_inverse(self, a: Scalar) -> Scalar:
        a %= self.q
        if a == 0:
            raise ZeroDivisionError("zero has no inverse")
        return pow(a, -1, self.q)

    def random_scalar(self, rng: random.Random) -> Scalar:
        try:
            return rng.randrange(self.q)
        except (OSError, NotImplementedError) as exc:
            raise EntropyError(f"entropy source failed: {exc}") from exc

    def random_nonzero_scalar(self, rng: random.Random) -> Scalar:
        try:
            return 1 + rng.randrange(self.q - 1)
        except (OSError, NotImplementedError) as exc:
            raise EntropyError(f"entropy source failed: {exc}") from exc

    def hash_to_scalar(self, domain_tag: bytes, data: bytes) -> Scalar:
        # 16 extra bytes keep the modular bias below 2^-128
        wide = xof(domain_tag, data, self.scalar_len + 16)
        return int.from_bytes(wide, "big") % self.q

    def encode_scalar(self, a: Scalar) -> bytes:
        if not 0 <= a < self.q:
            raise EncodingError("scalar out of range")
        return a.to_bytes(self.scalar_len, "big")

    def decode_scalar(self, data: bytes) -> Scalar:
        if len(data) != self.scalar_len:
            raise EncodingError(f"{self.name}: scalar must be {self.scalar_len} bytes, got {len(data)}")
        a = int.from_bytes(data, "big")
        if a >= self.q:
            raise EncodingError(f"{self.name}: non-canonical scalar")
        return a


class ModPGroup(Group):
    """Subgroup of order ``q`` in the integers modulo a prime ``p``; elements are ints."""

    def __init__(self, name: str, suite_id: int, p: int, q: int, g: int):
        self.name, self.suite_id = name, suite_id
        self.p, self.q, self.g = p, q, g
        self.element_len = (p.bit_length() + 7) // 8

    @property
    def identity(self) -> int:
        return 1

    @property
    def generator(self) -> int:
        return self.g

    def exp(self, base, e):
        return int(gmpy2.powmod(base, e % self.q, self.p))

    def base_exp(self, e):
        return self.exp(self.g, e)

    def _op(self, a, b):
        return a * b % self.p

    def contains(self, x):
        return (
            isinstance(x, int)
            and not isinstance(x, bool)
            and 0 < x < self.p
            and gmpy2.powmod(x, self.q, self.p) == 1
        )

    def encode_element(self, x):
        return x.to_bytes(self.element_len, "big")

    def _decode(self, data):
        x = int.from_bytes(data, "big")
        if not self.contains(x):
            raise EncodingError(f"{self.name}: not a subgroup element")
        return x


class RistrettoGroup(Group):
    """ristretto255 through libsodium; elements are canonical 32-byte encodings."""

    name = "ristretto255"
    suite_id = 2
    q = _RISTRETTO_L
    element_len = 32

    _IDENTITY = bytes(32)

    @property
    def identity(self) -> bytes:
        return self._IDENTITY

    @property
    def generator(self) -> bytes:
        return self.base_exp(1)

    @staticmethod
    def _le(e: int) -> bytes:
        return e.to_bytes(32, "little")

    def exp(self, base, e):
        e %= self.q
        try:
            return pysodium.crypto_scalarmult_ristretto255(self._le(e), base)
        except ValueError:
            # libsodium refuses to return the identity; it is the true result
            # for e == 0 or an identity base, anything else is a bad point
            if self.contains(base):
                return self._IDENTITY
            raise EncodingError("ristretto255: not a valid point") from None

    def base_exp(self, e):
        e %= self.q
        if e == 0:
            return self._IDENTITY
        return pysodium.crypto_scalarmult_ristretto255_base(self._le(e))

    def _op(self, a, b):
        if a == self._IDENTITY:
            return b
        if b == self._IDENTITY:
            return a
        return pysodium.crypto_core_ristretto255_add(a, b)

    def contains(self, x):
        if not isinstance(x, bytes) or len(x) != 32:
            return False
        return x == self._IDENTITY or bool(pysodium.crypto_core_ristretto255_is_valid_point(x))

    def encode_element(self, x):
        return x

    def _decode(self, data):
        if not self.contains(data):
            raise EncodingError("ristretto255: not a canonical point encoding")
        return data


RISTRETTO255 = RistrettoGroup()
MODP2048 = ModPGroup("modp2048-q256", 1, _MODP2048_P, _MODP2048_Q, _MODP2048_G)
# 2 has order 11 modulo 23: 2^11 = 2048 = 89*23 + 1
TOY23 = ModPGroup("toy23", 254, 23, 11, 2)

DEFAULT_SUITE = RISTRETTO255
SUITES = {g.name: g for g in (RISTRETTO255, MODP2048, TOY23)}
SUITES_BY_ID = {g.suite_id: g for g in SUITES.values()}


def get_suite(name_or_id: str | int) -> Group:
    table = SUITES_BY_ID if isinstance(name_or_id, int) else SUITES
    try:
        return table[name_or_id]
    except KeyError:
        raise EncodingError(f"unknown group suite {name_or_id!r}") from None
