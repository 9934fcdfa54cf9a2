"""Shamir secret sharing over the scalar field of a group."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from cerberus.errors import DuplicateIndexError, ParameterError
from cerberus.group import Group, Scalar


@dataclass(frozen=True)
class ThresholdParams:
    k: int
    n: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ParameterError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")

    @classmethod
    def majority(cls, n: int) -> "ThresholdParams":
        return cls(n // 2 + 1, n)


@dataclass(frozen=True)
class SecretShare:
    index: int
    value: Scalar

    def __post_init__(self):
        if self.index < 1:
            raise ParameterError("share index must be >= 1")


def eval_poly(group: Group, coeffs: Sequence[Scalar], x: int) -> Scalar:
    # Horner, highest coefficient first
    y = 0
    for c in reversed(coeffs):
        y = (y * x + c) % group.q
    return y


def deal(
    group: Group,
    secret: Scalar,
    params: ThresholdParams,
    rng: random.Random,
    coefficients: Sequence[Scalar] | None = None,
) -> list[SecretShare]:
    """Split ``secret`` into ``params.n`` shares, any ``params.k`` of which recover it.

    ``coefficients`` overrides the random higher-order terms (degree 1 up to
    k-1); tests use it to pin a polynomial.
    """
    if params.n >= group.q:
        raise ParameterError(f"n={params.n} too large for a field of order {group.q}")
    if coefficients is None:
        coefficients = [group.random_scalar(rng) for _ in range(params.k - 1)]
    elif len(coefficients) != params.k - 1:
        raise ParameterError(f"expected {params.k - 1} coefficients, got {len(coefficients)}")
    poly = [secret % group.q, *coefficients]
    return [SecretShare(i, eval_poly(group, poly, i)) for i in range(1, params.n + 1)]


def _check_indices(indices: Sequence[int]) -> None:
    if not indices:
        raise ParameterError("at least one index required")
    if any(i < 1 for i in indices):
        raise ParameterError("share indices must be >= 1; 0 holds the secret")
    if len(set(indices)) != len(indices):
        raise DuplicateIndexError(f"duplicate indices in {list(indices)}")


def lagrange_at_zero(group: Group, indices: Iterable[int]) -> list[Scalar]:
    """Coefficients l_i = prod_{j != i} j / (j - i), aligned with ``indices``."""
    indices = list(indices)
    _check_indices(indices)
    q = group.q
    out = []
    for i in indices:
        num = den = 1
        for j in indices:
            if j != i:
                num = num * j % q
                den = den * (j - i) % q
        out.append(num * pow(den, -1, q) % q)
    return out


def reconstruct(group: Group, shares: Sequence[SecretShare]) -> Scalar:
    lambdas = lagrange_at_zero(group, [s.index for s in shares])
    return sum(lam * s.value for lam, s in zip(lambdas, shares)) % group.q
