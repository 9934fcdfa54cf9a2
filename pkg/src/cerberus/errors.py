"""Exception hierarchy shared by every layer."""


class CerberusError(Exception):
    pass


class EntropyError(CerberusError):
    """The randomness source could not deliver bytes."""


class EncodingError(CerberusError, ValueError):
    """Bytes or wire fields that do not decode to a canonical value."""


class ParameterError(CerberusError, ValueError):
    pass


class InsufficientSharesError(CerberusError):
    def __init__(self, got: int, need: int):
        super().__init__(f"need {need} shares, got {got}")
        self.got = got
        self.need = need


class DuplicateIndexError(CerberusError, ValueError):
    pass


class NonceReuseError(CerberusError):
    pass


class RosterError(CerberusError):
    """Signer missing from a roster, or roster and shares misaligned."""


class ShareVerificationError(CerberusError):
    def __init__(self, indices):
        self.indices = sorted(indices)
        super().__init__(f"invalid signature share(s) from moderator(s) {self.indices}")


class TokenReuseError(CerberusError):
    pass


class KeyMismatchError(CerberusError):
    pass


class SessionError(CerberusError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class CollectionError(CerberusError):
    """Fewer than k moderators produced usable responses."""

    def __init__(self, message: str, unreachable=(), faulty=()):
        self.unreachable = sorted(unreachable)
        self.faulty = sorted(faulty)
        super().__init__(
            f"{message} (unreachable: {self.unreachable}, faulty: {self.faulty})"
        )


class InsufficientVotesError(CerberusError):
    def __init__(self, approvals: int, need: int, unreachable=(), denied=(), rejected=()):
        self.approvals = approvals
        self.need = need
        self.unreachable = sorted(unreachable)
        self.denied = sorted(denied)
        self.rejected = sorted(rejected)
        super().__init__(
            f"insufficient votes: {approvals} of {need} needed "
            f"(denied: {self.denied}, rejected: {self.rejected}, unreachable: {self.unreachable})"
        )


class TransportError(CerberusError):
    """A moderator could not be reached or answered with garbage."""
