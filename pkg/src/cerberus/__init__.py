"""Threshold moderation for franked messages: k of n moderators must agree
before a reported message's sender is revealed."""

from cerberus.elgamal import ID_LEN, Identity
from cerberus.group import MODP2048, RISTRETTO255, TOY23, Group
from cerberus.shamir import ThresholdParams

__all__ = ["ID_LEN", "Identity", "MODP2048", "RISTRETTO255", "TOY23", "Group", "ThresholdParams"]
__version__ = "0.1.0"
