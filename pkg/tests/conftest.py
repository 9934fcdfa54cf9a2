import random
from dataclasses import dataclass

import pytest

from cerberus.client import Client, InMemoryTransport
from cerberus.group import RISTRETTO255, TOY23, Group
from cerberus.keys import Dealing, Roster, deal_keys
from cerberus.modnode import Moderator
from cerberus.protocol import AlwaysApprove
from cerberus.shamir import ThresholdParams

FIXED_NOW = 1_700_000_000


def fixed_clock():
    return FIXED_NOW


@dataclass
class LocalDeployment:
    dealing: Dealing
    moderators: list[Moderator]
    transport: InMemoryTransport
    client: Client

    @property
    def group(self) -> Group:
        return self.dealing.setup.group

    @property
    def setup(self):
        return self.dealing.setup


def local_deployment(group=RISTRETTO255, k=2, n=3, seed=0, policy=None, clock=fixed_clock, deadline=2.0):
    rng = random.Random(seed)
    dealing = deal_keys(group, ThresholdParams(k, n), rng)
    mods = [
        Moderator(m, policy or AlwaysApprove(), clock=clock, rng=random.Random(seed * 1000 + m.index))
        for m in dealing.moderators
    ]
    transport = InMemoryTransport(mods)
    client = Client(Roster(dealing.setup, {}), transport, clock=clock, rng=rng, deadline=deadline)
    return LocalDeployment(dealing, mods, transport, client)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def deployment():
    dep = local_deployment()
    yield dep
    dep.client.close()


@pytest.fixture
def toy_deployment():
    dep = local_deployment(TOY23, 2, 3, seed=0)
    yield dep
    dep.client.close()
