"""Shared builders for protocol-level tests."""

import pytest

from coded_mbrb.crypto import Keyring
from coded_mbrb.ecc import derive_params
from coded_mbrb.protocol import NodeState


class ProtocolWorld:
    """A keyring plus fresh NodeStates for one (n, t, k, payload_len) setup."""

    def __init__(self, n=8, t=2, k=3, payload_len=24, sender_id=1, seed=42,
                 vc_scheme="merkle"):
        self.n = n
        self.t = t
        self.k = k
        self.sender_id = sender_id
        self.vc_scheme = vc_scheme
        self.keyring = Keyring.generate(n, t, master_seed=seed)
        self.params = derive_params(n, k, payload_len)

    def node(self, node_id) -> NodeState:
        return NodeState(node_id, self.sender_id, self.params, self.keyring,
                         self.vc_scheme)


@pytest.fixture
def world():
    return ProtocolWorld()
