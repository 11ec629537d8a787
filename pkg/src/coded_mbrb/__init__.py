"""Erasure-coded Byzantine reliable broadcast (MBRB) over a message adversary.

A k-of-n erasure codec, simulated-but-metered cryptographic schemes, the
three-phase broadcast state machine, a deterministic discrete-event network
simulator with Byzantine behaviors and a message-dropping adversary, plus
metrics, property checkers, and an experiment CLI.
"""

__version__ = "0.1.0"

from .ecc import CodeParams, Fragment, derive_params, encode_split, reconstruct
from .crypto import Keyring, vc_commit, vc_verify
from .simnet import SimConfig, Simulation
from .metrics import compute_ell_bound, validate_k

__all__ = [
    "CodeParams",
    "Fragment",
    "derive_params",
    "encode_split",
    "reconstruct",
    "Keyring",
    "vc_commit",
    "vc_verify",
    "SimConfig",
    "Simulation",
    "compute_ell_bound",
    "validate_k",
]
