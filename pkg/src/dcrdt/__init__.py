"""Delta-state CRDTs, anti-entropy protocols and a seeded network simulator."""

from dcrdt.crdts import AWORSet, AWORSetTomb, GCounter, MVReg
from dcrdt.lattice import CausalContext, Dot, join, leq

__all__ = [
    "AWORSet",
    "AWORSetTomb",
    "CausalContext",
    "Dot",
    "GCounter",
    "MVReg",
    "join",
    "leq",
]

__version__ = "0.1.0"
