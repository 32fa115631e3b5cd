"""Durable linked-list sets over a simulated or native persistent-memory substrate."""

from .ldlist import LdSet
from .pdlist import PdSet
from .recovery import persistent_abstract_set, recover, recover_ld, recover_pd
from .substrate import NativeSubstrate, PersistentImage, PsyncStats, SimSubstrate

__all__ = [
    "LdSet", "PdSet", "NativeSubstrate", "SimSubstrate", "PersistentImage", "PsyncStats",
    "persistent_abstract_set", "recover", "recover_pd", "recover_ld",
]
