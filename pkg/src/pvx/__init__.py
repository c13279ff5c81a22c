"""pvx: a deterministic library and CLI simulator for two hybrid payment
architectures -- institutionally supported privacy-enabling cryptocurrency
and institutionally mediated private value exchange -- with working privacy
primitives, a permissioned BFT ledger, a regulatory policy engine, and an
observer/adversary harness.
"""

from .group import GroupParams, STANDARD_GROUP, TEST_GROUP, get_profile

__all__ = ["GroupParams", "STANDARD_GROUP", "TEST_GROUP", "get_profile"]

__version__ = "0.1.0"
