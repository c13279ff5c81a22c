"""Abstract prime-order group substrate used by every cryptographic primitive.

Two built-in profiles share one implementation (multiplicative Schnorr
group, p = 2q + 1):

* ``test``     -- p = 2039, q = 1019, G = 4.  Small enough that every vector
                  can be audited by hand or brute force.
* ``standard`` -- a fixed 160-bit-order group for scale runs.

Group elements are integers in the order-q subgroup of Z_p^*; scalars are
integers mod q.  H is derived by hashing the fixed domain tag ``pvx/H`` so
that nobody knows log_G(H).

Serialization is unsigned big-endian with a fixed byte length per profile
(``element_bytes`` / ``scalar_bytes``).  Domain-separation tags are ASCII
and part of the external interface: "pvx/H", "pvx/ring", "pvx/range",
"pvx/cred".
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

TAG_H = "pvx/H"
TAG_RING = "pvx/ring"
TAG_RANGE = "pvx/range"
TAG_CRED = "pvx/cred"


def tagged_hash(tag: str, *items: bytes) -> bytes:
    """SHA-256 over an ASCII tag plus length-prefixed items.

    Each item is prefixed with its 4-byte big-endian length, so the
    encoding is injective for a fixed tag.
    """
    h = hashlib.sha256()
    h.update(tag.encode("ascii"))
    h.update(b"\x00")
    for item in items:
        h.update(len(item).to_bytes(4, "big"))
        h.update(item)
    return h.digest()


@dataclass(frozen=True)
class GroupParams:
    """A Schnorr group (p = 2q + 1) with the two Pedersen bases.

    G is the blinding base, H the amount base.  Both generate the order-q
    subgroup (the quadratic residues mod p).
    """

    name: str
    p: int
    q: int
    g: int
    h: int
    range_bits: int  # default bit width for range proofs on this profile

    @property
    def element_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def scalar_bytes(self) -> int:
        return (self.q.bit_length() + 7) // 8

    # -- arithmetic -------------------------------------------------------

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def inv(self, a: int) -> int:
        return pow(a, self.p - 2, self.p)

    def power(self, base: int, exp: int) -> int:
        return pow(base, exp % self.q, self.p)

    def is_element(self, a: int) -> bool:
        """Membership in the order-q subgroup (excludes 0; includes 1)."""
        return 0 < a < self.p and pow(a, self.q, self.p) == 1

    @property
    def identity(self) -> int:
        return 1

    # -- encoding ---------------------------------------------------------

    def element_to_bytes(self, a: int) -> bytes:
        return a.to_bytes(self.element_bytes, "big")

    def scalar_to_bytes(self, s: int) -> bytes:
        return (s % self.q).to_bytes(self.scalar_bytes, "big")

    def element_from_bytes(self, raw: bytes) -> int:
        if len(raw) != self.element_bytes:
            raise ValueError(f"element must be {self.element_bytes} bytes")
        a = int.from_bytes(raw, "big")
        if not self.is_element(a):
            raise ValueError("not a subgroup element")
        return a

    # -- hashing ----------------------------------------------------------

    def hash_to_scalar(self, tag: str, *items: bytes) -> int:
        return int.from_bytes(tagged_hash(tag, *items), "big") % self.q

    def nonzero_scalar(self, tag: str, *items: bytes) -> int:
        """Like hash_to_scalar but rejects zero (counter-based retry)."""
        ctr = 0
        while True:
            s = self.hash_to_scalar(tag, *items, ctr.to_bytes(4, "big"))
            if s != 0:
                return s
            ctr += 1

    def hash_to_group(self, tag: str, *items: bytes) -> int:
        """Map arbitrary data to a subgroup element of unknown discrete log.

        Squaring lands the digest in the quadratic-residue subgroup; 0 and 1
        are rejected and retried with a counter.
        """
        ctr = 0
        while True:
            x = int.from_bytes(
                tagged_hash(tag, *items, ctr.to_bytes(4, "big")), "big") % self.p
            e = x * x % self.p
            if e not in (0, 1):
                return e
            ctr += 1


def _build(name: str, p: int, q: int, g: int, range_bits: int) -> GroupParams:
    h = GroupParams(name, p, q, g, 0, range_bits).hash_to_group(TAG_H)
    return GroupParams(name, p, q, g, h, range_bits)


# Hand-auditable profile: p = 2039 = 2*1019 + 1, both prime; 4 = 2^2 is a
# quadratic residue of order exactly 1019.  H below works out to 181.
TEST_GROUP = _build("test", p=2039, q=1019, g=4, range_bits=8)

# 160-bit-order profile: q is the smallest prime >= 2^159 + 1 with 2q + 1
# prime.  Elements are 21 bytes, scalars 20.
_STD_Q = 730750818665451459101842416358141509827966329493
STANDARD_GROUP = _build(
    "standard", p=2 * _STD_Q + 1, q=_STD_Q, g=4, range_bits=32)

PROFILES = {"test": TEST_GROUP, "standard": STANDARD_GROUP}


def get_profile(name: str) -> GroupParams:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown group profile {name!r}") from None
