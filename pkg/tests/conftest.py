import random

import pytest

from pvx.group import STANDARD_GROUP, TEST_GROUP
from pvx.ledger import LedgerState, apply_block, validate_transaction
from pvx.stealth import recover_spend_secret
from pvx.txbuild import (
    ScalarStream,
    UniformSampler,
    Wallet,
    WalletNote,
    build_issue,
    build_shield,
)


class Harness:
    """A funded single-writer ledger plus wallets, with ground truth."""

    def __init__(self, group=STANDARD_GROUP, range_bits=12, seed=7):
        self.group = group
        self.state = LedgerState.genesis(
            group, {"alice.acct": 0, "bob.acct": 0, "acme.acct": 0},
            range_bits=range_bits)
        self.stream = ScalarStream(group, b"harness-%d" % seed)
        self.rng = random.Random(seed)
        self.sampler = UniformSampler()
        self.wallets = {name: Wallet.create(group, name, b"w-%d" % seed)
                        for name in ("alice", "bob")}
        self.openings = {}
        self.chain = []

    def land(self, result, expect_code=None):
        from pvx.consensus import Block, block_digest

        verdict = validate_transaction(self.state, result.tx)
        if expect_code is not None:
            assert verdict.code == expect_code, verdict
            return verdict
        assert verdict.accepted, verdict
        parent = block_digest(self.group, self.chain[-1]) if self.chain else ""
        self.chain.append(Block(self.state.height + 1, (result.tx,), parent,
                                "node0"))
        self.state = apply_block(self.state, [result.tx], self.state.height + 1)
        for oid in result.consumed:
            self.openings.pop(oid, None)
        for wallet in self.wallets.values():
            wallet.remove_notes(set(result.consumed))
        for note in result.created:
            oid = self.state.onetime_index[note.onetime_address]
            self.openings[oid] = (note.value, note.blinding)
            for wallet in self.wallets.values():
                secret = recover_spend_secret(
                    self.group, wallet.keypair, note.ephemeral_public,
                    note.onetime_address)
                if secret is not None:
                    wallet.add_note(WalletNote(
                        oid, note.onetime_address, note.value, note.blinding,
                        secret))
                    break
        return verdict

    def fund(self, issue=3000, shields=(600, 300, 200, 150)):
        self.land(build_issue(self.group, "cb", "alice.acct", "alice", issue))
        for amount in shields:
            self.land(build_shield(self.group, self.state,
                                   self.wallets["alice"], "alice.acct",
                                   amount, self.stream))
        return self


@pytest.fixture
def harness():
    return Harness().fund()


@pytest.fixture
def small_harness():
    # test-profile harness: tiny group, 8-bit amounts
    h = Harness(group=TEST_GROUP, range_bits=8, seed=3)
    h.land(build_issue(h.group, "cb", "alice.acct", "alice", 900))
    for amount in (120, 90, 60, 45):
        h.land(build_shield(h.group, h.state, h.wallets["alice"],
                            "alice.acct", amount, h.stream))
    return h
