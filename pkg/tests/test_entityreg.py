import pytest

from pvx.entityreg import Account, Entity, Registry
from pvx.group import TEST_GROUP
from pvx.policy import EntityKind
from pvx.stealth import derive_stealth_keypair


@pytest.fixture
def registry():
    reg = Registry()
    reg = reg.register_entity(Entity("bank1", EntityKind.REGULATED_INSTITUTION))
    reg = reg.register_entity(Entity("acme", EntityKind.REGISTERED_BUSINESS))
    reg = reg.register_entity(Entity("alice", EntityKind.INDIVIDUAL))
    reg = reg.register_entity(Entity("bob", EntityKind.INDIVIDUAL))
    reg = reg.register_account(Account("acme.acct", "bank1", "acme"))
    reg = reg.register_account(Account("alice.acct", "bank1", "alice"))
    kp = derive_stealth_keypair(TEST_GROUP, b"alice")
    reg = reg.publish_stealth_address("alice", kp.address)
    return reg


def test_lookup_account(registry):
    assert registry.lookup_account("acme.acct") == ("bank1", "acme")
    with pytest.raises(LookupError):
        registry.lookup_account("nope")


def test_lookup_recipient_prefers_stealth(registry):
    coords = registry.lookup_recipient("alice")
    assert coords.kind == "stealth"
    assert coords.stealth_address is not None
    coords = registry.lookup_recipient("acme")
    assert coords.kind == "account"
    assert coords.account_id == "acme.acct"
    with pytest.raises(LookupError):
        registry.lookup_recipient("ghost")
    with pytest.raises(LookupError):
        registry.lookup_recipient("bob")  # no account, nothing published


def test_duplicate_ids_rejected(registry):
    with pytest.raises(ValueError, match="duplicate entity"):
        registry.register_entity(Entity("alice", EntityKind.INDIVIDUAL))
    with pytest.raises(ValueError, match="duplicate account"):
        registry.register_account(Account("acme.acct", "bank1", "acme"))


def test_accounts_need_known_parties(registry):
    with pytest.raises(ValueError, match="unknown owner"):
        registry.register_account(Account("x.acct", "bank1", "ghost"))
    with pytest.raises(ValueError, match="unknown institution"):
        registry.register_account(Account("x.acct", "ghostbank", "alice"))
    # only institutions (or the central bank) hold customer accounts
    with pytest.raises(ValueError, match="cannot hold"):
        registry.register_account(Account("x.acct", "acme", "alice"))


def test_every_account_has_exactly_one_owner(registry):
    owners = {}
    for acct_id, acct in registry.accounts.items():
        assert acct_id not in owners
        owners[acct_id] = acct.owner_id
    assert owners == {"acme.acct": "acme", "alice.acct": "alice"}


def test_accountless_individual_is_fine(registry):
    # privacy boundary: bob exists with zero accounts
    assert registry.entity("bob").kind is EntityKind.INDIVIDUAL
    assert registry.accounts_of("bob") == []


def test_blacklist_flag(registry):
    flagged = registry.set_blacklist("bob", True)
    assert flagged.entity("bob").blacklisted
    assert not registry.entity("bob").blacklisted  # value semantics
    cleared = flagged.set_blacklist("bob", False)
    assert not cleared.entity("bob").blacklisted
    with pytest.raises(ValueError):
        registry.set_blacklist("ghost", True)


def test_mediation_fee_schedule(registry):
    reg = registry.register_entity(Entity("mix", EntityKind.INTERMEDIARY))
    reg.fee_schedule["mix"] = 5
    assert reg.mediation_fee("mix", default=2) == 5
    assert reg.mediation_fee("other", default=2) == 2
