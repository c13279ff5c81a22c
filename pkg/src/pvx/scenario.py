"""Scenario files, deterministic end-to-end execution, and reporting.

A scenario is a JSON document with explicit key names:

    {
      "name": "...", "mode": "supported" | "mediated",
      "profile": "standard" | "test",          (default standard)
      "range_bits": 12,                        (default: profile's width)
      "consensus": {"n": 4, "f": 1, "seed": 7, "delay": [1000, 5000],
                    "drop": 0.0, "faults": {"node1": ["crash@5000000"]},
                    "base_timeout": 60000, "step_deadline": 120000000},
      "entities": [{"id": "...", "kind": "Individual", "stealth": true,
                    "blacklisted": false, "issuer": false, "fee": 2,
                    "accounts": [{"id": "...", "institution": "..."}]}],
      "ruleset": {"threshold": null, "mediation_fee": 2},
      "genesis": [{"account": "...", "amount": 1000}],
      "defaults": {"ring_size": 4, "sampler": "uniform", "fee": 0},
      "steps": [{"op": "...", ..., "expect": {"outcome": "accept"}}]
    }

Step ops: transfer, shield, unshield, shielded_transfer, mediated_exchange,
issue, blacklist, issue_credential, attack_probe, tax_report.  Every step's
outcome lands in the run result; optional per-step expectations make a
scenario an executable regression test.

The run is a pure function of (scenario bytes, seed): wallets, ephemerals,
blindings, serials and network jitter all derive from the scenario seed.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

from .blindsig import (
    credential_finalize,
    credential_issue,
    credential_request,
    issuer_keygen,
)
from .consensus import World
from .entityreg import Account, Entity, Registry
from .group import GroupParams, get_profile, tagged_hash
from .ledger import (
    LedgerState,
    Transaction,
    TxKind,
    conservation_audit,
    transaction_digest,
)
from .observer import (
    ScenarioProbes,
    desiderata_report,
    institution_shares,
    make_spend_corpus,
    run_link_attack,
    tax_report,
)
from .policy import (
    CredentialPresentation,
    Decision,
    EntityKind,
    IntentDescriptor,
    LegClass,
    MalformedIntent,
    Mode,
    RuleSet,
    authorize,
    update_blacklist,
)
from .stealth import recover_spend_secret
from .txbuild import (
    BuildError,
    MediatedLeg,
    ScalarStream,
    Wallet,
    WalletNote,
    build_issue,
    build_mediated_batch,
    build_shield,
    build_shielded_transfer,
    build_transparent_transfer,
    build_unshield,
    make_sampler,
)

STEP_OPS = ("transfer", "shield", "unshield", "shielded_transfer",
            "mediated_exchange", "issue", "blacklist", "issue_credential",
            "attack_probe", "tax_report")

DENY_REASONS = ("MediationRequired", "BusinessToStoreForbidden", "Blacklisted",
                "CredentialRequired", "CredentialReused",
                "ThresholdIdentificationRequired", "IssuerNotAuthorized")

LEDGER_CODES = ("RingSignature", "DoubleSpend", "RangeProof", "BalanceProof",
                "InsufficientFunds", "UnknownAccount", "MalformedTransaction",
                "DuplicateOnetime")


class ScenarioError(ValueError):
    """Parse or constraint failure, addressed by field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class ConsensusParams:
    n: int = 1
    f: int = 0
    seed: int = 0
    delay: tuple[int, int] = (1_000, 5_000)
    drop: float = 0.0
    faults: dict[str, list[str]] = field(default_factory=dict)
    base_timeout: int = 60_000
    step_deadline: int = 120_000_000


@dataclass(frozen=True)
class EntityDecl:
    entity_id: str
    kind: EntityKind
    accounts: tuple[tuple[str, str], ...] = ()  # (account id, institution)
    stealth: bool = False
    blacklisted: bool = False
    issuer: bool = False
    fee: int | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: Mode
    profile: str
    range_bits: int | None
    consensus: ConsensusParams
    entities: tuple[EntityDecl, ...]
    genesis: tuple[tuple[str, int], ...]
    threshold: int | None
    mediation_fee: int
    default_ring_size: int
    default_sampler: str
    default_fee: int
    steps: tuple[dict, ...]


# ---------------------------------------------------------------------------
# parsing


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ScenarioError(f"{path}.{key}", "missing required field")
    return obj[key]


def _as_int(value, path: str, minimum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ScenarioError(path, f"expected integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(path, f"must be >= {minimum}")
    return value


def parse_scenario(text: str | bytes | dict) -> Scenario:
    if isinstance(text, dict):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError("$", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario must be an object")

    known_top = {"name", "mode", "profile", "range_bits", "consensus",
                 "entities", "ruleset", "genesis", "defaults", "steps"}
    for key in doc:
        if key not in known_top:
            raise ScenarioError(key, "unknown field")

    mode_raw = _need(doc, "mode", "$")
    try:
        mode = Mode(str(mode_raw).capitalize())
    except ValueError:
        raise ScenarioError("mode", f"unknown mode {mode_raw!r}") from None

    profile = doc.get("profile", "standard")
    if profile not in ("standard", "test"):
        raise ScenarioError("profile", f"unknown profile {profile!r}")

    cons_doc = doc.get("consensus", {})
    n = _as_int(cons_doc.get("n", 1), "consensus.n", 1)
    f = _as_int(cons_doc.get("f", 0), "consensus.f", 0)
    if n < 3 * f + 1:
        raise ScenarioError("consensus.n",
                            f"n={n} violates the n >= 3f+1 bound for f={f}")
    delay = tuple(cons_doc.get("delay", (1_000, 5_000)))
    if len(delay) != 2 or delay[0] > delay[1]:
        raise ScenarioError("consensus.delay", "expected [min, max]")
    faults = cons_doc.get("faults", {})
    if not isinstance(faults, dict):
        raise ScenarioError("consensus.faults", "expected {node: [specs]}")
    consensus = ConsensusParams(
        n=n, f=f, seed=_as_int(cons_doc.get("seed", 0), "consensus.seed"),
        delay=(int(delay[0]), int(delay[1])),
        drop=float(cons_doc.get("drop", 0.0)),
        faults={str(k): list(v) for k, v in faults.items()},
        base_timeout=_as_int(cons_doc.get("base_timeout", 60_000),
                             "consensus.base_timeout", 1),
        step_deadline=_as_int(cons_doc.get("step_deadline", 120_000_000),
                              "consensus.step_deadline", 1))

    entities = []
    ids = set()
    for i, edoc in enumerate(doc.get("entities", [])):
        path = f"entities[{i}]"
        eid = str(_need(edoc, "id", path))
        if eid in ids:
            raise ScenarioError(f"{path}.id", f"duplicate entity id {eid!r}")
        ids.add(eid)
        kind_raw = _need(edoc, "kind", path)
        try:
            kind = EntityKind(kind_raw)
        except ValueError:
            raise ScenarioError(f"{path}.kind",
                                f"unknown entity kind {kind_raw!r}") from None
        accounts = []
        for j, adoc in enumerate(edoc.get("accounts", [])):
            apath = f"{path}.accounts[{j}]"
            accounts.append((str(_need(adoc, "id", apath)),
                             str(_need(adoc, "institution", apath))))
        entities.append(EntityDecl(
            eid, kind, tuple(accounts),
            stealth=bool(edoc.get("stealth", False)),
            blacklisted=bool(edoc.get("blacklisted", False)),
            issuer=bool(edoc.get("issuer", False)),
            fee=edoc.get("fee")))

    genesis = []
    for i, gdoc in enumerate(doc.get("genesis", [])):
        path = f"genesis[{i}]"
        genesis.append((str(_need(gdoc, "account", path)),
                        _as_int(_need(gdoc, "amount", path), f"{path}.amount", 1)))

    rules_doc = doc.get("ruleset", {})
    threshold = rules_doc.get("threshold")
    if threshold is not None:
        threshold = _as_int(threshold, "ruleset.threshold", 0)

    defaults = doc.get("defaults", {})
    sampler = defaults.get("sampler", "uniform")
    if sampler not in ("uniform", "age-biased"):
        raise ScenarioError("defaults.sampler", f"unknown sampler {sampler!r}")

    steps = []
    for i, sdoc in enumerate(doc.get("steps", [])):
        path = f"steps[{i}]"
        if not isinstance(sdoc, dict):
            raise ScenarioError(path, "step must be an object")
        op = _need(sdoc, "op", path)
        if op not in STEP_OPS:
            raise ScenarioError(f"{path}.op", f"unknown step op {op!r}")
        expect = sdoc.get("expect")
        if expect is not None:
            outcome = _need(expect, "outcome", f"{path}.expect")
            if outcome not in ("accept", "deny"):
                raise ScenarioError(f"{path}.expect.outcome",
                                    f"expected accept|deny, got {outcome!r}")
            if outcome == "deny":
                reason = _need(expect, "reason", f"{path}.expect")
                if reason not in DENY_REASONS + LEDGER_CODES:
                    raise ScenarioError(f"{path}.expect.reason",
                                        f"unknown reason {reason!r}")
        for amount_key in ("amount",):
            if amount_key in sdoc:
                _as_int(sdoc[amount_key], f"{path}.{amount_key}", 1)
        steps.append(dict(sdoc))

    range_bits = doc.get("range_bits")
    if range_bits is not None:
        range_bits = _as_int(range_bits, "range_bits", 1)

    return Scenario(
        name=str(doc.get("name", "unnamed")),
        mode=mode,
        profile=profile,
        range_bits=range_bits,
        consensus=consensus,
        entities=tuple(entities),
        genesis=tuple(genesis),
        threshold=threshold,
        mediation_fee=_as_int(rules_doc.get("mediation_fee", 0),
                              "ruleset.mediation_fee", 0),
        default_ring_size=_as_int(defaults.get("ring_size", 4),
                                  "defaults.ring_size", 1),
        default_sampler=sampler,
        default_fee=_as_int(defaults.get("fee", 0), "defaults.fee", 0),
        steps=tuple(steps))


def load_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        return parse_scenario(fh.read())


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class StepOutcome:
    index: int
    op: str
    outcome: str           # accept | deny | error
    reason: str | None = None
    height: int | None = None
    detail: str | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "op": self.op, "outcome": self.outcome,
                "reason": self.reason, "height": self.height,
                "detail": self.detail}


@dataclass
class RunResult:
    scenario: str
    mode: str
    seed: int
    final_digest: str
    outcomes: list[StepOutcome]
    consensus: dict
    reports: dict
    expectations_checked: int
    mismatches: list[dict]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "seed": self.seed,
            "final_digest": self.final_digest,
            "steps": [o.to_dict() for o in self.outcomes],
            "consensus": self.consensus,
            "reports": self.reports,
            "expectations": {"checked": self.expectations_checked,
                             "mismatches": self.mismatches},
        }


def emit_report(result: RunResult, fmt: str = "structured") -> str:
    if fmt == "structured":
        return json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = [f"scenario: {result.scenario}  (mode={result.mode}, seed={result.seed})",
             f"final ledger digest: {result.final_digest}", ""]
    for o in result.outcomes:
        status = o.outcome + (f"({o.reason})" if o.reason else "")
        height = f" @h{o.height}" if o.height else ""
        lines.append(f"  step {o.index:>2} {o.op:<18} {status}{height}")
    lines.append("")
    cons = result.consensus
    lines.append(f"consensus: {cons.get('sent', 0)} msgs sent, "
                 f"{cons.get('dropped', 0)} dropped, "
                 f"heights={cons.get('heights')}, views={cons.get('views')}")
    if result.reports.get("tax"):
        for rep in result.reports["tax"]:
            lines.append(f"tax report {rep['entity']}: total {rep['total']} "
                         f"over heights {rep['from_height']}..{rep['to_height']}")
    for stats in result.reports.get("attacks", []):
        lines.append(
            "attack %-16s sampler=%-10s acc=%.4f baseline=%.4f z=%+.2f"
            % (stats["heuristic"], stats["sampler"], stats["accuracy"],
               stats["baseline"], stats["z_score"]))
    if result.reports.get("desiderata"):
        matrix = result.reports["desiderata"]
        lines.append("")
        width = max(len(r["name"]) for r in matrix["rows"]) + 2
        lines.append(f"Desiderata ({matrix['mode']} mode)")
        for row in matrix["rows"]:
            lines.append(f"  {row['name']:<{width}} {row['verdict']:<11} "
                         f"[{row['provenance']}]")
    if result.mismatches:
        lines.append("")
        lines.append("EXPECTATION MISMATCHES:")
        for m in result.mismatches:
            lines.append(f"  step {m['step']}: expected {m['expected']}, "
                         f"got {m['actual']}")
    else:
        lines.append(f"expectations: {result.expectations_checked} checked, all met")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    return json.loads(text)


# ---------------------------------------------------------------------------
# the runner


class _Runner:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.sc = scenario
        self.seed = scenario.consensus.seed if seed is None else seed
        self.group: GroupParams = get_profile(scenario.profile)
        self.range_bits = scenario.range_bits or self.group.range_bits
        self.rng = random.Random(self.seed ^ 0x5CE0)
        self.stream = ScalarStream(self.group, tagged_hash(
            "pvx/scenario", self.seed.to_bytes(8, "big")))
        self.outcomes: list[StepOutcome] = []
        self.mismatches: list[dict] = []
        self.expect_checked = 0
        self.probes = ScenarioProbes()
        self.reports: dict = {"tax": [], "attacks": []}
        self.openings: dict[int, tuple[int, int]] = {}
        self.credentials: dict[str, list] = {}
        self._setup()

    # -- world construction ---------------------------------------------------

    def _setup(self) -> None:
        sc = self.sc
        registry = Registry()
        wallets: dict[str, Wallet] = {}
        institutions = [e.entity_id for e in sc.entities
                        if e.kind in (EntityKind.REGULATED_INSTITUTION,
                                      EntityKind.CENTRAL_BANK)]
        for decl in sc.entities:
            registry = registry.register_entity(Entity(
                decl.entity_id, decl.kind, blacklisted=decl.blacklisted))
        for decl in sc.entities:
            for acct_id, inst in decl.accounts:
                registry = registry.register_account(
                    Account(acct_id, inst, decl.entity_id))
            if decl.kind is EntityKind.INDIVIDUAL or decl.stealth:
                wallet = Wallet.create(
                    self.group, decl.entity_id,
                    tagged_hash("pvx/scenario/wallet",
                                self.seed.to_bytes(8, "big")))
                wallets[decl.entity_id] = wallet
                if decl.stealth:
                    registry = registry.publish_stealth_address(
                        decl.entity_id, wallet.address)
            if decl.fee is not None:
                registry.fee_schedule[decl.entity_id] = decl.fee

        self.issuers = {}
        issuer_key = None
        for decl in sc.entities:
            if decl.issuer:
                keypair = issuer_keygen(tagged_hash(
                    "pvx/scenario/issuer", self.seed.to_bytes(8, "big"),
                    decl.entity_id.encode()))
                self.issuers[decl.entity_id] = keypair
                registry = registry.register_issuer(decl.entity_id,
                                                    keypair.public)
                issuer_key = keypair.public

        blacklist = frozenset(e.entity_id for e in sc.entities if e.blacklisted)
        self.registry = registry
        self.wallets = wallets
        self.ruleset = RuleSet(sc.mode, blacklist, sc.threshold, issuer_key,
                               sc.mediation_fee)

        balances = {acct: 0 for acct in registry.accounts}
        genesis = LedgerState.genesis(self.group, balances, self.range_bits)
        for account, amount in sc.genesis:
            if account not in balances:
                raise ScenarioError("genesis", f"unknown account {account!r}")
            new_balances = dict(genesis.balances)
            new_balances[account] += amount
            genesis = replace(genesis, balances=new_balances,
                              total_issued=genesis.total_issued + amount)

        node_ids = [f"node{i}" for i in range(sc.consensus.n)]
        node_institutions = {
            nid: institutions[i % len(institutions)] if institutions else nid
            for i, nid in enumerate(node_ids)}
        self.world = World(
            self.group, node_ids, node_institutions, sc.consensus.f, genesis,
            policy_hook=self._policy_hook, seed=self.seed,
            delay=sc.consensus.delay, drop=sc.consensus.drop,
            fault_scripts=sc.consensus.faults,
            base_timeout=sc.consensus.base_timeout)
        self._live_honest = [
            nid for nid in self.world.honest_ids()
            if self.world.nodes[nid].fault.crash_at is None]
        self.reference = self.world.nodes[self._live_honest[0]]

    # -- policy ---------------------------------------------------------------

    def _descriptors_for(self, tx: Transaction) -> list[IntentDescriptor]:
        reg = self.registry
        descs = []

        def owner_kind(account_id):
            _, owner = reg.lookup_account(account_id)
            return owner, reg.entity(owner).kind

        creds = tuple(CredentialPresentation(c) for c in tx.credentials)
        if tx.kind is TxKind.TRANSPARENT_TRANSFER:
            src_owner, src_kind = owner_kind(tx.tin[0].account_id)
            for to in tx.tout:
                dst_owner, dst_kind = owner_kind(to.account_id)
                descs.append(IntentDescriptor(
                    tx.kind, LegClass.ACCOUNT, src_kind, LegClass.ACCOUNT,
                    dst_kind, src_owner, dst_owner, to.account_id, to.amount))
        elif tx.kind is TxKind.ISSUE:
            src_kind = reg.entity(tx.sponsor_id).kind
            for to in tx.tout:
                dst_owner, dst_kind = owner_kind(to.account_id)
                descs.append(IntentDescriptor(
                    tx.kind, LegClass.ACCOUNT, src_kind, LegClass.ACCOUNT,
                    dst_kind, tx.sponsor_id, dst_owner, to.account_id,
                    to.amount))
        elif tx.kind is TxKind.SHIELD:
            src_owner, src_kind = owner_kind(tx.tin[0].account_id)
            descs.append(IntentDescriptor(
                tx.kind, LegClass.ACCOUNT, src_kind, LegClass.STORE,
                src_kind, src_owner, src_owner,
                amount=sum(ti.amount for ti in tx.tin) - tx.fee))
        elif tx.kind is TxKind.UNSHIELD:
            for to in tx.tout:
                dst_owner, dst_kind = owner_kind(to.account_id)
                descs.append(IntentDescriptor(
                    tx.kind, LegClass.STORE, EntityKind.INDIVIDUAL,
                    LegClass.ACCOUNT, dst_kind, None, dst_owner,
                    to.account_id, to.amount, creds))
        elif tx.kind is TxKind.SHIELDED_TRANSFER:
            descs.append(IntentDescriptor(
                tx.kind, LegClass.STORE, EntityKind.INDIVIDUAL,
                LegClass.STORE, EntityKind.INDIVIDUAL))
        elif tx.kind is TxKind.MEDIATED_BATCH:
            intermediary_kind = reg.entity(tx.sponsor_id).kind \
                if tx.sponsor_id in reg.entities else None
            descs.append(IntentDescriptor(
                tx.kind, LegClass.STORE, EntityKind.INDIVIDUAL,
                LegClass.STORE, EntityKind.INDIVIDUAL,
                credentials=creds, intermediary_kind=intermediary_kind))
        return descs

    def _policy_hook(self, tx: Transaction) -> Decision:
        try:
            for desc in self._descriptors_for(tx):
                decision = authorize(desc, self.ruleset)
                if not decision.allowed:
                    return decision
        except (LookupError, MalformedIntent) as exc:
            raise RuntimeError(f"policy descriptor derivation failed: {exc}")
        return Decision.allow()

    # -- step helpers ----------------------------------------------------------

    def _record(self, index: int, step: dict, outcome: StepOutcome) -> None:
        self.outcomes.append(outcome)
        expect = step.get("expect")
        if expect is not None:
            self.expect_checked += 1
            expected = (expect["outcome"], expect.get("reason"))
            actual = (outcome.outcome, outcome.reason)
            ok = expected[0] == actual[0] and (
                expected[1] is None or expected[1] == actual[1])
            if not ok:
                self.mismatches.append({
                    "step": index,
                    "expected": f"{expected[0]}"
                                + (f"({expected[1]})" if expect.get("reason") else ""),
                    "actual": f"{actual[0]}"
                              + (f"({actual[1]})" if actual[1] else "")})

    def _wallet(self, entity_id: str) -> Wallet:
        try:
            return self.wallets[entity_id]
        except KeyError:
            raise ScenarioError("steps", f"{entity_id!r} has no wallet") from None

    def _first_account(self, entity_id: str) -> str:
        accounts = self.registry.accounts_of(entity_id)
        if not accounts:
            raise ScenarioError("steps", f"{entity_id!r} has no account")
        return accounts[0]

    def _submit_and_wait(self, tx: Transaction) -> tuple[bool, int | None]:
        """Submit to a live honest node; retry periodically until committed
        on every live honest replica or the step deadline expires."""
        world = self.world
        deadline = world.net.time + self.sc.consensus.step_deadline
        target = self._live_honest[len(self.outcomes) % len(self._live_honest)]
        world.submit_client_tx(target, tx)
        attempt = 0
        while world.net.time <= deadline:
            if world.run_until(lambda: world.tx_final_everywhere(tx),
                               deadline=min(deadline,
                                            world.net.time + 2_000_000)):
                break
            attempt += 1
            world.submit_client_tx(
                self._live_honest[attempt % len(self._live_honest)], tx)
        else:
            return False, None
        if not world.tx_final_everywhere(tx):
            return False, None
        world.check_safety()
        txid = transaction_digest(self.group, tx).hex()
        for block in self.reference.chain:
            if any(transaction_digest(self.group, t).hex() == txid
                   for t in block.txs):
                return True, block.height
        return True, self.reference.executed

    def _deliver_notes(self, result) -> None:
        state = self.reference.ledger
        for note in result.created:
            oid = state.onetime_index[note.onetime_address]
            self.openings[oid] = (note.value, note.blinding)
            wallet = self.wallets.get(note.recipient_id)
            if wallet is None:
                continue
            secret = recover_spend_secret(
                self.group, wallet.keypair, note.ephemeral_public,
                note.onetime_address)
            if secret is None:
                raise RuntimeError("recipient cannot scan its own note")
            wallet.add_note(WalletNote(oid, note.onetime_address, note.value,
                                       note.blinding, secret))
        for oid in result.consumed:
            self.openings.pop(oid, None)
        for wallet in self.wallets.values():
            wallet.remove_notes(set(result.consumed))
        if not conservation_audit(state, self.openings):
            raise RuntimeError("conservation audit failed after commit")

    def _blacklist_probe(self, dest_entity: str, accepted: bool) -> None:
        if dest_entity in self.ruleset.blacklist:
            if accepted:
                self.probes.illicit_leaked = True
            else:
                self.probes.illicit_blocked = True

    def _registration_probe(self, *entity_ids: str) -> None:
        for eid in entity_ids:
            if self.registry.accounts_of(eid):
                continue
            self.probes.accountless_transacted = True
            if not self.credentials.get(eid):
                self.probes.credentialless = True

    def _sampler_for(self, step: dict):
        return make_sampler(step.get("sampler", self.sc.default_sampler))

    def _ring_size(self, step: dict) -> int:
        return step.get("ring_size", self.sc.default_ring_size)

    def _fee(self, step: dict) -> int:
        return step.get("fee", self.sc.default_fee)

    # -- the step interpreter ----------------------------------------------------

    def run(self) -> RunResult:
        for index, step in enumerate(self.sc.steps):
            handler = getattr(self, "_op_" + step["op"])
            try:
                outcome = handler(index, step)
            except (BuildError, ScenarioError) as exc:
                outcome = StepOutcome(index, step["op"], "error",
                                      detail=str(exc))
            self._record(index, step, outcome)

        self.world.check_safety()
        desiderata = desiderata_report(self.sc.mode, self.probes)
        self.reports["desiderata"] = desiderata.to_dict()
        self.reports["institution_shares"] = institution_shares(
            self.registry, self.reference.chain)
        stats = self.world.stats_summary()
        stats["rejections"] = sorted(
            {(code or "") for node in self.world.nodes.values()
             for (_, code, _) in node.rejections})
        return RunResult(
            scenario=self.sc.name,
            mode=self.sc.mode.value,
            seed=self.seed,
            final_digest=self.reference.ledger.digest(),
            outcomes=self.outcomes,
            consensus=stats,
            reports=self.reports,
            expectations_checked=self.expect_checked,
            mismatches=self.mismatches)

    # each _op_* returns a StepOutcome ----------------------------------------

    def _payment_common(self, index, step, descriptor, build):
        decision = authorize(descriptor, self.ruleset)
        if not decision.allowed:
            return StepOutcome(index, step["op"], "deny",
                               decision.reason.value)
        result = build()
        ok, height = self._submit_and_wait(result.tx)
        if not ok:
            return StepOutcome(index, step["op"], "error",
                               detail="not committed before deadline")
        self._deliver_notes(result)
        return StepOutcome(index, step["op"], "accept", height=height)

    def _op_transfer(self, index, step):
        src = step["from"]
        dst = step["to"]
        amount = step["amount"]
        src_owner, src_kind = self._owner_kind(src)
        dst_owner, dst_kind = self._owner_kind(dst)
        desc = IntentDescriptor(
            TxKind.TRANSPARENT_TRANSFER, LegClass.ACCOUNT, src_kind,
            LegClass.ACCOUNT, dst_kind, src_owner, dst_owner, dst, amount)
        outcome = self._payment_common(
            index, step, desc,
            lambda: build_transparent_transfer(
                self.group, src, dst, dst_owner, amount, self._fee(step)))
        self._blacklist_probe(dst_owner, outcome.outcome == "accept")
        return outcome

    def _owner_kind(self, account_id: str):
        inst, owner = self.registry.lookup_account(account_id)
        return owner, self.registry.entity(owner).kind

    def _op_shield(self, index, step):
        entity = step["entity"]
        account = step.get("account") or self._first_account(entity)
        amount = step["amount"]
        kind = self.registry.entity(entity).kind
        desc = IntentDescriptor(
            TxKind.SHIELD, LegClass.ACCOUNT, kind, LegClass.STORE, kind,
            entity, entity, amount=amount)
        wallet = self._wallet(entity) if entity in self.wallets else None
        if wallet is None:
            # the policy matrix decides (business shields are denied there)
            decision = authorize(desc, self.ruleset)
            reason = decision.reason.value if not decision.allowed else None
            return StepOutcome(index, step["op"],
                               "deny" if not decision.allowed else "error",
                               reason)
        return self._payment_common(
            index, step, desc,
            lambda: build_shield(self.group, self.reference.ledger, wallet,
                                 account, amount, self.stream,
                                 self._fee(step)))

    def _op_unshield(self, index, step):
        entity = step["entity"]
        dst = step["to"]
        amount = step["amount"]
        dst_owner, dst_kind = self._owner_kind(dst)
        threshold = self.ruleset.identification_threshold
        creds = []
        if threshold is not None and amount > threshold:
            creds = self._take_credentials(entity, 1)
        desc = IntentDescriptor(
            TxKind.UNSHIELD, LegClass.STORE, EntityKind.INDIVIDUAL,
            LegClass.ACCOUNT, dst_kind, None, dst_owner, dst, amount,
            tuple(CredentialPresentation(c) for c in creds))
        wallet = self._wallet(entity)
        outcome = self._payment_common(
            index, step, desc,
            lambda: build_unshield(
                self.group, self.reference.ledger, wallet, dst, dst_owner,
                amount, self._ring_size(step), self._sampler_for(step),
                self.rng, self.stream, self._fee(step),
                credentials=tuple(creds)))
        if outcome.outcome == "accept" and creds:
            self._consume_credentials(entity, len(creds))
        self._blacklist_probe(dst_owner, outcome.outcome == "accept")
        return outcome

    def _op_shielded_transfer(self, index, step):
        src = step["from"]
        dst = step["to"]
        amount = step["amount"]
        desc = IntentDescriptor(
            TxKind.SHIELDED_TRANSFER, LegClass.STORE,
            self.registry.entity(src).kind, LegClass.STORE,
            self.registry.entity(dst).kind, src, dst)
        wallet = self._wallet(src)
        dst_wallet = self._wallet(dst)
        outcome = self._payment_common(
            index, step, desc,
            lambda: build_shielded_transfer(
                self.group, self.reference.ledger, wallet, dst,
                dst_wallet.address, amount, self._ring_size(step),
                self._sampler_for(step), self.rng, self.stream,
                self._fee(step)))
        if outcome.outcome == "accept":
            self._registration_probe(src, dst)
        self._blacklist_probe(dst, outcome.outcome == "accept")
        return outcome

    def _op_mediated_exchange(self, index, step):
        intermediary = step["intermediary"]
        legs_doc = step["legs"]
        payers = {leg["payer"] for leg in legs_doc}
        pools = {p: list(self.credentials.get(p, [])) for p in sorted(payers)}
        presentations = tuple(
            CredentialPresentation(c) for p in sorted(pools)
            for c in pools[p])
        if self.sc.mode is Mode.MEDIATED and not presentations:
            presentations = (CredentialPresentation(None),)
        desc = IntentDescriptor(
            TxKind.MEDIATED_BATCH, LegClass.STORE, EntityKind.INDIVIDUAL,
            LegClass.STORE, EntityKind.INDIVIDUAL,
            credentials=presentations,
            intermediary_kind=self.registry.entity(intermediary).kind
            if intermediary in self.registry.entities else None)
        decision = authorize(desc, self.ruleset)
        if not decision.allowed:
            for leg in legs_doc:
                self._blacklist_probe(leg["payee"], False)
            return StepOutcome(index, step["op"], "deny", decision.reason.value)

        fee = step.get("fee", self.registry.mediation_fee(
            intermediary, self.ruleset.mediation_fee))
        legs = []
        for leg in legs_doc:
            payer_wallet = self._wallet(leg["payer"])
            payee_wallet = self._wallet(leg["payee"])
            legs.append(MediatedLeg(payer_wallet, leg["payee"],
                                    payee_wallet.address, leg["amount"]))
        result = build_mediated_batch(
            self.group, self.reference.ledger, intermediary, legs,
            self._ring_size(step), self._sampler_for(step), self.rng,
            self.stream, fee,
            credential_pools=pools if self.sc.mode is Mode.MEDIATED else None)
        ok, height = self._submit_and_wait(result.tx)
        if not ok:
            return StepOutcome(index, step["op"], "error",
                               detail="not committed before deadline")
        self._deliver_notes(result)
        used = {c.serial for c in result.tx.credentials}
        for payer in pools:
            self.credentials[payer] = [
                c for c in self.credentials.get(payer, [])
                if c.serial not in used]
        participants = [leg["payer"] for leg in legs_doc] + \
                       [leg["payee"] for leg in legs_doc]
        self._registration_probe(*participants)
        for leg in legs_doc:
            self._blacklist_probe(leg["payee"], True)
        return StepOutcome(index, step["op"], "accept", height=height)

    def _op_issue(self, index, step):
        authority = step["authority"]
        dst = step["to"]
        amount = step["amount"]
        dst_owner, dst_kind = self._owner_kind(dst)
        desc = IntentDescriptor(
            TxKind.ISSUE, LegClass.ACCOUNT,
            self.registry.entity(authority).kind, LegClass.ACCOUNT, dst_kind,
            authority, dst_owner, dst, amount)
        return self._payment_common(
            index, step, desc,
            lambda: build_issue(self.group, authority, dst, dst_owner, amount))

    def _op_blacklist(self, index, step):
        entity = step["entity"]
        flag = bool(step.get("flag", True))
        self.registry = self.registry.set_blacklist(entity, flag)
        self.ruleset = update_blacklist(self.ruleset, entity, flag)
        return StepOutcome(index, step["op"], "accept")

    def _op_issue_credential(self, index, step):
        issuer_id = step["issuer"]
        holder = step["holder"]
        count = step.get("count", 1)
        keypair = self.issuers.get(issuer_id)
        if keypair is None:
            return StepOutcome(index, step["op"], "error",
                               detail=f"{issuer_id!r} is not an issuer")
        pouch = self.credentials.setdefault(holder, [])
        for i in range(count):
            serial = self.stream.next()
            unblinder = self.stream.next() % (keypair.public.n - 3) + 2
            while math.gcd(unblinder, keypair.public.n) != 1:
                unblinder += 1
            request = credential_request(keypair.public, serial, unblinder)
            blind_sig = credential_issue(keypair, request.blinded)
            pouch.append(credential_finalize(keypair.public, request, blind_sig))
        return StepOutcome(index, step["op"], "accept")

    def _op_attack_probe(self, index, step):
        sampler = make_sampler(step.get("sampler", "uniform"))
        trials = step.get("trials", 2_000)
        ring_size = step.get("ring_size", 11)
        corpus = make_spend_corpus(
            get_profile("test"), trials, ring_size, sampler,
            seed=self.seed ^ (index + 1) * 7919)
        heuristics = step.get("heuristics",
                              ["uniform-guess", "newest-member",
                               "key-image-graph"])
        for heuristic in heuristics:
            stats = run_link_attack(corpus, heuristic, seed=self.seed)
            self.probes.attack_stats.append(stats)
            self.reports["attacks"].append({
                "heuristic": stats.heuristic, "sampler": sampler.name,
                "trials": stats.trials, "accuracy": stats.accuracy,
                "baseline": stats.baseline, "z_score": stats.z_score})
        return StepOutcome(index, step["op"], "accept")

    def _op_tax_report(self, index, step):
        entity = step["entity"]
        period = (step.get("from_height", 1),
                  step.get("to_height", max(1, self.reference.executed)))
        report = tax_report(self.group, self.reference.chain, self.registry,
                            entity, period)
        # integrity probe: re-fold inflows independently of tax_report
        own = set(self.registry.accounts_of(entity))
        refold = 0
        for block in self.reference.chain:
            if not period[0] <= block.height <= period[1]:
                continue
            for tx in block.txs:
                if tx.kind is TxKind.ISSUE:
                    continue
                if any(ti.account_id in own for ti in tx.tin):
                    continue
                refold += sum(to.amount for to in tx.tout
                              if to.account_id in own)
        consistent = refold == report.total
        self.probes.tax_consistent = (
            consistent if self.probes.tax_consistent in (None, True) else False)
        self.reports["tax"].append({
            "entity": entity, "from_height": report.from_height,
            "to_height": report.to_height, "total": report.total,
            "items": [{"height": i.height, "tx": i.tx_id,
                       "account": i.account_id, "amount": i.amount}
                      for i in report.items],
            "consistent": consistent})
        return StepOutcome(index, step["op"], "accept")

    # credential pouch helpers --------------------------------------------------

    def _take_credentials(self, holder: str, count: int, peek: bool = False):
        return list(self.credentials.get(holder, [])[:count])

    def _consume_credentials(self, holder: str, count: int) -> None:
        self.credentials[holder] = self.credentials.get(holder, [])[count:]


def run_scenario(scenario: Scenario, seed: int | None = None) -> RunResult:
    return _Runner(scenario, seed).run()


# ---------------------------------------------------------------------------
# randomized valid scenarios (conservation workloads)


def random_scenario(seed: int, steps: int = 50) -> Scenario:
    """A randomized mixed-kind workload that is valid by construction:
    the generator tracks balances and note values so every step can
    commit.  Used for conservation acceptance runs."""
    rng = random.Random(seed)
    mode = Mode.MEDIATED if seed % 2 else Mode.SUPPORTED
    doc = {
        "name": f"random-{seed}",
        "mode": mode.value.lower(),
        "range_bits": 12,
        "consensus": {"n": 1, "f": 0, "seed": seed},
        "entities": [
            {"id": "bank", "kind": "RegulatedInstitution"},
            {"id": "cb", "kind": "CentralBank"},
            {"id": "acme", "kind": "RegisteredBusiness",
             "accounts": [{"id": "acme.acct", "institution": "bank"}]},
            {"id": "mix", "kind": "Intermediary", "issuer": True},
            {"id": "alice", "kind": "Individual",
             "accounts": [{"id": "alice.acct", "institution": "bank"}]},
            {"id": "bob", "kind": "Individual",
             "accounts": [{"id": "bob.acct", "institution": "bank"}]},
            {"id": "carol", "kind": "Individual",
             "accounts": [{"id": "carol.acct", "institution": "bank"}]},
        ],
        "ruleset": {"mediation_fee": 1},
        "genesis": [{"account": "acme.acct", "amount": 6000},
                    {"account": "alice.acct", "amount": 4000},
                    {"account": "bob.acct", "amount": 4000},
                    {"account": "carol.acct", "amount": 4000}],
        "defaults": {"ring_size": 3, "sampler": "uniform"},
        "steps": [],
    }
    people = ["alice", "bob", "carol"]
    balances = {"acme.acct": 6000, "alice.acct": 4000, "bob.acct": 4000,
                "carol.acct": 4000}
    notes: dict[str, list[int]] = {p: [] for p in people}
    pool = 0  # shielded outputs on the ledger so far
    creds: dict[str, int] = {p: 0 for p in people}

    def note_total(p):
        return sum(notes[p])

    plan: list[dict] = doc["steps"]
    if mode is Mode.MEDIATED:
        for p in people:
            plan.append({"op": "issue_credential", "issuer": "mix",
                         "holder": p, "count": 8})
            creds[p] = 8

    while len(plan) < steps:
        op = rng.choice(["transfer", "shield", "shield", "unshield",
                         "private", "issue", "transfer"])
        if op == "transfer":
            src = rng.choice(list(balances))
            dst = rng.choice([a for a in balances if a != src])
            ceiling = balances[src] - 1
            if ceiling < 2:
                continue
            amount = rng.randint(1, min(400, ceiling))
            fee = rng.randint(0, 2) if balances[src] - amount > 2 else 0
            if amount + fee > balances[src]:
                fee = 0
            plan.append({"op": "transfer", "from": src, "to": dst,
                         "amount": amount, "fee": fee,
                         "expect": {"outcome": "accept"}})
            balances[src] -= amount + fee
            balances[dst] += amount
        elif op == "shield":
            p = rng.choice(people)
            acct = f"{p}.acct"
            if balances[acct] < 10:
                continue
            amount = rng.randint(5, min(500, balances[acct] - 1))
            plan.append({"op": "shield", "entity": p, "account": acct,
                         "amount": amount, "expect": {"outcome": "accept"}})
            balances[acct] -= amount
            notes[p].append(amount)
            pool += 1
        elif op == "unshield":
            p = rng.choice(people)
            ring = min(3, pool)
            if note_total(p) < 5 or pool < 3:
                continue
            amount = rng.randint(1, min(300, note_total(p) - 1))
            plan.append({"op": "unshield", "entity": p,
                         "to": rng.choice(list(balances)), "amount": amount,
                         "ring_size": ring, "expect": {"outcome": "accept"}})
            spend = 0
            keep = []
            for v in notes[p]:
                if spend < amount:
                    spend += v
                else:
                    keep.append(v)
            keep.append(spend - amount)  # change note
            notes[p] = keep
            dst = plan[-1]["to"]
            balances[dst] += amount
            pool += 1  # change output
        elif op == "private":
            payer = rng.choice(people)
            payee = rng.choice([q for q in people if q != payer])
            if note_total(payer) < 6 or pool < 3:
                continue
            if mode is Mode.SUPPORTED:
                amount = rng.randint(1, min(200, note_total(payer) - 1))
                plan.append({"op": "shielded_transfer", "from": payer,
                             "to": payee, "amount": amount,
                             "ring_size": min(3, pool),
                             "expect": {"outcome": "accept"}})
                spent, keep = 0, []
                for v in notes[payer]:
                    if spent < amount:
                        spent += v
                    else:
                        keep.append(v)
                keep.append(spent - amount)
                notes[payer] = keep
                notes[payee].append(amount)
                pool += 2
            else:
                # mediated swap needs a second leg and credentials
                other = rng.choice([q for q in people if q != payer])
                if note_total(other) < 6 or creds[payer] < 2 or creds[other] < 2:
                    continue
                amt1 = rng.randint(1, min(150, note_total(payer) - 2))
                amt2 = rng.randint(1, min(150, note_total(other) - 2))
                plan.append({"op": "mediated_exchange", "intermediary": "mix",
                             "legs": [
                                 {"payer": payer, "payee": payee, "amount": amt1},
                                 {"payer": other, "payee": payer, "amount": amt2}],
                             "ring_size": min(3, pool), "fee": 2,
                             "expect": {"outcome": "accept"}})
                for who, amt in ((payer, amt1), (other, amt2)):
                    share = 1  # fee 2 split across two legs
                    spent, keep = 0, []
                    for v in notes[who]:
                        if spent < amt + share:
                            spent += v
                        else:
                            keep.append(v)
                    keep.append(spent - amt - share)
                    notes[who] = keep
                    creds[who] -= 2
                notes[payee].append(amt1)
                notes[payer].append(amt2)
                pool += 4
        elif op == "issue":
            if mode is not Mode.MEDIATED:
                continue
            dst = rng.choice(list(balances))
            amount = rng.randint(50, 400)
            plan.append({"op": "issue", "authority": "cb", "to": dst,
                         "amount": amount, "expect": {"outcome": "accept"}})
            balances[dst] += amount
    return parse_scenario(doc)
