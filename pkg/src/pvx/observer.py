"""Observability semantics, regulator reporting, cooperative disclosure,
adversarial linkability attacks, and the desiderata matrix.

Observer classes project committed transactions onto what that class may
legitimately see: transparent legs are cleartext for everyone, shielded
legs expose only existence, validity, ring composition, key images and
commitments.  Nothing short of a participant's own secrets opens an
amount.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .group import GroupParams
from .ledger import LedgerState, Transaction, TxKind, transaction_digest
from .pedersen import commit
from .policy import EntityKind, Mode
from .ringsig import key_image_for, ring_sign
from .entityreg import Registry


@dataclass(frozen=True)
class Observer:
    kind: str                 # regulator | institution | public | adversary
    party: str | None = None  # node id or heuristic id for the variants

    @classmethod
    def regulator(cls) -> "Observer":
        return cls("regulator")

    @classmethod
    def institution(cls, node_id: str) -> "Observer":
        return cls("institution", node_id)

    @classmethod
    def public(cls) -> "Observer":
        return cls("public")

    @classmethod
    def adversary(cls, heuristic: str) -> "Observer":
        return cls("adversary", heuristic)


@dataclass(frozen=True)
class VisibleRecord:
    tx_id: str
    height: int
    kind: str
    fields: dict

    def to_json(self) -> str:
        return json.dumps({"tx_id": self.tx_id, "height": self.height,
                           "kind": self.kind, "fields": self.fields},
                          sort_keys=True)


def _transparent_fields(tx: Transaction) -> dict:
    return {
        "inputs": [{"account": ti.account_id, "amount": ti.amount}
                   for ti in tx.tin],
        "outputs": [{"account": to.account_id, "amount": to.amount,
                     "owner": to.owner_id} for to in tx.tout],
        "fee": tx.fee,
        "sponsor": tx.sponsor_id,
    }


def _shielded_fields(group: GroupParams, tx: Transaction) -> dict:
    return {
        "shielded_inputs": [{
            "ring": list(si.ring_refs),
            "key_image": group.element_to_bytes(si.signature.key_image).hex(),
            "pseudo_commitment": si.pseudo_commitment.to_bytes(group).hex(),
        } for si in tx.sin],
        "shielded_outputs": [{
            "onetime_address": group.element_to_bytes(so.onetime_address).hex(),
            "ephemeral": group.element_to_bytes(so.ephemeral_public).hex(),
            "commitment": so.commitment.to_bytes(group).hex(),
            "range_valid": True,  # committed ledger: re-verified on request
        } for so in tx.sout],
        "credential_serials": [c.serial for c in tx.credentials],
    }


def view(group: GroupParams, chain, registry: Registry,
         observer: Observer) -> list[VisibleRecord]:
    """Project the committed chain onto an observer class."""
    records = []
    for block in chain:
        for tx in block.txs:
            fields = _transparent_fields(tx)
            fields.update(_shielded_fields(group, tx))
            if observer.kind == "regulator":
                fields["entities"] = _account_owners(registry, tx)
            elif observer.kind == "institution":
                fields["entities"] = {
                    acct: owner
                    for acct, owner in _account_owners(registry, tx).items()
                    if _institution_of(registry, acct) == observer.party}
            records.append(VisibleRecord(
                transaction_digest(group, tx).hex(), block.height,
                tx.kind.value, fields))
    return records


def _account_owners(registry: Registry, tx: Transaction) -> dict:
    owners = {}
    for leg in (*tx.tin, *tx.tout):
        acct = registry.accounts.get(leg.account_id)
        if acct is not None:
            owners[leg.account_id] = acct.owner_id
    return owners


def _institution_of(registry: Registry, account_id: str) -> str | None:
    acct = registry.accounts.get(account_id)
    return None if acct is None else acct.institution_id


def institution_shares(registry: Registry, chain) -> dict[str, float]:
    """Per-institution share of committed transactions touching one of its
    accounts.  Reported raw: the dispersion question has no fixed target."""
    touches: dict[str, int] = {}
    total = 0
    for block in chain:
        for tx in block.txs:
            total += 1
            seen = set()
            for leg in (*tx.tin, *tx.tout):
                inst = _institution_of(registry, leg.account_id)
                if inst is not None:
                    seen.add(inst)
            for inst in seen:
                touches[inst] = touches.get(inst, 0) + 1
    if total == 0:
        return {}
    return {inst: count / total for inst, count in sorted(touches.items())}


# ---------------------------------------------------------------------------
# tax reporting


@dataclass(frozen=True)
class TaxItem:
    height: int
    tx_id: str
    account_id: str
    amount: int


@dataclass(frozen=True)
class TaxReport:
    entity_id: str
    from_height: int
    to_height: int
    items: tuple[TaxItem, ...]
    total: int


def tax_report(group: GroupParams, chain, registry: Registry, entity_id: str,
               period: tuple[int, int] | None = None) -> TaxReport:
    """Itemized transparent inflows to a registered business's accounts.

    Issuance is monetary supply, not income, and transfers between the
    entity's own accounts do not count as inflows.
    """
    entity = registry.entity(entity_id)
    if entity.kind is not EntityKind.REGISTERED_BUSINESS:
        raise ValueError(f"{entity_id!r} is not a registered business")
    lo, hi = period if period else (1, len(chain))
    own_accounts = set(registry.accounts_of(entity_id))
    items = []
    for block in chain:
        if not lo <= block.height <= hi:
            continue
        for tx in block.txs:
            if tx.kind is TxKind.ISSUE:
                continue
            if any(ti.account_id in own_accounts for ti in tx.tin):
                continue
            for to in tx.tout:
                if to.account_id in own_accounts:
                    items.append(TaxItem(block.height,
                                         transaction_digest(group, tx).hex(),
                                         to.account_id, to.amount))
    return TaxReport(entity_id, lo, hi, tuple(items),
                     sum(i.amount for i in items))


# ---------------------------------------------------------------------------
# cooperative disclosure


@dataclass(frozen=True)
class DisclosedOutput:
    index: int
    value: int
    blinding: int


@dataclass(frozen=True)
class DisclosedInput:
    index: int
    onetime_address: int
    value: int
    blinding: int
    onetime_secret: int


@dataclass(frozen=True)
class DisclosureReport:
    tx_id: str
    consistent: bool
    mismatches: tuple[str, ...]
    opened_outputs: tuple[DisclosedOutput, ...]
    opened_inputs: tuple[DisclosedInput, ...]


def cooperative_disclosure(group: GroupParams, state: LedgerState,
                           tx: Transaction,
                           outputs: list[DisclosedOutput],
                           inputs: list[DisclosedInput] = ()) -> DisclosureReport:
    """Check a participant's voluntary opening against the ledger.

    The participant reveals amounts, blindings and its own one-time keys;
    nothing here identifies the counterparty beyond what the participant
    already knew.
    """
    mismatches = []
    for d in outputs:
        if not 0 <= d.index < len(tx.sout):
            mismatches.append(f"output {d.index}: no such output")
            continue
        so = tx.sout[d.index]
        if commit(group, d.value % group.q, d.blinding % group.q) != so.commitment:
            mismatches.append(f"output {d.index}: commitment mismatch")
    for d in inputs:
        if not 0 <= d.index < len(tx.sin):
            mismatches.append(f"input {d.index}: no such input")
            continue
        si = tx.sin[d.index]
        ring_addresses = {state.outputs[ref].onetime_address
                          for ref in si.ring_refs if ref in state.outputs}
        if d.onetime_address not in ring_addresses:
            mismatches.append(f"input {d.index}: address not in ring")
            continue
        if group.power(group.g, d.onetime_secret) != d.onetime_address:
            mismatches.append(f"input {d.index}: one-time key mismatch")
            continue
        if key_image_for(group, d.onetime_secret, d.onetime_address) \
                != si.signature.key_image:
            mismatches.append(f"input {d.index}: key image mismatch")
            continue
        ref = next(r for r in si.ring_refs
                   if state.outputs[r].onetime_address == d.onetime_address)
        if commit(group, d.value % group.q, d.blinding % group.q) \
                != state.outputs[ref].commitment:
            mismatches.append(f"input {d.index}: commitment mismatch")
    return DisclosureReport(
        transaction_digest(group, tx).hex(), not mismatches,
        tuple(mismatches), tuple(outputs), tuple(inputs))


def ring_ambiguity(group: GroupParams, state: LedgerState, tx: Transaction,
                   input_index: int, known_addresses: set[int]) -> int:
    """How many ring slots of a given input remain plausible spenders given
    only the disclosed addresses (no spend secrets): always the full ring,
    because membership alone proves nothing about being spent."""
    si = tx.sin[input_index]
    plausible = 0
    for ref in si.ring_refs:
        rec = state.outputs.get(ref)
        if rec is None:
            continue
        # a slot could be excluded only with its spend secret; knowing the
        # address (even being its owner's counterparty) never suffices
        plausible += 1
    return plausible


# ---------------------------------------------------------------------------
# linkability attacks


@dataclass(frozen=True)
class SpendRecord:
    ring_ids: tuple[int, ...]  # ascending ledger ids == creation order
    true_position: int         # ground truth, harness only
    key_image: int


@dataclass(frozen=True)
class SpendCorpus:
    group_name: str
    ring_size: int
    sampler: str
    seed: int
    spends: tuple[SpendRecord, ...]


@dataclass(frozen=True)
class LinkAttackStats:
    heuristic: str
    trials: int
    correct: int
    accuracy: float
    baseline: float
    z_score: float


def make_spend_corpus(group: GroupParams, trials: int, ring_size: int,
                      sampler, seed: int, initial_population: int | None = None,
                      churn: int = 2, sign: bool = True) -> SpendCorpus:
    """Synthesize a spend history: a growing output population, true spends
    uniform over the unspent pool, sampler-chosen decoys drawn from that
    same pool, and (optionally) real one-time keys with real ring
    signatures at each spend.

    True pick and decoys share one candidate pool, so under the uniform
    sampler every ring member is exchangeable and all position heuristics
    sit at the 1/ring-size baseline; a skewed sampler breaks the symmetry.
    """
    import bisect

    rng = random.Random(seed)
    n0 = initial_population or max(ring_size * 50, 500)
    secrets: dict[int, int] = {}
    unspent: list[int] = []  # ascending ids == ascending age
    minted = 0

    def mint(count: int) -> None:
        nonlocal minted
        for _ in range(count):
            oid = minted
            minted += 1
            secrets[oid] = group.nonzero_scalar(
                "pvx/corpus", seed.to_bytes(8, "big"), oid.to_bytes(8, "big"))
            unspent.append(oid)

    mint(n0)
    spends = []
    for trial in range(trials):
        true_id = unspent[rng.randrange(len(unspent))]
        decoys = sampler.sample(unspent, true_id, ring_size, rng)
        ring_ids = tuple(sorted(decoys + [true_id]))
        true_pos = ring_ids.index(true_id)
        if sign:
            ring_pubs = [group.power(group.g, secrets[oid]) for oid in ring_ids]
            sig = ring_sign(group, trial.to_bytes(8, "big"), ring_pubs,
                            true_pos, secrets[true_id])
            image = sig.key_image
        else:
            image = group.power(group.g, secrets[true_id])
        spends.append(SpendRecord(ring_ids, true_pos, image))
        del unspent[bisect.bisect_left(unspent, true_id)]
        mint(churn)
    return SpendCorpus(group.name, ring_size, getattr(sampler, "name", "?"),
                       seed, tuple(spends))


def _guess_uniform(corpus: SpendCorpus, rng: random.Random) -> list[int]:
    return [rng.randrange(len(s.ring_ids)) for s in corpus.spends]


def _guess_newest(corpus: SpendCorpus, rng: random.Random) -> list[int]:
    # ring ids ascend, so the newest member sits at the last slot
    return [len(s.ring_ids) - 1 for s in corpus.spends]


def _guess_key_image_graph(corpus: SpendCorpus, rng: random.Random) -> list[int]:
    """Iterated elimination: rings reduced to a single candidate pin their
    member as spent; spent members vanish from other rings; repeat, then
    guess uniformly among survivors."""
    candidates = [set(s.ring_ids) for s in corpus.spends]
    spent: set[int] = set()
    changed = True
    while changed:
        changed = False
        for cand in candidates:
            if len(cand) == 1:
                member = next(iter(cand))
                if member not in spent:
                    spent.add(member)
                    changed = True
            else:
                before = len(cand)
                pinned = {m for m in cand if m in spent}
                if len(cand) - len(pinned) >= 1 and pinned:
                    cand -= pinned
                    changed = changed or len(cand) != before
    guesses = []
    for s, cand in zip(corpus.spends, candidates):
        pool = sorted(cand) if cand else list(s.ring_ids)
        pick = pool[rng.randrange(len(pool))]
        guesses.append(s.ring_ids.index(pick))
    return guesses


HEURISTICS = {
    "uniform-guess": _guess_uniform,
    "newest-member": _guess_newest,
    "key-image-graph": _guess_key_image_graph,
}


def run_link_attack(corpus: SpendCorpus, heuristic: str,
                    seed: int = 0) -> LinkAttackStats:
    try:
        guesser = HEURISTICS[heuristic]
    except KeyError:
        raise ValueError(f"unknown heuristic {heuristic!r}") from None
    rng = random.Random((seed << 16) ^ corpus.seed ^ hash(heuristic) % (1 << 30))
    guesses = guesser(corpus, rng)
    correct = sum(1 for g, s in zip(guesses, corpus.spends)
                  if g == s.true_position)
    trials = len(corpus.spends)
    baseline = 1.0 / corpus.ring_size
    accuracy = correct / trials if trials else 0.0
    sigma = math.sqrt(baseline * (1 - baseline) / trials) if trials else 0.0
    if sigma == 0.0:  # ring size 1 (or empty corpus): no variance under H0
        z = 0.0 if accuracy == baseline else math.inf
    else:
        z = (accuracy - baseline) / sigma
    return LinkAttackStats(heuristic, trials, correct, accuracy, baseline, z)


# ---------------------------------------------------------------------------
# desiderata matrix

DESIDERATA_ROWS = (
    "Robust to cyberattacks",
    "Usable without registration",
    "Unlinkable transactions",
    "Electronic transactions",
    "Suitable for taxation",
    "Can block some illicit uses",
    "Can be denominated in units of fiat currency",
)

STATIC = "static-by-construction"
MEASURED = "measured-by-probe"


@dataclass(frozen=True)
class DesideratumRow:
    name: str
    verdict: str      # full | partial | none | unmeasured
    provenance: str   # static-by-construction | measured-by-probe


@dataclass(frozen=True)
class DesiderataMatrix:
    mode: str
    rows: tuple[DesideratumRow, ...]

    def verdicts(self) -> dict[str, str]:
        return {r.name: r.verdict for r in self.rows}

    def to_dict(self) -> dict:
        return {"mode": self.mode,
                "rows": [{"name": r.name, "verdict": r.verdict,
                          "provenance": r.provenance} for r in self.rows]}


@dataclass
class ScenarioProbes:
    """What a finished scenario run measured, for the desiderata rows that
    are probe-driven rather than structural."""
    attack_stats: list[LinkAttackStats] = field(default_factory=list)
    tax_consistent: bool | None = None
    illicit_blocked: bool | None = None   # every probed route to a flagged
    illicit_leaked: bool | None = None    # recipient denied / any succeeded
    accountless_transacted: bool | None = None
    credentialless: bool | None = None    # the accountless actor also held no credential


def desiderata_report(mode: Mode, probes: ScenarioProbes) -> DesiderataMatrix:
    rows = []
    rows.append(DesideratumRow(DESIDERATA_ROWS[0], "none", STATIC))

    if probes.accountless_transacted is None:
        registration = "unmeasured"
    elif probes.accountless_transacted and (probes.credentialless or False):
        registration = "full"
    else:
        registration = "none"
    rows.append(DesideratumRow(DESIDERATA_ROWS[1], registration, MEASURED))

    if not probes.attack_stats:
        unlink = "unmeasured"
    elif all(abs(s.z_score) <= 3.0 for s in probes.attack_stats):
        unlink = "full"
    elif any(s.z_score > 5.0 for s in probes.attack_stats):
        unlink = "none"
    else:
        unlink = "partial"
    rows.append(DesideratumRow(DESIDERATA_ROWS[2], unlink, MEASURED))

    rows.append(DesideratumRow(DESIDERATA_ROWS[3], "full", STATIC))

    if probes.tax_consistent is None:
        tax = "unmeasured"
    else:
        tax = "full" if probes.tax_consistent else "none"
    rows.append(DesideratumRow(DESIDERATA_ROWS[4], tax, MEASURED))

    if probes.illicit_leaked:
        illicit = "none"
    elif probes.illicit_blocked:
        illicit = "full"
    else:
        illicit = "unmeasured"
    rows.append(DesideratumRow(DESIDERATA_ROWS[5], illicit, MEASURED))

    fiat = "full" if mode is Mode.MEDIATED else "none"
    rows.append(DesideratumRow(DESIDERATA_ROWS[6], fiat, STATIC))
    return DesiderataMatrix(mode.value, tuple(rows))


def render_desiderata(matrix: DesiderataMatrix) -> str:
    width = max(len(r.name) for r in matrix.rows) + 2
    lines = [f"Desiderata ({matrix.mode} mode)",
             "-" * (width + 28)]
    for row in matrix.rows:
        lines.append(f"{row.name:<{width}} {row.verdict:<11} [{row.provenance}]")
    return "\n".join(lines)
