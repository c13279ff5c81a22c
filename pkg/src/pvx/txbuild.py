"""Client-side transaction construction: wallets holding shielded notes,
pluggable decoy samplers, and builders for every transaction kind.

Builders are deterministic given their scalar stream and sampler RNG, and
produce transactions that pass `validate_transaction` under the same
policy mode.  Shielded spends always add a change output back to the payer
(possibly zero-valued) so output counts stay uniform.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .group import GroupParams, tagged_hash
from .ledger import (
    LedgerState,
    ShieldedInput,
    ShieldedOutput,
    Transaction,
    TransparentInput,
    TransparentOutput,
    TxKind,
    sign_excess,
    transaction_digest,
)
from .pedersen import commit
from .rangeproof import prove_range
from .ringsig import dual_ring_sign
from .stealth import StealthKeypair, derive_stealth_keypair, make_onetime_output


class BuildError(ValueError):
    """The intent cannot be turned into a valid transaction."""


class ScalarStream:
    """Deterministic stream of nonzero scalars (ephemerals, pseudo blindings)."""

    def __init__(self, group: GroupParams, seed: bytes):
        self.group = group
        self.seed = seed
        self.counter = 0

    def next(self) -> int:
        self.counter += 1
        return self.group.nonzero_scalar(
            "pvx/stream", self.seed, self.counter.to_bytes(8, "big"))


@dataclass
class WalletNote:
    output_id: int
    onetime_address: int
    value: int
    blinding: int
    spend_secret: int


@dataclass
class Wallet:
    """Holds an entity's stealth keypair and its unspent shielded notes."""

    entity_id: str
    keypair: StealthKeypair
    notes: list[WalletNote] = field(default_factory=list)

    @classmethod
    def create(cls, group: GroupParams, entity_id: str, seed: bytes) -> "Wallet":
        return cls(entity_id, derive_stealth_keypair(
            group, tagged_hash("pvx/wallet", seed, entity_id.encode("utf-8"))))

    @property
    def address(self) -> tuple[int, int]:
        return self.keypair.address

    def balance(self) -> int:
        return sum(n.value for n in self.notes)

    def add_note(self, note: WalletNote) -> None:
        self.notes.append(note)
        self.notes.sort(key=lambda n: n.output_id)

    def remove_notes(self, output_ids: set[int]) -> None:
        self.notes = [n for n in self.notes if n.output_id not in output_ids]

    def select_notes(self, target: int,
                     exclude: set[int] = frozenset()) -> list[WalletNote]:
        """Oldest-first minimal prefix covering the target.

        Keeps the change below the largest single note, so change outputs
        never outgrow the range-proof width as long as note values stay
        inside it.  `exclude` skips notes already earmarked by another leg
        of the same transaction.
        """
        chosen: list[WalletNote] = []
        total = 0
        for note in self.notes:
            if note.output_id in exclude:
                continue
            if total >= target:
                break
            chosen.append(note)
            total += note.value
        if total < target:
            raise BuildError(
                f"insufficient shielded funds: have {total}, need {target}")
        return chosen


# ---------------------------------------------------------------------------
# decoy samplers


class UniformSampler:
    """Every candidate output is an equally likely decoy.

    `population` must be ascending by output id (creation order)."""

    name = "uniform"

    def sample(self, population: list[int], true_id: int, ring_size: int,
               rng: random.Random) -> list[int]:
        if len(population) - (true_id in population) < ring_size - 1:
            raise BuildError("ring population smaller than requested ring size")
        chosen: list[int] = []
        taken = {true_id}
        while len(chosen) < ring_size - 1:
            pick = population[rng.randrange(len(population))]
            if pick not in taken:
                taken.add(pick)
                chosen.append(pick)
        return chosen


class AgeBiasedSampler:
    """Prefers old outputs, mimicking flawed mixing where decoy selection
    probability is skewed across the anonymity set while real spends are
    not.  Index drawn by inverse transform of weight (n - i)^exponent over
    the ascending-by-age population, so draws are O(1)."""

    name = "age-biased"

    def __init__(self, exponent: float = 2.0):
        self.exponent = exponent

    def sample(self, population: list[int], true_id: int, ring_size: int,
               rng: random.Random) -> list[int]:
        n = len(population)
        if n - (true_id in population) < ring_size - 1:
            raise BuildError("ring population smaller than requested ring size")
        chosen: list[int] = []
        taken = {true_id}
        while len(chosen) < ring_size - 1:
            # t in (0,1] with density t^e picks the age quantile from old
            t = rng.random() ** (1.0 / (self.exponent + 1.0))
            idx = min(n - 1, int(n * (1.0 - t)))
            pick = population[idx]
            if pick not in taken:
                taken.add(pick)
                chosen.append(pick)
        return chosen


SAMPLERS = {"uniform": UniformSampler, "age-biased": AgeBiasedSampler}


def make_sampler(name: str):
    try:
        return SAMPLERS[name]()
    except KeyError:
        raise ValueError(f"unknown decoy sampler {name!r}") from None


# ---------------------------------------------------------------------------
# build results


@dataclass(frozen=True)
class CreatedNote:
    """Opening of a shielded output the builder just made, to be delivered
    to the recipient's wallet once the transaction commits."""
    recipient_id: str
    sout_index: int
    value: int
    blinding: int
    onetime_address: int
    ephemeral_public: int


@dataclass(frozen=True)
class BuildResult:
    tx: Transaction
    created: tuple[CreatedNote, ...]
    consumed: tuple[int, ...]  # payer note output ids, per wallet bookkeeping


def _make_note(group: GroupParams, recipient_id: str,
               address: tuple[int, int], value: int, sout_index: int,
               range_bits: int, stream: ScalarStream) -> tuple[ShieldedOutput, CreatedNote]:
    keys = make_onetime_output(group, address, stream.next())
    blinding = keys.shared_blinding
    out = ShieldedOutput(
        keys.onetime_address, keys.ephemeral_public,
        commit(group, value, blinding),
        prove_range(group, value, blinding, range_bits))
    note = CreatedNote(recipient_id, sout_index, value, blinding,
                       keys.onetime_address, keys.ephemeral_public)
    return out, note


@dataclass(frozen=True)
class _SpendPlan:
    note: WalletNote
    pseudo_blinding: int
    ring_refs: tuple[int, ...]
    true_index: int


def _plan_spends(state: LedgerState, notes: list[WalletNote], sampler,
                 ring_size: int, rng: random.Random,
                 stream: ScalarStream) -> list[_SpendPlan]:
    population = sorted(state.outputs)
    plans = []
    for note in notes:
        decoys = sampler.sample(population, note.output_id, ring_size, rng)
        refs = tuple(sorted(decoys + [note.output_id]))
        plans.append(_SpendPlan(note, stream.next(), refs,
                                refs.index(note.output_id)))
    return plans


def _sign_spends(group: GroupParams, state: LedgerState, digest: bytes,
                 plans: list[_SpendPlan]) -> tuple[ShieldedInput, ...]:
    sins = []
    for plan in plans:
        pseudo = commit(group, plan.note.value, plan.pseudo_blinding)
        members = []
        for ref in plan.ring_refs:
            rec = state.outputs[ref]
            offset = group.mul(rec.commitment.value, group.inv(pseudo.value))
            members.append((rec.onetime_address, offset))
        offset_secret = (plan.note.blinding - plan.pseudo_blinding) % group.q
        sig = dual_ring_sign(group, digest, members, plan.true_index,
                             plan.note.spend_secret, offset_secret)
        sins.append(ShieldedInput(plan.ring_refs, pseudo, sig))
    return tuple(sins)


def _excess_scalar(group: GroupParams, pseudo_blindings, out_blindings) -> int:
    return (sum(pseudo_blindings) - sum(out_blindings)) % group.q


def build_transparent_transfer(group: GroupParams, from_account: str,
                               to_account: str, to_owner: str, amount: int,
                               fee: int = 0) -> BuildResult:
    if amount <= 0:
        raise BuildError("amount must be positive")
    tx = Transaction(
        TxKind.TRANSPARENT_TRANSFER,
        tin=(TransparentInput(from_account, amount + fee),),
        tout=(TransparentOutput(to_account, amount, to_owner),),
        fee=fee)
    digest = transaction_digest(group, tx)
    tx = replace(tx, excess=sign_excess(group, 0, digest))
    return BuildResult(tx, (), ())


def build_issue(group: GroupParams, authority_id: str, to_account: str,
                to_owner: str, amount: int) -> BuildResult:
    if amount <= 0:
        raise BuildError("amount must be positive")
    tx = Transaction(
        TxKind.ISSUE,
        tout=(TransparentOutput(to_account, amount, to_owner),),
        sponsor_id=authority_id)
    return BuildResult(tx, (), ())


def build_shield(group: GroupParams, state: LedgerState, wallet: Wallet,
                 from_account: str, amount: int, stream: ScalarStream,
                 fee: int = 0) -> BuildResult:
    if amount <= 0:
        raise BuildError("amount must be positive")
    if state.balances.get(from_account, 0) < amount + fee:
        raise BuildError("insufficient account balance")
    out, note = _make_note(group, wallet.entity_id, wallet.address, amount,
                           0, state.range_bits, stream)
    tx = Transaction(
        TxKind.SHIELD,
        tin=(TransparentInput(from_account, amount + fee),),
        sout=(out,), fee=fee)
    digest = transaction_digest(group, tx)
    z = (0 - note.blinding) % group.q
    tx = replace(tx, excess=sign_excess(group, z, digest))
    return BuildResult(tx, (note,), ())


def _shielded_spend(group: GroupParams, state: LedgerState, kind: TxKind,
                    wallet: Wallet, spend_total: int, payment_outputs,
                    touts, fee: int, ring_size: int, sampler,
                    rng: random.Random, stream: ScalarStream,
                    creds=(), sponsor=None) -> BuildResult:
    """Common path for unshield / shielded transfer: select notes, ring
    them, add the payer change note, sign everything over the digest.

    `payment_outputs` is a list of (recipient_id, address, value).
    """
    notes = wallet.select_notes(spend_total + fee)
    total_in = sum(n.value for n in notes)
    change = total_in - spend_total - fee
    plans = _plan_spends(state, notes, sampler, ring_size, rng, stream)

    souts, created = [], []
    for recipient_id, address, value in payment_outputs:
        out, note = _make_note(group, recipient_id, address, value,
                               len(souts), state.range_bits, stream)
        souts.append(out)
        created.append(note)
    change_out, change_note = _make_note(
        group, wallet.entity_id, wallet.address, change, len(souts),
        state.range_bits, stream)
    souts.append(change_out)
    created.append(change_note)

    sins = tuple(
        ShieldedInput(plan.ring_refs,
                      commit(group, plan.note.value, plan.pseudo_blinding),
                      _unsigned_marker())
        for plan in plans)
    tx = Transaction(kind, tout=tuple(touts), sin=sins, sout=tuple(souts),
                     fee=fee, credentials=tuple(creds), sponsor_id=sponsor)
    digest = transaction_digest(group, tx)
    signed = _sign_spends(group, state, digest, plans)
    z = _excess_scalar(group, (p.pseudo_blinding for p in plans),
                       (n.blinding for n in created))
    tx = replace(tx, sin=signed, excess=sign_excess(group, z, digest))
    return BuildResult(tx, tuple(created),
                       tuple(n.output_id for n in notes))


class _UnsignedMarker:
    """Placeholder signature while the digest is being computed; the digest
    never covers signatures, so any stand-in works."""
    key_image = 0


_MARKER = _UnsignedMarker()


def _unsigned_marker():
    return _MARKER


def build_unshield(group: GroupParams, state: LedgerState, wallet: Wallet,
                   to_account: str, to_owner: str, amount: int,
                   ring_size: int, sampler, rng: random.Random,
                   stream: ScalarStream, fee: int = 0,
                   credentials: tuple = ()) -> BuildResult:
    if amount <= 0:
        raise BuildError("amount must be positive")
    return _shielded_spend(
        group, state, TxKind.UNSHIELD, wallet, amount, [],
        [TransparentOutput(to_account, amount, to_owner)],
        fee, ring_size, sampler, rng, stream, creds=credentials)


def build_shielded_transfer(group: GroupParams, state: LedgerState,
                            wallet: Wallet, recipient_id: str,
                            recipient_address: tuple[int, int], amount: int,
                            ring_size: int, sampler, rng: random.Random,
                            stream: ScalarStream, fee: int = 0) -> BuildResult:
    if amount <= 0:
        raise BuildError("amount must be positive")
    return _shielded_spend(
        group, state, TxKind.SHIELDED_TRANSFER, wallet, amount,
        [(recipient_id, recipient_address, amount)], [],
        fee, ring_size, sampler, rng, stream)


@dataclass(frozen=True)
class MediatedLeg:
    payer_wallet: Wallet
    payee_id: str
    payee_address: tuple[int, int]
    amount: int


def build_mediated_batch(group: GroupParams, state: LedgerState,
                         intermediary_id: str, legs: list[MediatedLeg],
                         ring_size: int, sampler, rng: random.Random,
                         stream: ScalarStream, fee: int = 0,
                         credential_pools: dict[str, list] | None = None) -> BuildResult:
    """Intermediary-posted swap: every leg's payer ring-signs its inputs,
    outputs pay the payees plus per-payer change.  When credential pools
    are given (mediated mode), one credential is attached per shielded
    input, drawn from the spending payer's pool.  The mediation fee is
    split across legs, remainder on the first."""
    if len(legs) < 2:
        raise BuildError("a mediated batch swaps value between at least two legs")
    fee_shares = [fee // len(legs)] * len(legs)
    fee_shares[0] += fee - sum(fee_shares)

    all_plans, souts, created, creds, consumed = [], [], [], [], []
    earmarked: set[int] = set()
    pool_cursor: dict[str, int] = {}
    for leg, share in zip(legs, fee_shares):
        if leg.amount <= 0:
            raise BuildError("amount must be positive")
        notes = leg.payer_wallet.select_notes(leg.amount + share,
                                              exclude=earmarked)
        earmarked.update(n.output_id for n in notes)
        change = sum(n.value for n in notes) - leg.amount - share
        plans = _plan_spends(state, notes, sampler, ring_size, rng, stream)
        if credential_pools is not None:
            payer = leg.payer_wallet.entity_id
            pool = credential_pools.get(payer, [])
            start = pool_cursor.get(payer, 0)
            if len(pool) - start < len(plans):
                raise BuildError("each spent note needs a credential")
            creds.extend(pool[start:start + len(plans)])
            pool_cursor[payer] = start + len(plans)
        all_plans.extend(plans)
        consumed.extend(n.output_id for n in notes)

        out, note = _make_note(group, leg.payee_id, leg.payee_address,
                               leg.amount, len(souts), state.range_bits, stream)
        souts.append(out)
        created.append(note)
        change_out, change_note = _make_note(
            group, leg.payer_wallet.entity_id, leg.payer_wallet.address,
            change, len(souts), state.range_bits, stream)
        souts.append(change_out)
        created.append(change_note)

    sins = tuple(
        ShieldedInput(plan.ring_refs,
                      commit(group, plan.note.value, plan.pseudo_blinding),
                      _unsigned_marker())
        for plan in all_plans)
    tx = Transaction(TxKind.MEDIATED_BATCH, sin=sins, sout=tuple(souts),
                     fee=fee, credentials=tuple(creds),
                     sponsor_id=intermediary_id)
    digest = transaction_digest(group, tx)
    signed = _sign_spends(group, state, digest, all_plans)
    z = _excess_scalar(group, (p.pseudo_blinding for p in all_plans),
                       (n.blinding for n in created))
    tx = replace(tx, sin=signed, excess=sign_excess(group, z, digest))
    return BuildResult(tx, tuple(created), tuple(consumed))
