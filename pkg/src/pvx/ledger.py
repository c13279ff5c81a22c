"""Transaction formats, validation, and deterministic state transition for
the two-pool value model: cleartext institutional accounts (the transparent
pool) and commitment-hidden private stores (the shielded pool).

Canonical transaction digest
----------------------------
The digest is SHA-256 (tag "pvx/tx") over a length-prefixed, field-ordered
byte encoding.  Section order: kind, transparent inputs, transparent
outputs, shielded inputs, shielded outputs, fee, credentials, then the
sponsor id (intermediary for mediated batches, issuing authority for
issuance).  Within sections:

* strings are 4-byte big-endian length + UTF-8 bytes,
* amounts, fees and output references are 8-byte big-endian unsigned,
* group elements and scalars use the profile's fixed widths,
* every sequence is preceded by a 4-byte count.

Ring signatures and the excess signature sign this digest, so they are not
part of it; each shielded input's ring references and pseudo commitment
are.  A shielded input's pseudo commitment is a re-blinded commitment to
the spent amount, and its dual-key ring signature proves it opens to the
same value as the (hidden) ring member being consumed.

Balance rule: with netflow = (transparent out + fee - transparent in), the
point  prod(pseudo commitments) * prod(output commitments)^-1 *
commit(netflow, 0)^-1  must equal G^z for a z the excess signature proves
knowledge of.  Transparent-only transactions carry a z = 0 proof, which is
only possible when the cleartext amounts balance exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Callable

from .blindsig import Credential
from .group import GroupParams, tagged_hash
from .pedersen import Commitment, commit, negate_commitment, product
from .rangeproof import RangeProof, verify_range
from .ringsig import DualRingSignature, dual_ring_verify

TAG_TX = "pvx/tx"
TAG_EXCESS = "pvx/excess"
TAG_STATE = "pvx/state"

MAX_AMOUNT = 2 ** 63 - 1  # amounts are 64-bit integer minor units


class TxKind(Enum):
    TRANSPARENT_TRANSFER = "TransparentTransfer"
    SHIELD = "Shield"
    UNSHIELD = "Unshield"
    SHIELDED_TRANSFER = "ShieldedTransfer"
    MEDIATED_BATCH = "MediatedBatch"
    ISSUE = "Issue"


KIND_CODES = {kind: i for i, kind in enumerate(TxKind)}


@dataclass(frozen=True)
class TransparentInput:
    account_id: str
    amount: int


@dataclass(frozen=True)
class TransparentOutput:
    account_id: str
    amount: int
    owner_id: str


@dataclass(frozen=True)
class ShieldedOutput:
    onetime_address: int
    ephemeral_public: int
    commitment: Commitment
    range_proof: RangeProof


@dataclass(frozen=True)
class ShieldedInput:
    ring_refs: tuple[int, ...]  # ledger output ids forming the anonymity set
    pseudo_commitment: Commitment
    signature: DualRingSignature


@dataclass(frozen=True)
class ExcessSignature:
    nonce_point: int
    response: int


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    tin: tuple[TransparentInput, ...] = ()
    tout: tuple[TransparentOutput, ...] = ()
    sin: tuple[ShieldedInput, ...] = ()
    sout: tuple[ShieldedOutput, ...] = ()
    fee: int = 0
    excess: ExcessSignature | None = None
    credentials: tuple[Credential, ...] = ()
    sponsor_id: str | None = None


# ---------------------------------------------------------------------------
# canonical encoding


def _enc_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return len(raw).to_bytes(4, "big") + raw


def _enc_u64(v: int) -> bytes:
    return v.to_bytes(8, "big")


def _enc_rangeproof(group: GroupParams, proof: RangeProof) -> bytes:
    parts = [proof.k.to_bytes(2, "big")]
    for bp in proof.bits:
        parts.append(group.element_to_bytes(bp.bit_commitment))
        parts.append(group.scalar_to_bytes(bp.c0))
        parts.append(group.scalar_to_bytes(bp.s0))
        parts.append(group.scalar_to_bytes(bp.s1))
    return b"".join(parts)


def transaction_digest(group: GroupParams, tx: Transaction) -> bytes:
    parts = [bytes([KIND_CODES[tx.kind]])]
    parts.append(len(tx.tin).to_bytes(4, "big"))
    for ti in tx.tin:
        parts.append(_enc_str(ti.account_id))
        parts.append(_enc_u64(ti.amount))
    parts.append(len(tx.tout).to_bytes(4, "big"))
    for to in tx.tout:
        parts.append(_enc_str(to.account_id))
        parts.append(_enc_u64(to.amount))
        parts.append(_enc_str(to.owner_id))
    parts.append(len(tx.sin).to_bytes(4, "big"))
    for si in tx.sin:
        parts.append(len(si.ring_refs).to_bytes(4, "big"))
        for ref in si.ring_refs:
            parts.append(_enc_u64(ref))
        parts.append(si.pseudo_commitment.to_bytes(group))
    parts.append(len(tx.sout).to_bytes(4, "big"))
    for so in tx.sout:
        parts.append(group.element_to_bytes(so.onetime_address))
        parts.append(group.element_to_bytes(so.ephemeral_public))
        parts.append(so.commitment.to_bytes(group))
        parts.append(_enc_rangeproof(group, so.range_proof))
    parts.append(_enc_u64(tx.fee))
    parts.append(len(tx.credentials).to_bytes(4, "big"))
    for cred in tx.credentials:
        parts.append(_enc_str(cred.attribute))
        parts.append(cred.serial.to_bytes(32, "big"))
        sig_raw = cred.signature.to_bytes((cred.signature.bit_length() + 7) // 8 or 1, "big")
        parts.append(len(sig_raw).to_bytes(4, "big") + sig_raw)
    parts.append(_enc_str(tx.sponsor_id or ""))
    return tagged_hash(TAG_TX, b"".join(parts))


def tx_id(group: GroupParams, tx: Transaction) -> str:
    return transaction_digest(group, tx).hex()


# ---------------------------------------------------------------------------
# excess (balance) signature


def sign_excess(group: GroupParams, z: int, digest: bytes) -> ExcessSignature:
    nonce = group.nonzero_scalar(TAG_EXCESS + "/nonce",
                                 group.scalar_to_bytes(z), digest)
    r_point = group.power(group.g, nonce)
    c = group.hash_to_scalar(TAG_EXCESS, group.element_to_bytes(r_point),
                             group.element_to_bytes(group.power(group.g, z)),
                             digest)
    return ExcessSignature(r_point, (nonce + c * z) % group.q)


def verify_excess(group: GroupParams, excess_point: int, digest: bytes,
                  sig: ExcessSignature) -> bool:
    if not (group.is_element(excess_point) and group.is_element(sig.nonce_point)):
        return False
    c = group.hash_to_scalar(TAG_EXCESS, group.element_to_bytes(sig.nonce_point),
                             group.element_to_bytes(excess_point), digest)
    return group.power(group.g, sig.response) == group.mul(
        sig.nonce_point, group.power(excess_point, c))


# ---------------------------------------------------------------------------
# ledger state


@dataclass(frozen=True)
class OutputRecord:
    output_id: int
    onetime_address: int
    ephemeral_public: int
    commitment: Commitment
    range_proof: RangeProof
    height: int


@dataclass(frozen=True)
class LedgerState:
    group: GroupParams
    range_bits: int
    balances: dict[str, int]
    outputs: dict[int, OutputRecord]   # every shielded output ever created
    onetime_index: dict[int, int]      # one-time address -> output id
    key_images: frozenset[int]
    credential_serials: frozenset[int]
    total_issued: int
    fees_accrued: int
    height: int
    next_output_id: int = 0

    @classmethod
    def genesis(cls, group: GroupParams, accounts: dict[str, int],
                range_bits: int | None = None) -> "LedgerState":
        """Initial state: provisioned accounts, optional genesis balances.

        Genesis balances count as issued supply; later supply changes come
        only from Issue transactions.
        """
        balances = dict(accounts)
        return cls(
            group=group,
            range_bits=group.range_bits if range_bits is None else range_bits,
            balances=balances,
            outputs={},
            onetime_index={},
            key_images=frozenset(),
            credential_serials=frozenset(),
            total_issued=sum(balances.values()),
            fees_accrued=0,
            height=0,
        )

    def digest(self) -> str:
        g = self.group
        parts = [_enc_u64(self.height), _enc_u64(self.total_issued),
                 _enc_u64(self.fees_accrued), _enc_u64(self.next_output_id)]
        for acct in sorted(self.balances):
            parts.append(_enc_str(acct))
            parts.append(_enc_u64(self.balances[acct]))
        for oid in sorted(self.outputs):
            rec = self.outputs[oid]
            parts.append(_enc_u64(oid))
            parts.append(g.element_to_bytes(rec.onetime_address))
            parts.append(g.element_to_bytes(rec.ephemeral_public))
            parts.append(rec.commitment.to_bytes(g))
        for img in sorted(self.key_images):
            parts.append(g.element_to_bytes(img))
        for serial in sorted(self.credential_serials):
            parts.append(serial.to_bytes(32, "big"))
        return tagged_hash(TAG_STATE, b"".join(parts)).hex()


# ---------------------------------------------------------------------------
# validation

PolicyHook = Callable[[Transaction], "object"]


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    code: str | None = None
    detail: str = ""

    @classmethod
    def ok(cls) -> "Verdict":
        return cls(True)

    @classmethod
    def reject(cls, code: str, detail: str = "") -> "Verdict":
        return cls(False, code, detail)


def _shape_error(tx: Transaction) -> str | None:
    k = tx.kind
    if tx.fee < 0 or tx.fee > MAX_AMOUNT:
        return "fee out of range"
    for ti in tx.tin:
        if not 0 <= ti.amount <= MAX_AMOUNT:
            return "input amount out of range"
    for to in tx.tout:
        if not 0 <= to.amount <= MAX_AMOUNT:
            return "output amount out of range"
    if k is TxKind.ISSUE:
        if tx.tin or tx.sin or tx.sout:
            return "issuance carries only transparent outputs"
        if not tx.tout:
            return "issuance needs at least one output"
        if tx.fee != 0:
            return "issuance is fee-free"
        if not tx.sponsor_id:
            return "issuance names its authority"
    elif k is TxKind.TRANSPARENT_TRANSFER:
        if tx.sin or tx.sout:
            return "transparent transfer has no shielded legs"
        if not tx.tin or not tx.tout:
            return "transparent transfer needs inputs and outputs"
    elif k is TxKind.SHIELD:
        if tx.sin or tx.tout:
            return "shield moves account funds into new shielded outputs"
        if not tx.tin or not tx.sout:
            return "shield needs transparent inputs and shielded outputs"
    elif k is TxKind.UNSHIELD:
        if tx.tin:
            return "unshield spends only shielded inputs"
        if not tx.sin or not tx.tout:
            return "unshield needs shielded inputs and transparent outputs"
        if not tx.sout:
            return "unshield carries a change output"
    elif k is TxKind.SHIELDED_TRANSFER:
        if tx.tin or tx.tout:
            return "shielded transfer has no transparent legs"
        if not tx.sin or len(tx.sout) < 2:
            return "shielded transfer needs inputs, payment and change"
    elif k is TxKind.MEDIATED_BATCH:
        if tx.tin or tx.tout:
            return "mediated batch has no transparent legs"
        if len(tx.sin) < 2 or len(tx.sout) < 2:
            return "mediated batch swaps at least two inputs and outputs"
        if not tx.sponsor_id:
            return "mediated batch names its intermediary"
        # credential presence is a policy question: the supported mode
        # admits batches without them
    if k is not TxKind.ISSUE and tx.excess is None:
        return "missing balance proof"
    return None


def excess_point(group: GroupParams, state: LedgerState, tx: Transaction) -> int:
    """The balance remainder that must equal G^z."""
    acc = product(group, (si.pseudo_commitment for si in tx.sin))
    out = product(group, (so.commitment for so in tx.sout))
    netflow = (sum(to.amount for to in tx.tout) + tx.fee
               - sum(ti.amount for ti in tx.tin)) % group.q
    acc = Commitment(group.mul(acc.value, negate_commitment(group, out).value))
    return group.mul(acc.value,
                     negate_commitment(group, commit(group, netflow, 0)).value)


def validate_transaction(state: LedgerState, tx: Transaction,
                         policy_hook: PolicyHook | None = None) -> Verdict:
    """Full acceptance check; each failing clause maps to a distinct code."""
    group = state.group

    shape = _shape_error(tx)
    if shape:
        return Verdict.reject("MalformedTransaction", shape)

    for leg in (*tx.tin, *tx.tout):
        if leg.account_id not in state.balances:
            return Verdict.reject("UnknownAccount", leg.account_id)

    debits: dict[str, int] = {}
    for ti in tx.tin:
        debits[ti.account_id] = debits.get(ti.account_id, 0) + ti.amount
    for acct, total in debits.items():
        if total > state.balances[acct]:
            return Verdict.reject("InsufficientFunds", acct)

    digest = transaction_digest(group, tx)

    # (a) ring signatures over the tx digest
    for si in tx.sin:
        if len(si.ring_refs) != len(set(si.ring_refs)):
            return Verdict.reject("MalformedTransaction", "duplicate ring member")
        members = []
        for ref in si.ring_refs:
            rec = state.outputs.get(ref)
            if rec is None:
                return Verdict.reject("MalformedTransaction",
                                      f"unknown ring member {ref}")
            offset = group.mul(rec.commitment.value,
                               group.inv(si.pseudo_commitment.value))
            members.append((rec.onetime_address, offset))
        if not dual_ring_verify(group, digest, members, si.signature):
            return Verdict.reject("RingSignature")

    # (b) key images fresh and unique in-tx
    images = [si.signature.key_image for si in tx.sin]
    if len(images) != len(set(images)):
        return Verdict.reject("DoubleSpend", "key image repeated in transaction")
    for img in images:
        if img in state.key_images:
            return Verdict.reject("DoubleSpend")

    # one-time addresses are single-use ledger-wide (checked after key
    # images so a full replay reads as the double spend it is)
    seen_onetime = set()
    for so in tx.sout:
        if so.onetime_address in seen_onetime or so.onetime_address in state.onetime_index:
            return Verdict.reject("DuplicateOnetime")
        seen_onetime.add(so.onetime_address)

    # (c) range proofs at the ledger's fixed bit width
    for so in tx.sout:
        if so.range_proof.k != state.range_bits:
            return Verdict.reject("RangeProof", "wrong proof width")
        if not verify_range(group, so.commitment, so.range_proof):
            return Verdict.reject("RangeProof")

    # (d) commitment balance with excess signature
    if tx.kind is not TxKind.ISSUE:
        point = excess_point(group, state, tx)
        if not verify_excess(group, point, digest, tx.excess):
            return Verdict.reject("BalanceProof")

    # (e) policy
    if policy_hook is not None:
        decision = policy_hook(tx)
        if not decision.allowed:
            return Verdict.reject(decision.reason.value)

    # (f) credential serials single-use
    serials = [cred.serial for cred in tx.credentials]
    if len(serials) != len(set(serials)):
        return Verdict.reject("CredentialReused", "serial repeated in transaction")
    for serial in serials:
        if serial in state.credential_serials:
            return Verdict.reject("CredentialReused")

    return Verdict.ok()


# ---------------------------------------------------------------------------
# application


def apply_transaction(state: LedgerState, tx: Transaction) -> LedgerState:
    """State transition for a transaction that already validated."""
    balances = dict(state.balances)
    for ti in tx.tin:
        balances[ti.account_id] -= ti.amount
        if balances[ti.account_id] < 0:
            raise ValueError("apply called on unvalidated transaction")
    for to in tx.tout:
        balances[to.account_id] = balances.get(to.account_id, 0) + to.amount

    outputs = dict(state.outputs)
    onetime_index = dict(state.onetime_index)
    next_id = state.next_output_id
    for so in tx.sout:
        rec = OutputRecord(next_id, so.onetime_address, so.ephemeral_public,
                           so.commitment, so.range_proof, state.height + 1)
        outputs[next_id] = rec
        onetime_index[so.onetime_address] = next_id
        next_id += 1

    issued = state.total_issued
    if tx.kind is TxKind.ISSUE:
        issued += sum(to.amount for to in tx.tout)

    return replace(
        state,
        balances=balances,
        outputs=outputs,
        onetime_index=onetime_index,
        key_images=state.key_images | {si.signature.key_image for si in tx.sin},
        credential_serials=state.credential_serials | {c.serial for c in tx.credentials},
        total_issued=issued,
        fees_accrued=state.fees_accrued + tx.fee,
        next_output_id=next_id,
    )


def apply_block(state: LedgerState, txs: tuple[Transaction, ...] | list[Transaction],
                height: int) -> LedgerState:
    if height != state.height + 1:
        raise ValueError(f"height {height} does not extend {state.height}")
    for tx in txs:
        state = apply_transaction(state, tx)
    return replace(state, height=height)


# ---------------------------------------------------------------------------
# conservation audit (test harness only: requires every opening)


@lru_cache(maxsize=65536)
def _commit_opening(group: GroupParams, v: int, r: int) -> Commitment:
    # pure memo: audits re-open the same unspent outputs block after block
    return commit(group, v, r)


def conservation_audit(state: LedgerState,
                       unspent_openings: dict[int, tuple[int, int]]) -> bool:
    """Value conservation: transparent balances plus opened unspent
    shielded values plus accrued fees must equal the issued supply.

    `unspent_openings` maps output id -> (value, blinding) for every output
    the harness knows to be unspent; openings must match the on-ledger
    commitments.
    """
    shielded_total = 0
    for oid, (v, r) in unspent_openings.items():
        rec = state.outputs.get(oid)
        if rec is None:
            return False
        if _commit_opening(state.group, v % state.group.q,
                           r % state.group.q) != rec.commitment:
            return False
        shielded_total += v
    return (sum(state.balances.values()) + shielded_total
            + state.fees_accrued == state.total_issued)
