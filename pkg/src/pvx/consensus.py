"""PBFT-style replicated log among institution-operated nodes, on top of
the deterministic simulated network.

Three-phase flow per sequence number: the view's leader (round-robin,
view mod n) sends PrePrepare carrying a block; replicas validate the block
and broadcast Prepare; a node is *prepared* once it holds the pre-prepare
plus 2f matching prepares, after which it broadcasts Commit; 2f+1 matching
commits finalize the block, executed strictly in sequence order.  Timeouts
trigger view changes with exponential backoff; ViewChange messages carry
prepared certificates (block included) so the next leader re-proposes
anything that may have committed somewhere.  Checkpointing is omitted:
logs are desk-scale.

Authentication is a simulation-level node-keyed MAC, deliberately separate
from the privacy layer's signatures.  Scripted faults: crash@t (stop),
mute@t..t' (outbound dropped), equivocate@h (as leader at height h, send
conflicting blocks to the two halves of the replica set and go silent for
that sequence).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

from .group import GroupParams, tagged_hash
from .ledger import (
    LedgerState,
    Transaction,
    apply_block,
    apply_transaction,
    transaction_digest,
    validate_transaction,
)
from .simnet import ClientSubmit, Deliver, FaultScript, SimNetwork, TimerFire

TAG_MAC = "pvx/mac"
TAG_BLOCK = "pvx/block"


class SafetyViolation(RuntimeError):
    """Honest nodes committed conflicting blocks; must never happen with at
    most f faulty replicas."""


@dataclass(frozen=True)
class Block:
    height: int
    txs: tuple[Transaction, ...]
    parent_digest: str
    proposer: str


def block_digest(group: GroupParams, block: Block) -> str:
    parts = [block.height.to_bytes(8, "big"),
             bytes.fromhex(block.parent_digest) if block.parent_digest else b"",
             block.proposer.encode("utf-8"), len(block.txs).to_bytes(4, "big")]
    parts.extend(transaction_digest(group, tx) for tx in block.txs)
    return tagged_hash(TAG_BLOCK, b"".join(parts)).hex()


# -- messages ----------------------------------------------------------------


@dataclass(frozen=True)
class PrePrepare:
    view: int
    seq: int
    block: Block
    digest: str
    sender: str
    mac: bytes = b""


@dataclass(frozen=True)
class Prepare:
    view: int
    seq: int
    digest: str
    sender: str
    mac: bytes = b""


@dataclass(frozen=True)
class Commit:
    view: int
    seq: int
    digest: str
    sender: str
    mac: bytes = b""


@dataclass(frozen=True)
class PreparedCert:
    seq: int
    view: int
    digest: str
    block: Block


@dataclass(frozen=True)
class ViewChange:
    new_view: int
    last_exec: int
    prepared: tuple[PreparedCert, ...]
    sender: str
    mac: bytes = b""


@dataclass(frozen=True)
class NewView:
    view: int
    pre_prepares: tuple[PrePrepare, ...]
    sender: str
    mac: bytes = b""


@dataclass(frozen=True)
class TxForward:
    tx: Transaction
    sender: str
    mac: bytes = b""


@dataclass(frozen=True)
class CatchUp:
    """Commit-certificate transfer for a replica that fell behind: the
    committed block plus 2f+1 authenticated Commit messages proving it.
    Replaces full-PBFT state transfer at desk scale."""
    seq: int
    digest: str
    block: Block
    commits: tuple[Commit, ...]
    sender: str
    mac: bytes = b""


def _mac_payload(msg) -> bytes:
    if isinstance(msg, PrePrepare):
        return b"pp|%d|%d|%s" % (msg.view, msg.seq, msg.digest.encode())
    if isinstance(msg, Prepare):
        return b"p|%d|%d|%s" % (msg.view, msg.seq, msg.digest.encode())
    if isinstance(msg, Commit):
        return b"c|%d|%d|%s" % (msg.view, msg.seq, msg.digest.encode())
    if isinstance(msg, ViewChange):
        certs = b"".join(b"%d:%d:%s" % (c.seq, c.view, c.digest.encode())
                         for c in msg.prepared)
        return b"vc|%d|%d|" % (msg.new_view, msg.last_exec) + certs
    if isinstance(msg, NewView):
        inner = b"".join(_mac_payload(pp) for pp in msg.pre_prepares)
        return b"nv|%d|" % msg.view + inner
    if isinstance(msg, TxForward):
        return b"fw"  # body authenticated by tx digest during validation
    if isinstance(msg, CatchUp):
        inner = b"".join(_mac_payload(c) + c.sender.encode() for c in msg.commits)
        return b"cu|%d|%s|" % (msg.seq, msg.digest.encode()) + inner
    raise TypeError(type(msg))


def compute_mac(secret: bytes, sender: str, msg) -> bytes:
    return tagged_hash(TAG_MAC, secret, sender.encode("utf-8"), _mac_payload(msg))


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    institution_id: str
    replicas: tuple[str, ...]
    f: int
    base_timeout: int = 60_000      # microseconds
    backoff: float = 2.0
    max_timeout: int = 960_000      # backoff ceiling keeps churn bounded
    retransmit_every: int = 25_000

    def __post_init__(self):
        if len(self.replicas) < 3 * self.f + 1:
            raise ValueError(
                f"n={len(self.replicas)} violates n >= 3f+1 for f={self.f}")
        if self.node_id not in self.replicas:
            raise ValueError("node id not in replica set")

    @property
    def n(self) -> int:
        return len(self.replicas)

    def leader_of(self, view: int) -> str:
        return self.replicas[view % self.n]


@dataclass
class Slot:
    view: int
    seq: int
    digest: str | None = None
    block: Block | None = None
    prepares: dict[str, str] = field(default_factory=dict)
    commits: dict[str, str] = field(default_factory=dict)
    commit_msgs: dict[str, Commit] = field(default_factory=dict)
    sent_prepare: bool = False
    sent_commit: bool = False
    prepared: bool = False
    committed: bool = False


@dataclass
class NodeStats:
    view_changes: int = 0
    committed: int = 0
    rejected_byzantine: int = 0


class PBFTNode:
    """Deterministic event-driven replica.  All interaction flows through
    `on_message` / `on_timer` / `on_client_tx`, each returning a list of
    ("send", dst, msg) / ("broadcast", msg) / ("timer", kind, delay)
    actions for the world to route."""

    def __init__(self, config: NodeConfig, genesis: LedgerState,
                 policy_hook: Callable[[Transaction], object] | None,
                 fault: FaultScript = FaultScript()):
        self.cfg = config
        self.ledger = genesis
        self.policy_hook = policy_hook
        self.fault = fault
        self.view = 0
        self.chain: list[Block] = []
        self.mempool: dict[str, Transaction] = {}
        self.slots: dict[int, Slot] = {}
        self.buffered_commits: dict[int, Block] = {}
        self.view_votes: dict[int, dict[str, ViewChange]] = {}
        self.vc_target = 0
        self.timeout = config.base_timeout
        self.progress_token: int | None = None  # armed-timer identity
        self.next_token = 0
        self.retransmit_armed = False
        self.executed_at_arm = 0
        self.stats = NodeStats()
        self.rejections: list[tuple[str, str, str]] = []  # (txid, code, detail)
        self.equivocated: set[int] = set()
        self.committed_ids: set[str] = set()
        self._txid_memo: dict[int, tuple[Transaction, str]] = {}
        self._valid_at: dict[str, int] = {}  # txid -> height when validated

    # -- helpers -------------------------------------------------------------

    @property
    def node_id(self) -> str:
        return self.cfg.node_id

    @property
    def executed(self) -> int:
        return len(self.chain)

    def is_leader(self) -> bool:
        return self.cfg.leader_of(self.view) == self.node_id

    def _slot(self, seq: int) -> Slot:
        slot = self.slots.get(seq)
        if slot is None or slot.view != self.view:
            slot = Slot(self.view, seq)
            self.slots[seq] = slot
        return slot

    def _tx_id(self, tx: Transaction) -> str:
        hit = self._txid_memo.get(id(tx))
        if hit is not None and hit[0] is tx:
            return hit[1]
        txid = transaction_digest(self.ledger.group, tx).hex()
        if len(self._txid_memo) > 8192:
            self._txid_memo.clear()
        self._txid_memo[id(tx)] = (tx, txid)
        return txid

    def _chain_tip_digest(self) -> str:
        if not self.chain:
            return ""
        return block_digest(self.ledger.group, self.chain[-1])

    def _validate_block(self, block: Block) -> bool:
        """Fold-validate: each tx must pass against the running state."""
        if block.height != self.executed + 1:
            return False
        if block.parent_digest != self._chain_tip_digest():
            return False
        state = self.ledger
        for tx in block.txs:
            verdict = validate_transaction(state, tx, self.policy_hook)
            if not verdict.accepted:
                return False
            state = apply_transaction(state, tx)
        return True

    def _arm_progress(self, actions: list) -> None:
        if self.progress_token is None and self._work_pending():
            self.next_token += 1
            self.progress_token = self.next_token
            self.executed_at_arm = self.executed
            actions.append(("timer", f"progress:{self.progress_token}",
                            self.timeout))
        if not self.retransmit_armed and self._work_pending():
            self.retransmit_armed = True
            actions.append(("timer", "retransmit", self.cfg.retransmit_every))

    def _work_pending(self) -> bool:
        return bool(self.mempool) or any(
            not s.committed and s.seq > self.executed and s.digest is not None
            for s in self.slots.values())

    # -- client txs ------------------------------------------------------------

    def on_client_tx(self, tx: Transaction, from_client: bool = True) -> list:
        actions: list = []
        txid = self._tx_id(tx)
        if txid in self.committed_ids:
            return actions  # already final
        if txid not in self.mempool:
            verdict = validate_transaction(self.ledger, tx, self.policy_hook)
            if not verdict.accepted:
                self.rejections.append((txid, verdict.code, verdict.detail))
                return actions
            self.mempool[txid] = tx
            self._valid_at[txid] = self.executed
        if self.is_leader():
            self._maybe_propose(actions)
        elif from_client:
            # relay to every replica so all of them start progress timers;
            # a dead leader then faces a full view-change quorum
            actions.append(("broadcast", TxForward(tx, self.node_id)))
        self._arm_progress(actions)
        return actions

    def _block_txids(self, block: Block) -> set[str]:
        return {self._tx_id(tx) for tx in block.txs}

    # -- proposing -------------------------------------------------------------

    def _select_txs(self) -> tuple[Transaction, ...]:
        chosen: list[Transaction] = []
        state = self.ledger
        stale: list[str] = []
        for txid, tx in self.mempool.items():
            # admission already validated against this exact state for the
            # first pick; later picks see a folded state and re-validate
            if not chosen and self._valid_at.get(txid) == self.executed:
                chosen.append(tx)
                state = apply_transaction(state, tx)
                continue
            verdict = validate_transaction(state, tx, self.policy_hook)
            if verdict.accepted:
                chosen.append(tx)
                state = apply_transaction(state, tx)
            else:
                stale.append(txid)
                self.rejections.append((txid, verdict.code, verdict.detail))
        for txid in stale:
            del self.mempool[txid]
        return tuple(chosen)

    def _maybe_propose(self, actions: list) -> None:
        if not self.is_leader():
            return
        seq = self.executed + 1
        if seq in self.equivocated:
            return  # scripted: stay silent on this sequence after the split
        existing = self.slots.get(seq)
        if existing is not None and existing.view == self.view and (
                existing.digest is not None or existing.committed):
            return
        txs = self._select_txs()
        if not txs:
            return
        slot = self._slot(seq)
        height = seq
        if height in self.fault.equivocate_heights:
            self._equivocate(actions, seq, txs)
            return
        block = Block(height, txs, self._chain_tip_digest(), self.node_id)
        digest = block_digest(self.ledger.group, block)
        pp = PrePrepare(self.view, seq, block, digest, self.node_id)
        slot.digest = digest
        slot.block = block
        actions.append(("broadcast", pp))
        # the leader's pre-prepare stands in for its prepare; with f = 0
        # the quorum is already met
        self._check_prepared(slot, actions)
        self._arm_progress(actions)

    def _equivocate(self, actions: list, seq: int, txs) -> None:
        """Send conflicting proposals to the two halves of the replica set,
        then stay silent for this sequence (worst case for liveness)."""
        self.equivocated.add(seq)
        block_a = Block(seq, txs, self._chain_tip_digest(), self.node_id)
        block_b = Block(seq, txs[:0], self._chain_tip_digest(), self.node_id)
        others = [r for r in self.cfg.replicas if r != self.node_id]
        half = (len(others) + 1) // 2
        for dst in others[:half]:
            pp = PrePrepare(self.view, seq, block_a,
                            block_digest(self.ledger.group, block_a), self.node_id)
            actions.append(("send", dst, pp))
        for dst in others[half:]:
            pp = PrePrepare(self.view, seq, block_b,
                            block_digest(self.ledger.group, block_b), self.node_id)
            actions.append(("send", dst, pp))

    # -- message handling --------------------------------------------------------

    def on_message(self, msg) -> list:
        actions: list = []
        if isinstance(msg, TxForward):
            return self.on_client_tx(msg.tx, from_client=False)
        if isinstance(msg, PrePrepare):
            self._on_preprepare(msg, actions)
        elif isinstance(msg, Prepare):
            self._on_prepare(msg, actions)
        elif isinstance(msg, Commit):
            self._on_commit(msg, actions)
        elif isinstance(msg, ViewChange):
            self._on_view_change(msg, actions)
        elif isinstance(msg, NewView):
            self._on_new_view(msg, actions)
        elif isinstance(msg, CatchUp):
            self._on_catchup(msg, actions)
        else:
            self.stats.rejected_byzantine += 1
        self._arm_progress(actions)
        return actions

    def _on_preprepare(self, msg: PrePrepare, actions: list) -> None:
        if msg.seq in self.equivocated:
            return
        if msg.view != self.view or msg.sender != self.cfg.leader_of(msg.view):
            self.stats.rejected_byzantine += 1
            return
        if msg.digest != block_digest(self.ledger.group, msg.block):
            self.stats.rejected_byzantine += 1
            return
        if msg.seq <= self.executed:
            # already final here; hand the lagging sender a commit proof
            catchup = self._make_catchup(msg.seq)
            if catchup is not None:
                actions.append(("send", msg.sender, catchup))
            return
        if msg.seq != self.executed + 1:
            return  # serial pipeline: future seqs arrive after re-proposal
        slot = self._slot(msg.seq)
        if slot.digest is not None and slot.digest != msg.digest:
            self.stats.rejected_byzantine += 1  # equivocating leader
            return
        if slot.digest is None:
            if not self._validate_block(msg.block):
                self.stats.rejected_byzantine += 1
                return
            slot.digest = msg.digest
            slot.block = msg.block
        if not slot.sent_prepare:
            slot.sent_prepare = True
            slot.prepares[self.node_id] = msg.digest
            actions.append(("broadcast",
                            Prepare(self.view, msg.seq, msg.digest, self.node_id)))
        self._check_prepared(slot, actions)

    def _on_prepare(self, msg: Prepare, actions: list) -> None:
        if msg.view != self.view or msg.seq <= self.executed \
                or msg.seq in self.equivocated:
            return
        slot = self._slot(msg.seq)
        slot.prepares[msg.sender] = msg.digest
        self._check_prepared(slot, actions)

    def _check_prepared(self, slot: Slot, actions: list) -> None:
        if slot.prepared or slot.digest is None:
            return
        matching = sum(1 for d in slot.prepares.values() if d == slot.digest)
        leader = self.cfg.leader_of(self.view)
        if self.node_id == leader:
            # leader's pre-prepare is its prepare; count replica prepares only
            matching = sum(1 for s, d in slot.prepares.items()
                           if d == slot.digest and s != leader)
        if matching >= 2 * self.cfg.f:
            slot.prepared = True
            if not slot.sent_commit:
                slot.sent_commit = True
                slot.commits[self.node_id] = slot.digest
                own = Commit(self.view, slot.seq, slot.digest, self.node_id)
                slot.commit_msgs[self.node_id] = own
                actions.append(("broadcast", own))
            self._check_committed(slot, actions)

    def _on_commit(self, msg: Commit, actions: list) -> None:
        if msg.seq <= self.executed or msg.seq in self.equivocated:
            return
        slot = self._slot(msg.seq) if msg.view == self.view else self.slots.get(msg.seq)
        if slot is None:
            return
        slot.commits[msg.sender] = msg.digest
        slot.commit_msgs[msg.sender] = msg
        self._check_committed(slot, actions)

    def _check_committed(self, slot: Slot, actions: list) -> None:
        if slot.committed or slot.block is None or slot.digest is None:
            return
        matching = sum(1 for d in slot.commits.values() if d == slot.digest)
        if matching >= 2 * self.cfg.f + 1:
            slot.committed = True
            self.buffered_commits[slot.seq] = slot.block
            self._drain_commits(actions)

    def _drain_commits(self, actions: list) -> None:
        while self.executed + 1 in self.buffered_commits:
            block = self.buffered_commits.pop(self.executed + 1)
            self.ledger = apply_block(self.ledger, block.txs, block.height)
            self.chain.append(block)
            self.stats.committed += 1
            for txid in self._block_txids(block):
                self.committed_ids.add(txid)
                self.mempool.pop(txid, None)
            self.timeout = self.cfg.base_timeout  # progress resets backoff
            self.progress_token = None
            self._maybe_propose(actions)
        self._arm_progress(actions)

    # -- catch-up --------------------------------------------------------------

    def _make_catchup(self, seq: int) -> CatchUp | None:
        if not 1 <= seq <= self.executed:
            return None
        block = self.chain[seq - 1]
        digest = block_digest(self.ledger.group, block)
        slot = self.slots.get(seq)
        if slot is None:
            return None
        certs = tuple(c for c in slot.commit_msgs.values()
                      if c.digest == digest and c.seq == seq)
        if len({c.sender for c in certs}) < 2 * self.cfg.f + 1:
            return None
        return CatchUp(seq, digest, block, certs, self.node_id)

    def _on_catchup(self, msg: CatchUp, actions: list) -> None:
        """Inner commit MACs are already verified at the network boundary."""
        if msg.seq != self.executed + 1:
            return
        if block_digest(self.ledger.group, msg.block) != msg.digest:
            self.stats.rejected_byzantine += 1
            return
        senders = {c.sender for c in msg.commits
                   if c.seq == msg.seq and c.digest == msg.digest
                   and c.sender in self.cfg.replicas}
        if len(senders) < 2 * self.cfg.f + 1:
            self.stats.rejected_byzantine += 1
            return
        slot = self._slot(msg.seq)
        slot.digest = msg.digest
        slot.block = msg.block
        slot.committed = True
        self.buffered_commits[msg.seq] = msg.block
        self._drain_commits(actions)

    # -- view changes ---------------------------------------------------------

    def _prepared_certs(self) -> tuple[PreparedCert, ...]:
        certs = []
        for seq in sorted(self.slots):
            slot = self.slots[seq]
            if slot.prepared and seq > self.executed and slot.block is not None:
                certs.append(PreparedCert(seq, slot.view, slot.digest, slot.block))
        return tuple(certs)

    def _start_view_change(self, target: int, actions: list) -> None:
        if target <= self.vc_target:
            return
        self.vc_target = target
        vc = ViewChange(target, self.executed, self._prepared_certs(), self.node_id)
        self.view_votes.setdefault(target, {})[self.node_id] = vc
        actions.append(("broadcast", vc))
        self.stats.view_changes += 1
        self.timeout = min(int(self.timeout * self.cfg.backoff),
                           self.cfg.max_timeout)
        self.progress_token = None
        self._arm_progress(actions)
        self._maybe_lead_new_view(target, actions)

    def _on_view_change(self, msg: ViewChange, actions: list) -> None:
        if msg.last_exec < self.executed:
            # the sender is behind; repair it with commit certificates
            for seq in range(msg.last_exec + 1,
                             min(self.executed, msg.last_exec + 8) + 1):
                catchup = self._make_catchup(seq)
                if catchup is not None:
                    actions.append(("send", msg.sender, catchup))
        if msg.new_view <= self.view:
            return
        votes = self.view_votes.setdefault(msg.new_view, {})
        votes[msg.sender] = msg
        # join rule: f+1 distinct peers asking beyond my target pulls me to
        # the smallest such view, concentrating votes instead of racing
        higher_views = sorted(v for v, vs in self.view_votes.items()
                              if v > self.vc_target and vs)
        senders = {s for v in higher_views for s in self.view_votes[v]}
        if len(senders) >= self.cfg.f + 1:
            self._start_view_change(higher_views[0], actions)
        self._maybe_lead_new_view(msg.new_view, actions)

    def _maybe_lead_new_view(self, target: int, actions: list) -> None:
        if self.cfg.leader_of(target) != self.node_id or target <= self.view:
            return
        votes = self.view_votes.get(target, {})
        if len(votes) < 2 * self.cfg.f + 1:
            return
        # highest-view prepared certificate per sequence across the quorum
        best: dict[int, PreparedCert] = {}
        for vc in votes.values():
            for cert in vc.prepared:
                cur = best.get(cert.seq)
                if cur is None or cert.view > cur.view:
                    best[cert.seq] = cert
        self._enter_view(target)
        pre_prepares = []
        for seq in sorted(best):
            if seq <= self.executed:
                continue
            cert = best[seq]
            pp = PrePrepare(target, seq, cert.block, cert.digest, self.node_id)
            slot = self._slot(seq)
            slot.digest = cert.digest
            slot.block = cert.block
            pre_prepares.append(pp)
        actions.append(("broadcast",
                        NewView(target, tuple(pre_prepares), self.node_id)))
        self._maybe_propose(actions)
        self._arm_progress(actions)

    def _on_new_view(self, msg: NewView, actions: list) -> None:
        if msg.view < self.view or msg.sender != self.cfg.leader_of(msg.view):
            return
        if msg.view > self.view:
            self._enter_view(msg.view)
        for pp in msg.pre_prepares:
            self._on_preprepare(pp, actions)
        self._arm_progress(actions)

    def _enter_view(self, view: int) -> None:
        self.view = view
        self.vc_target = max(self.vc_target, view)
        # uncommitted per-view bookkeeping restarts in the new view
        for seq in list(self.slots):
            if seq > self.executed and not self.slots[seq].committed:
                del self.slots[seq]
        self.view_votes = {v: vs for v, vs in self.view_votes.items() if v > view}

    # -- timers -----------------------------------------------------------------

    def on_timer(self, kind: str) -> list:
        actions: list = []
        if kind.startswith("progress:"):
            token = int(kind.split(":", 1)[1])
            if token != self.progress_token:
                return actions  # superseded arm; ignore the stale fire
            self.progress_token = None
            if self.executed > self.executed_at_arm or not self._work_pending():
                self._arm_progress(actions)
            else:
                self._start_view_change(max(self.view, self.vc_target) + 1, actions)
        elif kind == "retransmit":
            self.retransmit_armed = False
            self._retransmit(actions)
            if self._work_pending():
                self.retransmit_armed = True
                actions.append(("timer", "retransmit", self.cfg.retransmit_every))
        return actions

    def _retransmit(self, actions: list) -> None:
        seq = self.executed + 1
        if seq in self.equivocated:
            return
        slot = self.slots.get(seq)
        if slot and slot.view == self.view and slot.digest is not None:
            if self.is_leader() and slot.block is not None:
                actions.append(("broadcast", PrePrepare(
                    self.view, seq, slot.block, slot.digest, self.node_id)))
            if slot.sent_prepare:
                actions.append(("broadcast", Prepare(
                    self.view, seq, slot.digest, self.node_id)))
            if slot.sent_commit:
                actions.append(("broadcast", Commit(
                    self.view, seq, slot.digest, self.node_id)))
        if self.vc_target > self.view:
            vc = self.view_votes.get(self.vc_target, {}).get(self.node_id)
            if vc is not None:
                actions.append(("broadcast", vc))
        if self.mempool and not self.is_leader():
            leader = self.cfg.leader_of(self.view)
            for tx in self.mempool.values():
                actions.append(("send", leader, TxForward(tx, self.node_id)))
        if self.mempool and self.is_leader():
            self._maybe_propose(actions)


# ------------------------------------------------------------------------------
# the simulated world


class World:
    """Hosts the replica set on a deterministic network."""

    def __init__(self, group: GroupParams, node_ids: list[str],
                 institutions: dict[str, str], f: int, genesis: LedgerState,
                 policy_hook=None, seed: int = 0,
                 delay: tuple[int, int] = (1_000, 5_000), drop: float = 0.0,
                 fault_scripts: dict[str, list[str]] | None = None,
                 base_timeout: int = 60_000,
                 partitions=()):
        from .simnet import merge_faults

        self.group = group
        self.net = SimNetwork(node_ids, seed, delay, drop, partitions)
        self.secret = tagged_hash(TAG_MAC + "/secret", seed.to_bytes(8, "big"))
        replicas = tuple(sorted(node_ids))
        self.nodes: dict[str, PBFTNode] = {}
        scripts = fault_scripts or {}
        for node_id in replicas:
            fault = merge_faults(scripts.get(node_id, []))
            cfg = NodeConfig(node_id, institutions.get(node_id, node_id),
                             replicas, f, base_timeout=base_timeout)
            self.nodes[node_id] = PBFTNode(cfg, genesis, policy_hook, fault)
        self.byzantine = {nid for nid, node in self.nodes.items()
                          if node.fault.equivocate_heights}

    # -- routing ------------------------------------------------------------

    def _dispatch_actions(self, node: PBFTNode, actions: list) -> None:
        t = self.net.time
        for action in actions:
            if action[0] == "timer":
                _, kind, delay = action
                self.net.set_timer(node.node_id, kind, delay)
                continue
            if node.fault.muted(t) or node.fault.crashed(t):
                continue
            if action[0] == "broadcast":
                msg = self._sealed(node, action[1])
                for dst in node.cfg.replicas:
                    if dst != node.node_id:
                        self.net.send(node.node_id, dst, msg)
            elif action[0] == "send":
                _, dst, msg = action
                self.net.send(node.node_id, dst, self._sealed(node, msg))

    def _sealed(self, node: PBFTNode, msg):
        if isinstance(msg, CatchUp):
            # a node may authenticate its own commit when assembling the
            # certificate; everyone else's must arrive pre-sealed
            commits = tuple(
                replace(c, mac=compute_mac(self.secret, c.sender, c))
                if c.sender == node.node_id and not c.mac else c
                for c in msg.commits)
            msg = replace(msg, commits=commits)
        return replace(msg, mac=compute_mac(self.secret, node.node_id, msg))

    def submit_client_tx(self, node_id: str, tx: Transaction, at: int | None = None) -> None:
        if node_id not in self.nodes:
            raise KeyError(f"unknown node {node_id!r}")
        self.net.schedule(self.net.time if at is None else at,
                          ClientSubmit(node_id, tx))

    # -- stepping -----------------------------------------------------------

    def _process(self, event) -> None:
        if isinstance(event, Deliver):
            node = self.nodes[event.dst]
            if node.fault.crashed(self.net.time):
                return
            msg = event.message
            if msg.mac != compute_mac(self.secret, msg.sender, msg):
                node.stats.rejected_byzantine += 1
                return
            if isinstance(msg, CatchUp):
                for inner in msg.commits:
                    if inner.mac != compute_mac(self.secret, inner.sender, inner):
                        node.stats.rejected_byzantine += 1
                        return
            self._dispatch_actions(node, node.on_message(msg))
        elif isinstance(event, TimerFire):
            node = self.nodes[event.node_id]
            if node.fault.crashed(self.net.time):
                return
            self._dispatch_actions(node, node.on_timer(event.kind))
        elif isinstance(event, ClientSubmit):
            node = self.nodes[event.node_id]
            if node.fault.crashed(self.net.time):
                return
            self._dispatch_actions(node, node.on_client_tx(event.tx))

    def step(self, max_events: int | None = None,
             until_time: int | None = None) -> int:
        """Process events in (time, tiebreak) order; returns events handled."""
        handled = 0
        while self.net.pending():
            if max_events is not None and handled >= max_events:
                break
            if until_time is not None and self.net._queue[0][0] > until_time:
                break
            event = self.net.pop()
            self._process(event)
            handled += 1
        return handled

    def run_until(self, predicate, deadline: int) -> bool:
        while self.net.pending() and self.net.time <= deadline:
            if predicate():
                return True
            self.step(max_events=1)
        return predicate()

    # -- inspection -----------------------------------------------------------

    def honest_ids(self) -> list[str]:
        return sorted(set(self.nodes) - self.byzantine)

    def check_safety(self) -> None:
        """Prefix consistency of honest chains, and identical ledger digests
        at equal heights."""
        honest = [self.nodes[nid] for nid in self.honest_ids()]
        for i, a in enumerate(honest):
            for b in honest[i + 1:]:
                common = min(len(a.chain), len(b.chain))
                for h in range(common):
                    da = block_digest(self.group, a.chain[h])
                    db = block_digest(self.group, b.chain[h])
                    if da != db:
                        raise SafetyViolation(
                            f"{a.node_id} and {b.node_id} diverge at height {h + 1}")
        by_height: dict[int, str] = {}
        for node in honest:
            if node.chain:
                digest = node.ledger.digest()
                prior = by_height.get(node.executed)
                if prior is not None and prior != digest:
                    raise SafetyViolation("ledger state divergence")
                by_height[node.executed] = digest

    def committed_txids(self, node_id: str) -> set[str]:
        return set(self.nodes[node_id].committed_ids)

    def tx_final_everywhere(self, tx: Transaction) -> bool:
        txid = transaction_digest(self.group, tx).hex()
        live = [nid for nid in self.honest_ids()
                if not self.nodes[nid].fault.crashed(self.net.time)]
        return all(txid in self.nodes[nid].committed_ids for nid in live)

    def stats_summary(self) -> dict:
        return {
            "time": self.net.time,
            "sent": self.net.stats.sent,
            "delivered": self.net.stats.delivered,
            "dropped": self.net.stats.dropped,
            "by_type": dict(sorted(self.net.stats.by_type.items())),
            "views": {nid: n.view for nid, n in sorted(self.nodes.items())},
            "heights": {nid: n.executed for nid, n in sorted(self.nodes.items())},
        }
