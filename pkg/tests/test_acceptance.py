"""Acceptance suite: one test per acceptance criterion, each printing a
pass/fail line with the measured numbers (run with `pytest -s` to watch).

Criteria, tolerances, and budgets:
  1. policy-matrix fidelity          100% of cells, < 1 s
  2. desiderata reproduction         7 rows x 2 modes, probe-driven rows live
  3. conservation                    >= 100 randomized 50-step scenarios,
                                     audit after every block, < 1 min
  4. BFT safety + liveness           (n,f) in {(4,1),(7,2)}, >= 200 seeded
                                     runs, faults <= f, commits under 30%
                                     drop, < 2 min
  5. linkability calibration         ring 11, 10^4 spends: uniform within
                                     3 sigma for every heuristic; age-biased
                                     newest-member z > 5
  6. inflation resistance            10^3 forgeries, 100% rejected with
                                     BalanceProof / RangeProof
  7. double-spend + credential reuse deterministic rejects over the corpus
  8. determinism                     identical digests and byte-identical
                                     reports on same-seed reruns
"""

import glob
import os
import random
import time
from dataclasses import replace

from pvx.group import TEST_GROUP, get_profile
from pvx.consensus import World
from pvx.ledger import (
    LedgerState,
    TxKind,
    transaction_digest,
    validate_transaction,
)
from pvx.observer import make_spend_corpus, run_link_attack
from pvx.pedersen import commit
from pvx.policy import DenyReason, EntityKind, LegClass, Mode, RuleSet, authorize_matrix
from pvx.rangeproof import BitProof, RangeProof, prove_range
from pvx.scenario import (
    emit_report,
    load_scenario,
    random_scenario,
    run_scenario,
)
from pvx.txbuild import (
    AgeBiasedSampler,
    UniformSampler,
    build_shield,
    build_transparent_transfer,
)
from conftest import Harness

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "pvx",
                            "scenarios")

# Table, frozen: the two rightmost comparison columns (filled circle = full,
# half = partial, empty = none) in row order.
EXPECTED_SUPPORTED = ["none", "full", "full", "full", "full", "none", "none"]
EXPECTED_MEDIATED = ["none", "none", "full", "full", "full", "full", "full"]


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


# -- criterion 1 --------------------------------------------------------------


def test_acceptance_1_policy_matrix_fidelity():
    t0 = time.perf_counter()
    checked = 0
    for mode in (Mode.SUPPORTED, Mode.MEDIATED):
        ruleset = RuleSet(mode)
        cells = {(c.tx_kind, c.source_class, c.source_kind, c.dest_class,
                  c.dest_kind): c for c in authorize_matrix(ruleset)}
        checked += len(cells)
        store = LegClass.STORE
        ind = EntityKind.INDIVIDUAL
        direct = cells[(TxKind.SHIELDED_TRANSFER, store, ind, store, ind)]
        if mode is Mode.MEDIATED:
            assert direct.verdict == "deny" and \
                direct.reason is DenyReason.MEDIATION_REQUIRED
        else:
            assert direct.verdict == "allow"
        # business value never reaches a private store, either direction
        for business_cell in (
                cells[(TxKind.SHIELD, LegClass.ACCOUNT,
                       EntityKind.REGISTERED_BUSINESS, store,
                       EntityKind.REGISTERED_BUSINESS)],
                cells[(TxKind.SHIELDED_TRANSFER, store, ind, store,
                       EntityKind.REGISTERED_BUSINESS)]):
            assert business_cell.verdict == "deny"
            assert business_cell.reason is DenyReason.BUSINESS_TO_STORE_FORBIDDEN
        # account-to-account flows stay allowed in both modes
        assert cells[(TxKind.TRANSPARENT_TRANSFER, LegClass.ACCOUNT,
                      EntityKind.REGISTERED_BUSINESS, LegClass.ACCOUNT,
                      ind)].verdict == "allow"
        # the full matrix itself is re-derived and asserted cell by cell in
        # test_policy.test_exhaustive_matrix; here we assert full coverage
        assert len(cells) == 864
    elapsed = time.perf_counter() - t0
    report("1 policy-matrix", elapsed < 1.0 and checked == 1728,
           f"{checked} cells across both modes in {elapsed:.3f}s")


# -- criterion 2 --------------------------------------------------------------


def test_acceptance_2_desiderata_reproduction():
    rows_checked = 0
    for name, expected in (("desiderata_supported", EXPECTED_SUPPORTED),
                           ("desiderata_mediated", EXPECTED_MEDIATED)):
        result = run_scenario(load_scenario(
            os.path.join(SCENARIO_DIR, f"{name}.json")))
        assert not result.mismatches, result.mismatches
        matrix = result.reports["desiderata"]
        got = [row["verdict"] for row in matrix["rows"]]
        assert got == expected, (name, got)
        provenance = {row["name"]: row["provenance"] for row in matrix["rows"]}
        for probed in ("Unlinkable transactions", "Suitable for taxation",
                       "Can block some illicit uses"):
            assert provenance[probed] == "measured-by-probe"
        rows_checked += len(got)
    report("2 desiderata", rows_checked == 14,
           "supported and mediated columns reproduced exactly, "
           "unlinkability/taxation/illicit rows measured live")


# -- criterion 3 --------------------------------------------------------------


def test_acceptance_3_conservation():
    t0 = time.perf_counter()
    runs = 100
    for seed in range(runs):
        result = run_scenario(random_scenario(seed, steps=50))
        # the runner audits after every committed block and raises on any
        # conservation failure; expectation mismatches would surface here
        assert not result.mismatches, (seed, result.mismatches)
    elapsed = time.perf_counter() - t0
    report("3 conservation", elapsed < 60.0,
           f"{runs} randomized 50-step scenarios, audit after every block, "
           f"{elapsed:.1f}s")


# -- criterion 4 --------------------------------------------------------------


def _bft_world(n, f, seed, drop, faults):
    genesis = LedgerState.genesis(get_profile("standard"),
                                  {"a": 10 ** 6, "b": 0}, range_bits=12)
    ids = [f"n{i}" for i in range(n)]
    return World(get_profile("standard"), ids, {i: i for i in ids}, f,
                 genesis, None, seed=seed, drop=drop,
                 fault_scripts=faults, base_timeout=60_000)


def test_acceptance_4_bft_safety_and_liveness():
    t0 = time.perf_counter()
    group = get_profile("standard")
    runs = committed = 0
    for n, f, seed_base in ((4, 1, 0), (7, 2, 1000)):
        fault_menu = [
            {},
            {"n0": ["crash@0"]},                      # leader of view 0
            {f"n{n-1}": ["crash@50000"]},
            {"n0": ["equivocate@1"]},
            {"n1": ["mute@20000..300000"]},
        ]
        if f == 2:
            fault_menu.append({"n0": ["crash@0"], "n1": ["equivocate@2"]})
            fault_menu.append({"n2": ["crash@0"], "n5": ["mute@0..400000"]})
        for i in range(100):
            seed = seed_base + i
            drop = (0.0, 0.1, 0.3)[i % 3]
            faults = fault_menu[i % len(fault_menu)]
            world = _bft_world(n, f, seed, drop, faults)
            txs = [build_transparent_transfer(group, "a", "b", "bob",
                                              10 + j).tx for j in range(2)]
            for j, tx in enumerate(txs):
                world.submit_client_tx(f"n{j % n}", tx, at=j * 5_000)
            deadline_hits = 0
            for attempt in range(40):
                if world.run_until(
                        lambda: all(world.tx_final_everywhere(t) for t in txs),
                        world.net.time + 2_000_000):
                    break
                deadline_hits += 1
                for j, tx in enumerate(txs):
                    world.submit_client_tx(f"n{(attempt + j) % n}", tx)
            world.check_safety()  # raises SafetyViolation on divergence
            runs += 1
            final = all(world.tx_final_everywhere(t) for t in txs)
            assert final, (n, f, seed, drop, faults, world.stats_summary())
            committed += final
    elapsed = time.perf_counter() - t0
    report("4 bft", runs == 200 and committed == 200 and elapsed < 120.0,
           f"{runs} seeded runs over (4,1) and (7,2), crash/equivocation/mute "
           f"faults, drops up to 30%: no divergence, all txs final, "
           f"{elapsed:.1f}s")


# -- criterion 5 --------------------------------------------------------------


def test_acceptance_5_linkability_calibration():
    t0 = time.perf_counter()
    uniform = make_spend_corpus(TEST_GROUP, trials=10_000, ring_size=11,
                                sampler=UniformSampler(), seed=71)
    details = []
    ok = True
    for heuristic in ("uniform-guess", "newest-member", "key-image-graph"):
        stats = run_link_attack(uniform, heuristic)
        details.append(f"{heuristic} z={stats.z_score:+.2f}")
        ok &= abs(stats.z_score) <= 3.0
    biased = make_spend_corpus(TEST_GROUP, trials=10_000, ring_size=11,
                               sampler=AgeBiasedSampler(), seed=72)
    stats = run_link_attack(biased, "newest-member")
    details.append(f"age-biased newest-member z={stats.z_score:+.1f}")
    ok &= stats.z_score > 5.0
    report("5 linkability", ok,
           f"ring 11, 10^4 spends: {', '.join(details)} "
           f"({time.perf_counter() - t0:.1f}s)")


# -- criterion 6 --------------------------------------------------------------


def test_acceptance_6_inflation_resistance():
    t0 = time.perf_counter()
    h = Harness(group=TEST_GROUP, range_bits=8, seed=5)
    from pvx.txbuild import build_issue
    h.land(build_issue(TEST_GROUP, "cb", "alice.acct", "alice", 900))
    g = TEST_GROUP
    rng = random.Random(606)
    attempts = 1000
    outcomes = {"RangeProof": 0, "BalanceProof": 0, "other": 0}
    for i in range(attempts):
        legit = build_shield(g, h.state, h.wallets["alice"], "alice.acct",
                             rng.randint(1, 200), h.stream)
        tx = legit.tx
        so = tx.sout[0]
        variant = i % 4
        if variant == 0:
            # negative value: commit to q-1 under the original proof
            forged = replace(so, commitment=commit(g, g.q - 1,
                                                   rng.randrange(1, g.q)))
            expect = "RangeProof"
        elif variant == 1:
            # overflow: commit to 2^k, graft a donor proof of v mod 2^k
            r = rng.randrange(1, g.q)
            donor = prove_range(g, 0, r, k=8)
            forged = replace(so, commitment=commit(g, 2 ** 8, r),
                             range_proof=donor)
            expect = "RangeProof"
        elif variant == 2:
            # valid proof for the wrong value: inflation through imbalance
            v, r = 255, rng.randrange(1, g.q)
            forged = replace(so, commitment=commit(g, v, r),
                             range_proof=prove_range(g, v, r, k=8))
            expect = "BalanceProof"
        else:
            # negative value with per-bit forgeries spliced in
            r = rng.randrange(1, g.q)
            donor = prove_range(g, 254, r, k=8)
            bits = list(donor.bits)
            j = rng.randrange(len(bits))
            bits[j] = BitProof(g.mul(bits[j].bit_commitment,
                                     g.power(g.h, g.q - 1)),
                               bits[j].c0, bits[j].s0, bits[j].s1)
            forged = replace(so, commitment=commit(g, g.q - 1, r),
                             range_proof=RangeProof(tuple(bits)))
            expect = "RangeProof"
        verdict = validate_transaction(
            h.state, replace(tx, sout=(forged,)))
        assert not verdict.accepted
        if verdict.code == expect:
            outcomes[verdict.code] += 1
        else:
            outcomes["other"] += 1
    ok = outcomes["other"] == 0 and sum(outcomes.values()) == attempts
    report("6 inflation", ok,
           f"{attempts} forgeries rejected: {outcomes['RangeProof']} RangeProof, "
           f"{outcomes['BalanceProof']} BalanceProof, {outcomes['other']} "
           f"miscoded ({time.perf_counter() - t0:.1f}s)")


# -- criterion 7 --------------------------------------------------------------


def test_acceptance_7_double_spend_and_credential_reuse():
    from pvx.scenario import _Runner

    spends = serials = 0
    for path in sorted(glob.glob(os.path.join(SCENARIO_DIR, "*.json"))):
        scenario = load_scenario(path)
        if "attack" in scenario.name:
            continue
        runner = _Runner(scenario)
        runner.run()
        node = runner.reference
        state = node.ledger
        for block in node.chain:
            for tx in block.txs:
                if tx.sin:
                    for _ in range(2):  # deterministic: same verdict twice
                        verdict = validate_transaction(state, tx)
                        assert verdict.code == "DoubleSpend", \
                            (scenario.name, verdict)
                    spends += 1
                if tx.credentials:
                    fresh = build_transparent_transfer(
                        runner.group, sorted(state.balances)[0],
                        sorted(state.balances)[-1], "x", 1)
                    reuse = replace(fresh.tx, credentials=tx.credentials)
                    from pvx.ledger import sign_excess
                    reuse = replace(reuse, excess=sign_excess(
                        runner.group, 0,
                        transaction_digest(runner.group, reuse)))
                    verdict = validate_transaction(state, reuse)
                    assert verdict.code == "CredentialReused", \
                        (scenario.name, verdict)
                    serials += 1
    ok = spends > 10 and serials >= 2
    report("7 replay", ok,
           f"{spends} committed spends replay as DoubleSpend, "
           f"{serials} credential serials refuse reuse, across the corpus")


# -- criterion 8 --------------------------------------------------------------


def test_acceptance_8_determinism():
    t0 = time.perf_counter()
    count = 0
    for path in sorted(glob.glob(os.path.join(SCENARIO_DIR, "*.json"))):
        scenario = load_scenario(path)
        first = run_scenario(scenario)
        second = run_scenario(scenario)
        assert first.final_digest == second.final_digest, scenario.name
        assert emit_report(first, "structured") == \
            emit_report(second, "structured"), scenario.name
        count += 1
    report("8 determinism", count >= 14,
           f"{count} shipped scenarios re-run byte-identically "
           f"({time.perf_counter() - t0:.1f}s)")
