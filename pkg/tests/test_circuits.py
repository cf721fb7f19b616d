from __future__ import annotations

import random
import threading

import pytest

import oracles
from starcert import paillier
from starcert.circuits import (
    CHISQ,
    FTEST,
    PEARSON,
    TTEST,
    SpecError,
    TestSpec,
    chisq_circuit,
    ftest_circuit,
    pearson_circuit,
    reveal_statistic,
    significance_circuit,
    triples_needed,
    ttest_circuit,
)
from starcert.fixedpoint import MagnitudeBudget, encode_int
from starcert.mpc import DegenerateStatistic, run_local

PHI = 20
TEST_SEEDS = {TTEST: 11, PEARSON: 12, FTEST: 13}


def encrypt_columns(pk, columns, scale, seed=0):
    rng = random.Random(seed)
    return [[paillier.encrypt(pk, encode_int(v, scale) % pk.n, rng) for v in col] for col in columns]


def share_columns(party, enc, scale, bound=100):
    budget = MagnitudeBudget(encode_int(bound, scale) + 1)
    return [party.ct_to_shares(col, scale, budget) for col in enc]


def statistic(mpc, pk, test_id, columns, scale=PHI, bound=100, probabilities=None):
    enc = encrypt_columns(pk, columns, 0 if test_id == CHISQ else scale)

    def prog(p):
        if test_id == CHISQ:
            counts = p.ct_to_shares(enc[0], 0, MagnitudeBudget(sum(columns[0])))
            pair = chisq_circuit(p, counts, probabilities, sum(columns[0]), scale)
        else:
            cols = share_columns(p, enc, scale, bound)
            pair = {TTEST: ttest_circuit, PEARSON: pearson_circuit}.get(test_id)
            pair = pair(p, *cols) if pair else ftest_circuit(p, cols)
        return reveal_statistic(p, pair)

    res = mpc(prog)
    assert res[0] == res[1] == res[2]
    return res[0]


# -- TestSpec --------------------------------------------------------------


def test_spec_validation():
    TestSpec(TTEST, ("a", "b"))
    TestSpec(FTEST, ("a", "b", "c"))
    with pytest.raises(SpecError):
        TestSpec(TTEST, ("a",))
    with pytest.raises(SpecError):
        TestSpec(CHISQ, ("g",), (0.5, 0.4))
    with pytest.raises(SpecError):
        TestSpec(CHISQ, ("g",), (1.2, -0.2))
    with pytest.raises(SpecError):
        TestSpec(CHISQ, ("g",), (0.5, 0.5), "greater")
    with pytest.raises(SpecError):
        TestSpec(PEARSON, ("a", "a"))
    with pytest.raises(SpecError):
        TestSpec("ANOVA", ("a", "b"))
    with pytest.raises(SpecError):
        TestSpec(TTEST, ("a", "b"), (0.5, 0.5))


def test_spec_json_and_sigma():
    spec = TestSpec(CHISQ, ("g",), (0.25, 0.75))
    again = TestSpec.from_json(spec.to_json())
    assert again == spec and again.sigma == spec.sigma
    assert spec.sigma.startswith("CHISQ:") and len(spec.spec_hash) == 64
    assert TestSpec(TTEST, ("a", "b")).sigma != TestSpec(TTEST, ("b", "a")).sigma


# -- toy values --------------------------------------------------------------


def test_ttest_toy_pair_at_integer_scale(mpc, pk):
    enc = encrypt_columns(pk, [[1, 2, 3], [2, 4, 6]], 0)

    def prog(p):
        pair = ttest_circuit(p, *share_columns(p, enc, 0))
        return p.reveal([pair.num, pair.den, pair.sign_wire]), reveal_statistic(p, pair).value

    (num, den, sign), t = mpc(prog)[0]
    assert (num, den) == (oracles.TTEST_TOY_NUM, oracles.TTEST_TOY_DEN)
    assert sign < 0
    assert t == pytest.approx(oracles.TTEST_TOY_T, rel=1e-12)


def test_ttest_identical_and_constant(mpc, pk):
    assert statistic(mpc, pk, TTEST, [[1, 5, 9], [1, 5, 9]]).value == 0.0
    with pytest.raises(DegenerateStatistic):
        statistic(mpc, pk, TTEST, [[4, 4, 4], [4, 4, 4]])


def test_pearson_extremes(mpc, pk):
    x = [3, 1, 4, 1, 5, 9, 2, 6]
    assert statistic(mpc, pk, PEARSON, [x, x]).value == pytest.approx(1.0, abs=1e-12)
    down = [10 - v for v in x]
    assert statistic(mpc, pk, PEARSON, [x, down]).value == pytest.approx(-1.0, abs=1e-12)


def test_chisq_toy(mpc, pk):
    # counts are what the circuit sees; the helper encrypts them directly
    assert statistic(mpc, pk, CHISQ, [[5, 5]], probabilities=(0.5, 0.5)).value == 0.0
    got = statistic(mpc, pk, CHISQ, [[8, 2]], probabilities=(0.5, 0.5)).value
    assert got == pytest.approx(oracles.CHISQ_TOY, rel=1e-9)


def test_ftest_toy(mpc, pk):
    assert statistic(mpc, pk, FTEST, [[1, 2, 3], [4, 5, 6]]).value == pytest.approx(oracles.FTEST_TOY, rel=1e-12)
    assert statistic(mpc, pk, FTEST, [[1, 2, 7, 3], [1, 2, 7, 3], [1, 2, 7, 3]]).value == 0.0
    with pytest.raises(SpecError):
        statistic(mpc, pk, FTEST, [[1, 2], [3, 4]])


@pytest.mark.parametrize("test_id", [TTEST, PEARSON, FTEST])
def test_random_columns_match_oracle(mpc, pk, test_id):
    rng = random.Random(TEST_SEEDS[test_id])
    for _ in range(3):
        n = rng.randint(5, 30)
        k = 3 if test_id == FTEST else 2
        cols = [[rng.uniform(-100, 100) for _ in range(n)] for _ in range(k)]
        got = statistic(mpc, pk, test_id, cols).value
        want = {TTEST: oracles.ttest, PEARSON: oracles.pearson}.get(test_id)
        want = want(*cols) if want else oracles.ftest_printed(cols)
        assert got == pytest.approx(want, rel=1e-6)


def test_random_counts_match_oracle(mpc, pk):
    rng = random.Random(2)
    for _ in range(3):
        k = rng.randint(2, 5)
        probs = [rng.uniform(0.5, 2) for _ in range(k)]
        probs = [p / sum(probs) for p in probs]
        probs[-1] = 1 - sum(probs[:-1])
        counts = [rng.randint(0, 40) for _ in range(k)]
        got = statistic(mpc, pk, CHISQ, [counts], probabilities=probs).value
        assert got == pytest.approx(oracles.chisq(counts, probs), rel=1e-6)


# -- significance bit ---------------------------------------------------------


def test_significance_bit_examples(mpc, pk):
    enc = encrypt_columns(pk, [[1, 2, 3, 4], [11, 12, 13, 14], [1, 2, 3, 4]], PHI)

    def prog(p):
        x, y, z = share_columns(p, enc, PHI)
        far = significance_circuit(p, ttest_circuit(p, x, y), 2.0, PHI)
        zero = significance_circuit(p, ttest_circuit(p, x, z), 0.5, PHI)
        return far, zero

    assert mpc(prog)[0] == (1, 0)


def test_significance_bit_boundary_toy(mpc, pk):
    # F = 3.375 on the toy groups: significant at c = 3.3, not at c = 3.4
    enc = encrypt_columns(pk, [[1, 2, 3], [4, 5, 6]], PHI)

    def prog(p):
        cols = share_columns(p, enc, PHI)
        return [significance_circuit(p, ftest_circuit(p, cols), c, PHI) for c in (3.3, 3.375, 3.4)]

    assert mpc(prog)[0] == [1, 1, 0]


def test_significance_rejects_one_sided_squared(mpc, pk):
    enc = encrypt_columns(pk, [[1, 2, 3], [2, 3, 5]], PHI)

    def prog(p):
        return significance_circuit(p, ttest_circuit(p, *share_columns(p, enc, PHI)), 2.0, PHI, "greater")

    with pytest.raises(SpecError):
        mpc(prog)


# -- preprocessing sizing ---------------------------------------------------------


@pytest.mark.parametrize("test_id,bit", [(TTEST, False), (TTEST, True), (PEARSON, False), (PEARSON, True),
                                         (FTEST, False), (FTEST, True), (CHISQ, False), (CHISQ, True)])
def test_triples_needed_is_exact(pk, shares, test_id, bit):
    n, k = 6, (3 if test_id == FTEST else 2)
    rng = random.Random(1)
    if test_id == CHISQ:
        cols = [[2, 3, 1]]
        k = 3
    else:
        cols = [[rng.randint(0, 9) for _ in range(n)] for _ in range(k)]
    enc = encrypt_columns(pk, cols, 0 if test_id == CHISQ else PHI)
    gens = []
    lock = threading.Lock()

    def tracer(pid, gate, label, wires):
        if label == "triple_gen" and pid == 1:
            with lock:
                gens.append(len(wires) // 3)

    def prog(p):
        p.preprocess(triples_needed(test_id, n, k, bit_mode=bit))
        if test_id == CHISQ:
            pair = chisq_circuit(p, p.ct_to_shares(enc[0], 0, MagnitudeBudget(n)), (0.2, 0.3, 0.5), n, PHI)
        else:
            c = share_columns(p, enc, PHI, 10)
            pair = {TTEST: ttest_circuit, PEARSON: pearson_circuit}.get(test_id)
            pair = pair(p, *c) if pair else ftest_circuit(p, c)
        if bit:
            significance_circuit(p, pair, 1.0, PHI)
        else:
            reveal_statistic(p, pair)
        return len(p.triples)

    assert run_local(pk, shares, prog, seed=2, tracer=tracer) == [0, 0, 0]
    assert len(gens) == 1
