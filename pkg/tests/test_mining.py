import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from sixprobe.mining import (
    WILDCARD,
    PatternMiner,
    build_dhc_tree,
    mine_patterns,
    nibble_entropy,
    pattern_from_string,
    read_pattern_file,
    tail_nibble,
    write_pattern_file,
)

tails_strategy = st.sets(
    st.integers(min_value=0, max_value=(1 << 80) - 1), min_size=1, max_size=64
)


def test_entropy_constant_nibble_is_zero():
    assert nibble_entropy([0, 0, 0], 19) == 0.0


def test_entropy_uniform_sixteen_values_is_four_bits():
    tails = list(range(16))  # nibble 19 takes every value once
    assert nibble_entropy(tails, 19) == pytest.approx(4.0, abs=1e-12)


def test_entropy_three_one_histogram():
    tails = [0xA, 0xA, 0xA, 0xB]
    # frozen oracle: -(3/4)log2(3/4) - (1/4)log2(1/4)
    assert nibble_entropy(tails, 19) == pytest.approx(
        0.8112781244591328, abs=1e-9
    )


def test_entropy_index_validation():
    with pytest.raises(ValueError):
        nibble_entropy([0], 20)
    with pytest.raises(ValueError):
        nibble_entropy([], 0)


def test_single_tail_gives_exact_pattern():
    tail = int("00020000000000000005", 16)
    patterns = mine_patterns({tail})
    assert len(patterns) == 1
    assert patterns[0].wildcard_count == 0
    assert patterns[0].matches(tail)
    assert str(patterns[0]) == "0002:0000:0000:0000:0005"


def test_sixteen_value_nibble_summarized_as_single_wildcard():
    # 16 tails identical except nibble 19; a threshold above the cluster
    # size keeps them in one leaf, which wildcards only that nibble
    tails = {0xA0 | v for v in range(16)}
    patterns = mine_patterns(tails, min_cluster=17)
    assert len(patterns) == 1
    cells = patterns[0].cells
    assert cells[19] is WILDCARD
    assert all(c is not WILDCARD for c in cells[:19])


def test_even_split_on_unique_varying_nibble():
    # 8 tails with nibble 0 == 0 and 8 with nibble 0 == 1, constant elsewhere
    base = 0x5
    tails = set()
    for top in (0, 1):
        for k in range(8):
            tails.add((top << 76) | (k << 40) | base)
    patterns = mine_patterns(tails, min_cluster=4)
    tops = {p.cells[0] for p in patterns}
    assert {0, 1} <= tops or all(
        p.cells[0] in (0, 1) for p in patterns
    )
    # the first split happened on nibble 0
    tree = build_dhc_tree(tails, min_cluster=4)
    assert tree.split_nibble == 0


def test_split_chooses_minimum_entropy_nibble():
    rnd = random.Random(5)
    tails = set()
    # nibble 19 nearly constant (low entropy), nibble 0 uniform (high)
    for _ in range(64):
        low = 0 if rnd.random() < 0.9 else 1
        tails.add((rnd.getrandbits(4) << 76) | low)
    tree = build_dhc_tree(tails, min_cluster=8)
    non_constant = []
    for i in range(20):
        values = {tail_nibble(t, i) for t in tree.members}
        if len(values) > 1:
            non_constant.append(i)
    chosen = nibble_entropy(tree.members, tree.split_nibble)
    assert all(
        chosen <= nibble_entropy(tree.members, i) + 1e-12 for i in non_constant
    )


@given(tails_strategy)
@settings(max_examples=100, deadline=None)
def test_partition_property(tails):
    patterns = mine_patterns(tails, min_cluster=4)
    covered = []
    for p in patterns:
        covered.extend(p.seeds)
    assert len(covered) == len(set(covered))  # disjoint
    assert set(covered) == tails  # exact cover
    for p in patterns:
        assert all(p.matches(t) for t in p.seeds)  # matching soundness


def test_determinism():
    rnd = random.Random(1)
    tails = {rnd.getrandbits(80) for _ in range(500)}
    a = mine_patterns(tails, min_cluster=8)
    b = mine_patterns(set(tails), min_cluster=8)
    assert [str(p) for p in a] == [str(p) for p in b]


def test_empty_input_is_error():
    with pytest.raises(ValueError):
        mine_patterns(set())
    with pytest.raises(ValueError):
        build_dhc_tree(set(), min_cluster=0)


def test_pattern_string_roundtrip():
    p = pattern_from_string("000*:0000:0000:000*:****")
    assert str(p) == "000*:0000:0000:000*:****"
    assert p.wildcard_count == 6
    assert p.space_size == 16**6
    with pytest.raises(ValueError):
        pattern_from_string("0000")


def test_pattern_file_roundtrip(tmp_path):
    rnd = random.Random(2)
    tails = {rnd.getrandbits(80) for _ in range(100)}
    patterns = mine_patterns(tails, min_cluster=8)
    path = tmp_path / "patterns.txt"
    write_pattern_file(path, patterns, header_lines=["test"])
    back = read_pattern_file(path)
    assert [str(p) for p in back] == [str(p) for p in patterns]


def test_estimator_fit_predict_and_clone():
    rnd = random.Random(9)
    tails = [rnd.getrandbits(80) for _ in range(200)]
    miner = PatternMiner(min_cluster=8)
    assert miner.get_params() == {"min_cluster": 8}
    fitted = miner.fit(tails)
    assert fitted is miner
    assert miner.n_leaves_ == len(miner.patterns_)
    labels = miner.predict(tails)
    assert all(lab >= 0 for lab in labels)
    for tail, lab in zip(tails, labels):
        assert miner.patterns_[lab].matches(tail)
    fresh = clone(miner)
    assert not hasattr(fresh, "patterns_")
    with pytest.raises(RuntimeError):
        PatternMiner().predict(tails)


def test_estimator_accepts_hex_strings():
    miner = PatternMiner(min_cluster=4).fit(["0002:0000:0000:0000:0005"])
    assert miner.n_leaves_ == 1
    assert miner.predict([int("00020000000000000005", 16)]) == [0]
