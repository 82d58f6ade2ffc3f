import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from arsquad.ars import (
    DirectionBatch,
    NoiseTable,
    NormalizerStats,
    ars_update,
    normalize,
    normalizer_merge,
    normalizer_observe,
    offset_stream,
    policy_action,
    reward_std,
    sample_directions,
    select_top,
)


def observe_all(xs, dim):
    stats = NormalizerStats.empty(dim)
    for x in xs:
        stats = normalizer_observe(stats, x)
    return stats


def two_pass(xs):
    xs = np.asarray(xs)
    mean = xs.sum(axis=0) / len(xs)
    var = ((xs - mean) ** 2).sum(axis=0) / len(xs)
    return mean, var


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))


# -- normalizer ---------------------------------------------------------------


def test_single_observation():
    stats = normalizer_observe(NormalizerStats.empty(3), [3.0, -1.0, 2.0])
    assert stats.count == 1
    assert stats.mean.tolist() == [3.0, -1.0, 2.0]
    assert stats.variance.tolist() == [0.0, 0.0, 0.0]
    assert stats.scale.tolist() == [1e-4] * 3


def test_welford_matches_two_pass():
    rng = np.random.default_rng(11)
    xs = rng.normal(loc=[5.0, -3.0, 0.0, 100.0], scale=[1.0, 0.1, 7.0, 2.0], size=(10_000, 4))
    stats = observe_all(xs, 4)
    mean, var = two_pass(xs)
    assert rel_err(stats.mean, mean) < 1e-10
    assert rel_err(stats.variance, var) < 1e-10


def test_constant_stream_floors_variance():
    stats = observe_all([np.full(2, 4.2)] * 50, 2)
    assert np.all(stats.variance == 0.0)
    np.testing.assert_allclose(normalize([4.2 + 1e-4, 4.2], stats), [1.0, 0.0], rtol=1e-9)


def test_merge_matches_sequential():
    rng = np.random.default_rng(5)
    xs = rng.normal(size=(999, 3)) * [1, 10, 0.01] + [0, 5, -2]
    full = observe_all(xs, 3)
    parts = np.array_split(xs, [100, 101, 640])
    merged = NormalizerStats.empty(3)
    for part in parts:
        merged = normalizer_merge(merged, NormalizerStats.from_batch(part))
    assert merged.count == full.count
    assert rel_err(merged.mean, full.mean) < 1e-9
    assert rel_err(merged.m2, full.m2) < 1e-9


def test_normalize_cases():
    assert np.array_equal(normalize([1.0, -7.0], NormalizerStats.empty(2)), [1.0, -7.0])
    stats = NormalizerStats(4, np.array([1.0, 0.0]), np.array([16.0, 4.0]))
    assert stats.variance.tolist() == [4.0, 1.0]
    assert normalize([3.0, 0.0], stats)[0] == 1.0
    assert np.array_equal(normalize(stats.mean, stats), [0.0, 0.0])


def test_observe_rejects_nonfinite():
    with pytest.raises(ValueError):
        normalizer_observe(NormalizerStats.empty(2), [0.0, np.inf])


# -- policy -------------------------------------------------------------------


def test_zero_policy_zero_action():
    M = np.zeros((4, 12))
    x = np.arange(12.0)
    assert np.array_equal(policy_action(M, np.zeros((4, 12)), 1, 0.1, NormalizerStats.empty(12), x), np.zeros(4))


def test_noise_free_degeneracy():
    rng = np.random.default_rng(0)
    M, d, x = rng.normal(size=(4, 12)), rng.normal(size=(4, 12)), rng.normal(size=12)
    stats = NormalizerStats.from_batch(rng.normal(size=(20, 12)))
    plus = policy_action(M, d, 1, 0.0, stats, x)
    minus = policy_action(M, d, -1, 0.0, stats, x)
    base = policy_action(M, None, 0, 0.1, stats, x)
    assert np.array_equal(plus, minus) and np.array_equal(plus, base)


def test_policy_hand_case():
    stats = NormalizerStats.empty(1)
    plus = policy_action(np.array([[2.0]]), np.array([[1.0]]), 1, 0.1, stats, [3.0])
    minus = policy_action(np.array([[2.0]]), np.array([[1.0]]), -1, 0.1, stats, [3.0])
    assert plus[0] == pytest.approx(6.3, abs=1e-12)
    assert minus[0] == pytest.approx(5.7, abs=1e-12)


def test_policy_linear_in_normalized_state():
    rng = np.random.default_rng(2)
    M, d = rng.normal(size=(4, 12)), rng.normal(size=(4, 12))
    stats = NormalizerStats.from_batch(rng.normal(size=(30, 12)))
    z = rng.normal(size=12)
    # x chosen so normalize(x) = z and normalize(x2) = 2z
    x = stats.mean + stats.scale * z
    x2 = stats.mean + stats.scale * 2 * z
    np.testing.assert_allclose(
        policy_action(M, d, 1, 0.1, stats, x2), 2 * policy_action(M, d, 1, 0.1, stats, x), rtol=1e-12, atol=1e-12
    )


def test_policy_dimension_mismatch():
    with pytest.raises(ValueError):
        policy_action(np.zeros((4, 12)), None, 0, 0.1, NormalizerStats.empty(12), np.zeros(11))
    with pytest.raises(ValueError):
        policy_action(np.zeros((4, 12)), np.zeros((4, 11)), 1, 0.1, NormalizerStats.empty(12), np.zeros(12))


# -- noise table and sampling -------------------------------------------------


@pytest.fixture(scope="module")
def table():
    return NoiseTable.generate(seed=123, size=2**20)


def test_sampling_is_deterministic(table):
    a = sample_directions(table, offset_stream(9, 4), 16, 4, 12)
    b = sample_directions(table, offset_stream(9, 4), 16, 4, 12)
    assert a.offsets == b.offsets
    assert all(np.array_equal(x, y) for x, y in zip(a.deltas, b.deltas))
    assert len(a) == 16 and all(d.shape == (4, 12) for d in a.deltas)


def test_deltas_are_row_major_table_slices(table):
    batch = sample_directions(table, offset_stream(1, 0), 3, 4, 12)
    for off, d in zip(batch.offsets, batch.deltas):
        assert np.array_equal(d.ravel(), table.noise[off : off + 48])
        assert d[1, 0] == table.noise[off + 12]


def test_table_moments(table):
    sample = table.noise[:1_000_000]
    assert abs(sample.mean()) < 0.01
    assert abs(sample.std() - 1.0) < 0.01


def test_table_too_small():
    with pytest.raises(ValueError):
        sample_directions(NoiseTable.generate(0, 10), offset_stream(0, 0), 2, 4, 12)


def test_noise_file_round_trip(tmp_path, table):
    path = tmp_path / "noise.bin"
    table.save(path)
    raw = path.read_bytes()
    assert raw[:8] == b"ARSNOISE"
    assert int.from_bytes(raw[8:16], "little") == len(table)
    assert len(raw) == 16 + 8 * len(table)
    loaded = NoiseTable.load(path)
    assert loaded.noise.tobytes() == table.noise.tobytes()


def test_noise_file_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTNOISE" + bytes(8))
    with pytest.raises(ValueError):
        NoiseTable.load(path)


# -- top directions -----------------------------------------------------------


def batch_with(pairs):
    pairs = np.asarray(pairs, dtype=float)
    deltas = [np.full((1, 1), float(k)) for k in range(len(pairs))]
    return DirectionBatch(deltas, list(range(len(pairs))), pairs[:, 0], pairs[:, 1])


def test_select_top_enumerated():
    top = select_top(batch_with([(1, 5), (4, 2), (3, 3)]), 2)
    assert [t[0] for t in top] == [0, 1]


def test_select_top_all_sorted_and_ties():
    top = select_top(batch_with([(1, 5), (4, 2), (3, 3)]), 3)
    assert [t[0] for t in top] == [0, 1, 2]
    top = select_top(batch_with([(2, 2)] * 5), 3)
    assert [t[0] for t in top] == [0, 1, 2]


def test_select_top_bad_count():
    with pytest.raises(ValueError):
        select_top(batch_with([(1, 1)]), 2)
    with pytest.raises(ValueError):
        select_top(batch_with([(1, 1)]), 0)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=1, max_size=12), st.randoms())
def test_select_top_permutation_invariant(pairs, rnd):
    # attach the original index to each pair, shuffle, and compare as (reward, index) sets
    b = max(1, len(pairs) // 2)
    ref = select_top(batch_with(pairs), b)
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    shuffled = batch_with([pairs[i] for i in perm])
    got = select_top(shuffled, b)
    keys = lambda sel, idx: sorted((-max(p, m), idx(k)) for k, _, p, m in sel)
    # the selected (key, original index) multiset is the same up to tie-breaking order
    ref_keys = [k for k, _ in keys(ref, lambda k: k)]
    got_keys = [k for k, _ in keys(got, lambda k: perm[k])]
    assert ref_keys == got_keys


# -- update -------------------------------------------------------------------


def test_update_hand_case():
    M1, sigma = ars_update(np.zeros((1, 1)), [(np.array([[2.0]]), 3.0, 1.0)], 0.1)
    assert sigma == 1.0
    assert M1[0, 0] == 0.4


def test_equal_rewards_leave_policy_unchanged():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(4, 12))
    top = [(rng.normal(size=(4, 12)), r, r) for r in (1.0, 2.0, 5.0)]
    assert np.array_equal(ars_update(M, top, 0.01)[0], M)
    top = [(rng.normal(size=(4, 12)), 7.0, 7.0) for _ in range(3)]
    M1, sigma = ars_update(M, top, 0.01)
    assert sigma == 0.0 and np.array_equal(M1, M)


def _random_instance(seed, b=4):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(4, 12))
    top = [(rng.normal(size=(4, 12)), float(rng.normal(scale=50)), float(rng.normal(scale=50))) for _ in range(b)]
    return M, top


@pytest.mark.parametrize("seed", range(20))
def test_update_permutation_bit_identical(seed):
    M, top = _random_instance(seed)
    base, _ = ars_update(M, top, 0.01)
    for perm in ([3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]):
        assert np.array_equal(ars_update(M, [top[i] for i in perm], 0.01)[0], base)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("c, d", [(3.0, -1000.0), (0.01, 17.5), (1e4, 2.0)])
def test_update_affine_reward_invariance(seed, c, d):
    M, top = _random_instance(seed)
    base, _ = ars_update(M, top, 0.01)
    moved, _ = ars_update(M, [(delta, c * rp + d, c * rm + d) for delta, rp, rm in top], 0.01)
    assert np.max(np.abs(moved - base)) < 1e-12


def test_update_uniform_gap_reduces_to_average():
    deltas = [np.array([[1.0, 2.0], [0.0, -1.0]]), np.array([[3.0, -2.0], [4.0, 1.0]])]
    gap, beta = 2.0, 0.5
    top = [(deltas[0], 5.0, 5.0 - gap), (deltas[1], 1.0, 1.0 - gap)]
    sigma = np.std([5.0, 3.0, 1.0, -1.0])
    M1, s = ars_update(np.zeros((2, 2)), top, beta)
    assert s == pytest.approx(sigma, rel=1e-15)
    np.testing.assert_allclose(M1, beta * gap / (2 * sigma) * (deltas[0] + deltas[1]), rtol=1e-14)


@given(arrays(np.float64, 6, elements=st.floats(-1e6, 1e6)), st.randoms())
def test_reward_std_order_free(values, rnd):
    vals = values.tolist()
    shuffled = vals[:]
    rnd.shuffle(shuffled)
    assert reward_std(vals) == reward_std(shuffled)
    assert reward_std(vals) == pytest.approx(float(np.std(values)), rel=1e-9, abs=1e-9)
