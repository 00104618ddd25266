import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relarb import (
    JumpSample,
    MarketPath,
    RegionK,
    ReturnHistory,
    bootstrap_paths,
    collect_pairs,
    pairs_from_markov,
    random_walk_sampler,
    recenter_returns,
)

MU0 = np.array([0.1819, 0.8181])


def _history(seed=0, T=120):
    rng = np.random.default_rng(seed)
    lr = rng.normal(0.0, [0.06, 0.04], size=(T, 2))
    return recenter_returns(ReturnHistory.from_log_returns(lr))


def test_region_two_asset():
    K = RegionK.two_asset(0.1, 0.3)
    assert K.contains([0.1, 0.9]) and K.contains([0.3, 0.7])
    assert not K.contains([0.31, 0.69])
    with pytest.raises(ValueError):
        RegionK([0.5, 0.5], [0.4, 0.6])
    with pytest.raises(ValueError, match="empty interior"):
        RegionK([0.6, 0.6], [0.9, 0.9])


def test_recenter_examples():
    h = recenter_returns(ReturnHistory.from_log_returns([[0.1], [-0.3]]))
    assert np.allclose(h.log_returns[:, 0], [0.2, -0.2], rtol=0, atol=1e-15)
    zero = ReturnHistory.from_log_returns([[0.1, 0.2], [-0.1, -0.2]])
    assert np.allclose(recenter_returns(zero).log_returns, zero.log_returns, atol=1e-16)
    rng = np.random.default_rng(1)
    h = recenter_returns(ReturnHistory.from_log_returns(rng.normal(0.01, 0.05, size=(500, 3))))
    assert np.all(np.abs(h.log_returns.mean(axis=0)) <= 1e-14)


def test_return_history_from_prices_and_csv():
    h = ReturnHistory.from_prices([[1.0, 2.0], [1.1, 1.8]])
    assert np.allclose(h.gross, [[1.1, 0.9]])
    buf = io.StringIO("date,A,B\n2020-01,1,2\n2020-02,1.1,1.8\n")
    h2 = ReturnHistory.from_csv(buf)
    assert np.allclose(h2.gross, h.gross) and h2.timestamps == ["2020-02"]
    with pytest.raises(ValueError, match="strictly positive"):
        ReturnHistory([[1.0, -1.0]])


def test_bootstrap_common_returns_never_exit():
    hist = ReturnHistory(np.full((10, 2), 1.05))
    K = RegionK.two_asset(0.1, 0.3)
    paths = bootstrap_paths(hist, MU0, K, n_paths=3, max_len=50, seed=0)
    for p in paths:
        assert p.truncated and len(p) == 50
        assert np.allclose(p.points, MU0, atol=1e-15)


def test_bootstrap_determinism_and_substreams():
    hist, K = _history(), RegionK.two_asset(0.1, 0.3)
    a = bootstrap_paths(hist, MU0, K, n_paths=5, max_len=2000, seed=11)
    b = bootstrap_paths(hist, MU0, K, n_paths=5, max_len=2000, seed=11)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.points, pb.points)
    # path i depends only on (seed, i)
    c = bootstrap_paths(hist, MU0, K, n_paths=2, max_len=2000, seed=11)
    assert np.array_equal(c[1].points, a[1].points)


def test_bootstrap_paths_stay_in_region():
    hist, K = _history(3), RegionK.two_asset(0.1, 0.3)
    paths = bootstrap_paths(hist, MU0, K, n_paths=20, max_len=3000, seed=5)
    exits = 0
    for p in paths:
        assert np.all(p.points[0] == MU0)
        assert np.all(K.contains(p.points))
        assert np.all(np.abs(p.points.sum(axis=1) - 1) <= 1e-12)
        exits += not p.truncated
    assert exits > 0


def test_bootstrap_common_scaling_invariance():
    hist, K = _history(4), RegionK.two_asset(0.1, 0.3)
    rng = np.random.default_rng(9)
    scaled = ReturnHistory(hist.gross * rng.uniform(0.5, 2.0, size=(len(hist.gross), 1)))
    a = bootstrap_paths(hist, MU0, K, 4, 500, seed=2)
    b = bootstrap_paths(scaled, MU0, K, 4, 500, seed=2)
    for pa, pb in zip(a, b):
        assert len(pa) == len(pb)
        assert np.allclose(pa.points, pb.points, rtol=0, atol=1e-13)


def test_bootstrap_rejects_start_outside():
    with pytest.raises(ValueError, match="not in the region"):
        bootstrap_paths(_history(), [0.5, 0.5], RegionK.two_asset(0.1, 0.3), 1, 10, 0)


def test_collect_pairs_counts():
    path = MarketPath([[0.2, 0.8], [0.21, 0.79], [0.22, 0.78]])
    s = collect_pairs([path])
    assert len(s) == 2
    assert np.allclose(s.weights, 0.5)
    assert np.allclose(s.p[1], [0.21, 0.79]) and np.allclose(s.q[1], [0.22, 0.78])
    with pytest.raises(ValueError, match="no jumps observed"):
        collect_pairs([MarketPath([[0.2, 0.8]])])


def test_collect_pairs_rounding():
    s = collect_pairs([[[0.123456, 0.3, 0.576544], [0.2, 0.2004, 0.5996]]], rounding_decimals=3)
    assert np.array_equal(s.p[0], [0.123, 0.3, 1.0 - 0.123 - 0.3])
    assert np.all(np.abs(s.p.sum(axis=1) - 1) <= 1e-12)
    assert s.provenance["rounding_decimals"] == 3


def test_collect_pairs_region_recheck():
    K = RegionK.two_asset(0.1, 0.3)
    s = collect_pairs([[[0.2, 0.8], [0.3004, 0.6996], [0.2, 0.8]]], 3, region=K)
    assert len(s) == 2
    with pytest.raises(ValueError, match="no jumps"):
        collect_pairs([[[0.2, 0.8], [0.3006, 0.6994]]], 3, region=K)


def test_bootstrap_pairs_in_region_at_scale():
    hist, K = _history(7), RegionK.two_asset(0.1, 0.3)
    paths = bootstrap_paths(hist, MU0, K, n_paths=50, max_len=5000, seed=7)
    s = collect_pairs(paths, 3, region=K)
    assert np.all(K.contains(s.p)) and np.all(K.contains(s.q))
    # the same order of magnitude as the reference case study (thousands of pairs)
    assert 1_000 <= len(s) <= 250_000
    assert s.provenance["seed"] == 7


def test_jump_sample_csv_round_trip(tmp_path):
    hist, K = _history(2), RegionK.two_asset(0.1, 0.3)
    s = collect_pairs(bootstrap_paths(hist, MU0, K, 5, 500, 1), 3, region=K)
    f = tmp_path / "s.csv"
    s.to_csv(f, comment="provenance")
    t = JumpSample.from_csv(f)
    assert np.array_equal(t.p, s.p) and np.array_equal(t.q, s.q) and np.array_equal(t.weights, s.weights)


def test_jump_sample_csv_errors():
    with pytest.raises(ValueError, match="line 1: expected header"):
        JumpSample.from_csv(io.StringIO("a,b,c\n"))
    with pytest.raises(ValueError, match="line 3: non-numeric"):
        JumpSample.from_csv(io.StringIO("p_1,p_2,q_1,q_2,weight\n0.2,0.8,0.2,0.8,0.5\nx,0.8,0.2,0.8,0.5\n"))


def test_jump_sample_validation():
    with pytest.raises(ValueError, match="not 1"):
        JumpSample([[0.5, 0.5]], [[0.5, 0.5]], [0.5])
    with pytest.raises(ValueError, match="different shapes"):
        JumpSample([[0.5, 0.5]], [[0.2, 0.3, 0.5]])


def test_markov_identity_sampler_is_degenerate():
    s = pairs_from_markov(lambda p, rng: p, [0.3, 0.7], burn_in=5, N=10, seed=0)
    assert len(s) == 10 and s.degenerate and s.provenance["degenerate"]


def test_markov_alternating_sampler():
    a, b = np.array([0.2, 0.8]), np.array([0.25, 0.75])
    s = pairs_from_markov(lambda p, rng: b if np.allclose(p, a) else a, a, burn_in=0, N=6, seed=0)
    for k in range(6):
        p, q = (a, b) if k % 2 == 0 else (b, a)
        assert np.array_equal(s.p[k], p) and np.array_equal(s.q[k], q)
    assert np.allclose(s.weights, 1 / 6)


def test_markov_sampler_leaving_simplex():
    with pytest.raises(ValueError, match="step 3"):
        pairs_from_markov(lambda p, rng: p - [0.1, -0.1], [0.25, 0.75], burn_in=0, N=5, seed=0)


def test_random_walk_frequencies():
    # a reflected symmetric walk has the uniform stationary law on its lattice
    s = pairs_from_markov(random_walk_sampler(0.01, 0.1, 0.3), [0.2, 0.8], burn_in=100, N=60000, seed=3)
    vals, counts = np.unique(np.round(s.p[:, 0], 2), return_counts=True)
    assert len(vals) == 21
    freq = counts / counts.sum()
    assert np.max(np.abs(freq - 1 / 21)) < 0.02
    again = pairs_from_markov(random_walk_sampler(0.01, 0.1, 0.3), [0.2, 0.8], burn_in=100, N=60000, seed=3)
    assert np.array_equal(again.p, s.p)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_rounded_pairs_stay_on_simplex(seed, decimals):
    rng = np.random.default_rng(seed)
    pts = 0.05 + 0.85 * rng.dirichlet(np.ones(3), size=20)
    try:
        s = collect_pairs([pts], rounding_decimals=decimals)
    except ValueError:
        return
    assert np.all(np.abs(s.p.sum(axis=1) - 1) <= 1e-12)
    assert np.all(s.p > 0)
