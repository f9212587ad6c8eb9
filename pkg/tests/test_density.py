import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latpat.density import (DensityConfig, gap_midpoints, infer_split_points, infer_thresholds,
                            mean_shift_1d, rpc_thresholds)
from latpat.traces import LatencyInterval, TraceSet


def fixed_point_oracle(values, h, tol=1e-6):
    """Plain per-seed flat-kernel iteration, merge within h/2, nearest-center assignment."""
    values = [float(v) for v in values]
    converged = []
    for x in values:
        for _ in range(10_000):
            window = [v for v in values if abs(v - x) <= h]
            nxt = sum(window) / len(window)
            done = abs(nxt - x) < tol
            x = nxt
            if done:
                break
        converged.append(x)
    groups = []
    for m in sorted(converged):
        if groups and m - groups[-1][-1] < h / 2:
            groups[-1].append(m)
        else:
            groups.append([m])
    centers = [sum(g) / len(g) for g in groups]
    labels = [min(range(len(centers)), key=lambda c: (abs(centers[c] - x), c)) for x in converged]
    used = sorted(set(labels))
    return [centers[c] for c in used], [used.index(c) for c in labels]


class TestMeanShift:
    @pytest.mark.parametrize("kernel", ["flat", "gaussian"])
    def test_two_modes(self, kernel):
        res = mean_shift_1d([1, 1.1, 0.9, 10, 10.2, 9.8], 1.0, kernel)
        assert res.n_clusters == 2
        assert res.centers == pytest.approx([1.0, 10.0], abs=1e-3)
        assert res.assignments.tolist() == [0, 0, 0, 1, 1, 1]
        assert res.cluster_bounds.tolist() == [[0.9, 1.1], [9.8, 10.2]]

    def test_all_equal(self):
        res = mean_shift_1d([4.0] * 7, 1.0)
        assert res.n_clusters == 1 and res.centers[0] == 4.0

    def test_single_value(self):
        assert mean_shift_1d([3.0], 2.0).n_clusters == 1

    def test_uniform_matches_oracle(self):
        values = list(range(100))
        res = mean_shift_1d(values, 5.0)
        centers, labels = fixed_point_oracle(values, 5.0)
        assert res.n_clusters == len(centers)
        assert res.centers == pytest.approx(centers, abs=1e-5)
        assert res.assignments.tolist() == labels

    @given(st.lists(st.integers(0, 60), min_size=1, max_size=40), st.sampled_from([1.0, 2.5, 4.0]))
    def test_random_matches_oracle(self, ints, h):
        values = [float(v) for v in ints]
        res = mean_shift_1d(values, h)
        centers, labels = fixed_point_oracle(values, h)
        assert res.centers == pytest.approx(centers, abs=1e-5)
        assert res.assignments.tolist() == labels

    @given(st.lists(st.floats(0, 500), min_size=1, max_size=60), st.randoms(),
           st.sampled_from(["flat", "gaussian"]))
    def test_permutation_invariant(self, values, rnd, kernel):
        perm = list(range(len(values)))
        rnd.shuffle(perm)
        a = mean_shift_1d(values, 5.0, kernel)
        b = mean_shift_1d([values[i] for i in perm], 5.0, kernel)
        assert np.allclose(a.centers, b.centers, atol=1e-6)
        assert [a.assignments[i] for i in perm] == b.assignments.tolist()

    @given(st.lists(st.floats(0, 500), min_size=1, max_size=60), st.sampled_from(["flat", "gaussian"]))
    def test_clusters_contiguous_and_sorted(self, values, kernel):
        res = mean_shift_1d(values, 4.0, kernel)
        assert np.all(np.diff(res.centers) > 0)
        b = res.cluster_bounds
        assert np.all(b[1:, 0] > b[:-1, 1])  # clusters do not interleave
        assert sorted(set(res.assignments.tolist())) == list(range(res.n_clusters))

    def test_errors(self):
        with pytest.raises(ValueError):
            mean_shift_1d([], 1.0)
        with pytest.raises(ValueError):
            mean_shift_1d([1.0], 0.0)
        with pytest.raises(ValueError):
            mean_shift_1d([1.0, 2.0], 1.0, kernel="epanechnikov")


class TestThresholds:
    def test_bimodal_gap_midpoint(self):
        values = np.concatenate([np.linspace(40, 60, 50), np.linspace(90, 110, 50)])
        cuts = rpc_thresholds(values)
        assert cuts == [40.0, 75.0, math.inf]

    def test_single_cluster(self):
        assert rpc_thresholds([5.0, 5.1, 5.2]) == [5.0, math.inf]

    def test_bandwidth_rule(self):
        cfg = DensityConfig()
        assert cfg.bandwidth([0.0, 0.0]) == 1.0
        assert cfg.bandwidth([0.0, 100.0]) == pytest.approx(15.0)

    @given(st.lists(st.lists(st.floats(0, 300), min_size=3, max_size=3), min_size=1, max_size=40))
    def test_lattice_invariants(self, rows):
        times = np.array(rows)
        ts = TraceSet(("a", "b", "c"), times, times.sum(axis=1))
        for j, cuts in infer_thresholds(ts).items():
            assert all(b > a for a, b in zip(cuts, cuts[1:]))
            assert cuts[0] == times[:, j].min() and cuts[-1] == math.inf
            res = mean_shift_1d(times[:, j], DensityConfig().bandwidth(times[:, j]))
            for t in cuts[1:-1]:
                # a threshold never falls inside a cluster's value range
                assert not any(lo < t < hi for lo, hi in res.cluster_bounds)

    def test_gap_midpoints(self):
        res = mean_shift_1d([1, 1.1, 0.9, 10, 10.2, 9.8], 1.0)
        assert gap_midpoints(res) == pytest.approx([(1.1 + 9.8) / 2])


def latency_set(latencies):
    lat = np.asarray(latencies, dtype=float)
    return TraceSet(("a",), np.zeros((len(lat), 1)), lat)


class TestSplitPoints:
    def test_two_modes_in_interval(self):
        rng = np.random.default_rng(1)
        lat = np.concatenate([rng.normal(250, 20, 800), rng.normal(375, 8, 100),
                              rng.normal(450, 10, 100)])
        interval = LatencyInterval(350, 670)
        splits = infer_split_points(latency_set(lat), interval)
        assert splits[0] == 350 and splits[-1] == 670 and len(splits) == 3
        assert 395 < splits[1] < 430

    def test_unimodal(self):
        rng = np.random.default_rng(2)
        splits = infer_split_points(latency_set(rng.normal(400, 5, 300)), LatencyInterval(350, 670))
        assert splits == [350, 670]

    def test_no_positive(self):
        with pytest.raises(ValueError):
            infer_split_points(latency_set([1.0, 2.0]), LatencyInterval(10, 20))

    def test_scope(self):
        lat = [100.0] * 50 + [400.0] * 50 + [500.0] * 50
        interval = LatencyInterval(300, 600)
        # nominal traffic widens the bandwidth enough to merge the two modes
        assert infer_split_points(latency_set(lat), interval) == [300, 450, 600]
        assert infer_split_points(latency_set(lat), interval, scope="all") == [300, 600]
        with pytest.raises(ValueError):
            infer_split_points(latency_set(lat), interval, scope="negatives")

    @given(st.lists(st.floats(0, 1000), min_size=1, max_size=80), st.floats(0, 900), st.floats(1, 500))
    def test_sorted_and_bounded(self, lat, lo, width):
        interval = LatencyInterval(lo, lo + width)
        if not any(lo <= v < lo + width for v in lat):
            return
        splits = infer_split_points(latency_set(lat), interval)
        assert splits[0] == interval.lo and splits[-1] == interval.hi
        assert all(b > a for a, b in zip(splits, splits[1:]))
