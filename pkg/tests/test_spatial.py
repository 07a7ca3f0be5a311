import numpy as np
import pytest
from hypothesis import given, strategies as st

from occurlens.errors import AssignmentError, DegenerateInputError, ParameterError
from occurlens.spatial import (
    Sensor,
    Station,
    StationCatalog,
    assign_nearest,
    fill_daily,
    idw_weights,
    impute_traffic,
    impute_weighted,
    load_catalog,
    seasonal_means,
    weights_from_distances,
    write_catalog,
)

coords = st.floats(-1e5, 1e5, allow_nan=False)


def _catalog(points, travel=None):
    return StationCatalog([Station(str(i + 1), f"s{i + 1}", x, y) for i, (x, y) in enumerate(points)], [], travel)


def _hours(n, start="2024-01-01T00"):
    return np.datetime64(start, "h") + np.arange(n).astype("timedelta64[h]")


class TestAssign:
    def test_coincident(self):
        assert assign_nearest((5.0, 5.0), _catalog([(0, 0), (1, 1), (5, 5)])) == "3"

    def test_tie_goes_to_smallest_id(self):
        # stations 2 and 5 are both 3 m away
        assert assign_nearest((0.0, 0.0), _catalog([(10, 0), (-3, 0), (5, 5), (0, 20), (3, 0)])) == "2"

    def test_brute_force_argmin(self):
        cat = _catalog([(10, 0), (0, 4), (7, 0)])
        assert assign_nearest((0.0, 0.0), cat) == "2"

    def test_travel_time(self):
        cat = _catalog([(0, 0), (1, 1)], {("1", "p"): 300.0, ("2", "p"): 120.0})
        assert assign_nearest("p", cat, "travel_time") == "2"
        with pytest.raises(AssignmentError):
            assign_nearest("q", cat, "travel_time")

    @given(st.lists(st.tuples(coords, coords), min_size=1, max_size=8, unique=True), coords, coords,
           st.floats(0.01, 100))
    def test_scale_invariant(self, pts, px, py, k):
        a = assign_nearest((px, py), _catalog(pts))
        b = assign_nearest((px * k, py * k), _catalog([(x * k, y * k) for x, y in pts]))
        if a != b:
            # only a floating-point near-tie may flip the choice
            d = [np.hypot(x - px, y - py) for x, y in pts]
            assert abs(d[int(a) - 1] - d[int(b) - 1]) <= 1e-9 * max(d)


class TestWeights:
    def test_examples(self):
        assert weights_from_distances([3.0, 3.0], 3) == pytest.approx([0.5, 0.5])
        assert weights_from_distances([7.0], 3) == pytest.approx([1.0])
        w = weights_from_distances([1.0, 2.0], 3)
        assert abs(w[0] - 8 / 9) < 1e-12 and abs(w[1] - 1 / 9) < 1e-12

    def test_station_wrapper(self):
        w = idw_weights(Station("S", "s", 0, 0), [Sensor("a", "weather", 1, 0), Sensor("b", "weather", 0, 2)], 3)
        assert w == pytest.approx([8 / 9, 1 / 9], abs=1e-12)

    def test_colocated_takes_all(self):
        assert weights_from_distances([0.0, 1.0, 2.0], 3).tolist() == [1.0, 0.0, 0.0]

    def test_literal_variant(self):
        # d**s as printed favours the farther sensor
        assert weights_from_distances([1.0, 2.0], 3, inverse=False) == pytest.approx([1 / 9, 8 / 9])

    @pytest.mark.parametrize("s", [0.0, -1.0])
    def test_bad_exponent(self, s):
        with pytest.raises(ParameterError):
            weights_from_distances([1.0, 2.0], s)

    @given(st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=10), st.floats(0.1, 12), st.randoms())
    def test_sum_and_equivariance(self, d, s, rnd):
        w = weights_from_distances(d, s)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        perm = list(range(len(d)))
        rnd.shuffle(perm)
        assert weights_from_distances([d[i] for i in perm], s) == pytest.approx(w[perm], abs=1e-12)

    @given(st.lists(st.floats(1.0, 100.0), min_size=2, max_size=6, unique=True))
    def test_nearest_weight_grows_with_s(self, d):
        k = int(np.argmin(d))
        ws = [weights_from_distances(d, s)[k] for s in (1, 2, 4, 8, 16, 64)]
        assert all(b >= a - 1e-12 for a, b in zip(ws, ws[1:]))


class TestImputeWeighted:
    def test_examples(self):
        v, m = impute_weighted([[10.0], [20.0]], [[False], [False]], [0.5, 0.5])
        assert v[0] == 15 and not m[0]
        v, _ = impute_weighted([[9.0], [18.0]], [[False], [False]], [8 / 9, 1 / 9])
        assert v[0] == pytest.approx(10.0)
        v, _ = impute_weighted([[np.nan], [4.0]], [[True], [False]], [0.7, 0.3])
        assert v[0] == pytest.approx(4.0)

    def test_all_missing_hour_propagates(self):
        v, m = impute_weighted([[1.0, np.nan], [2.0, np.nan]], [[False, True], [False, True]], [0.5, 0.5])
        assert m.tolist() == [False, True] and np.isnan(v[1])

    @given(st.integers(1, 6), st.integers(1, 20), st.integers(0, 10_000))
    def test_equal_weights_is_mean(self, k, n, seed):
        x = np.random.default_rng(seed).normal(size=(k, n))
        v, _ = impute_weighted(x, np.zeros_like(x, dtype=bool), np.full(k, 1 / k))
        assert v == pytest.approx(x.mean(axis=0), abs=1e-12)


class TestTraffic:
    def test_exact_affine_candidate(self, rng):
        n = 24 * 14
        truth = 50 + 30 * np.sin(np.arange(n) / 5) + rng.normal(0, 2, n)
        gaps = rng.random(n) < 0.1
        cand = 2.0 * truth
        fill = impute_traffic(np.where(gaps, np.nan, truth), gaps, [(cand, np.zeros(n, bool))], _hours(n))
        assert fill.source == "rescaled:0"
        assert fill.slope == pytest.approx(0.5, abs=1e-12)
        assert np.max(np.abs(fill.values[gaps] - truth[gaps])) < 1e-9

    def test_low_correlation_uses_seasonal_mean(self, rng):
        n = 24 * 7 * 3
        ts = _hours(n)
        target = rng.normal(100, 10, n)
        gaps = np.zeros(n, bool)
        gaps[-5:] = True
        noise = rng.normal(0, 1, n)
        # correlation about 0.9 with the target, below the 0.95 threshold
        cand = (target - 100) / 10 + 0.48 * noise
        fill = impute_traffic(target, gaps, [(cand, np.zeros(n, bool))], ts)
        assert 0.85 < np.corrcoef(target, cand)[0, 1] < 0.95
        assert fill.source == "seasonal"
        want = seasonal_means(target, gaps, ts)[gaps]
        assert fill.values[gaps] == pytest.approx(want)

    def test_seasonal_cell_mean(self):
        # 2024-01-02 is a Tuesday; three Tuesdays at 08:00, the last one missing
        n = 24 * 7 * 3
        ts = _hours(n)
        target = np.full(n, 1.0)
        idx = [24 + 8, 24 + 8 + 168, 24 + 8 + 336]
        target[idx[0]], target[idx[1]] = 100.0, 120.0
        gaps = np.zeros(n, bool)
        gaps[idx[2]] = True
        fill = impute_traffic(target, gaps, [], ts)
        assert fill.values[idx[2]] == pytest.approx(110.0)

    def test_gap_free_unchanged(self, rng):
        x = rng.normal(size=48)
        fill = impute_traffic(x, np.zeros(48, bool), [(x * 2, np.zeros(48, bool))], _hours(48))
        assert np.array_equal(fill.values, x)

    def test_empty_target(self):
        with pytest.raises(DegenerateInputError):
            impute_traffic([], [], [], _hours(0))


class TestDaily:
    def test_duplicate(self):
        assert fill_daily([42.0]).tolist() == [42.0] * 24

    def test_three_day_fixture(self):
        out = fill_daily([5.0, np.nan, 7.0])
        assert out.tolist() == [5.0] * 48 + [7.0] * 24

    def test_leading_gap(self):
        assert fill_daily([np.nan, 9.0]).tolist() == [9.0] * 48

    def test_errors(self):
        with pytest.raises(DegenerateInputError):
            fill_daily([])
        with pytest.raises(DegenerateInputError):
            fill_daily([np.nan])


def test_catalog_round_trip(tmp_path):
    cat = StationCatalog([Station("1", "One", 0.5, 2.0)], [Sensor("W", "weather", 1.0, 1.0)])
    write_catalog(cat, tmp_path)
    back = load_catalog(tmp_path / "stations.csv", tmp_path / "sensors.csv")
    assert back.stations == cat.stations and back.sensors == cat.sensors
