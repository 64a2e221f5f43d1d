import numpy as np
import pytest

from cislunar_ssa import demand as dm
from cislunar_ssa.dynamics import EARTH_MOON, find_libration_points
from cislunar_ssa.errors import ConfigError, DimensionMismatch, ParseError


class TestSoiGrid:
    def test_default_count(self):
        assert dm.soi_grid(steps=4).q == 120

    def test_single_point_at_box_center(self):
        dset = dm.soi_grid(steps=2, counts=(1, 1, 1))
        l1, l2 = find_libration_points()
        center = 0.5 * (l1 + l2) * EARTH_MOON.length_unit_km
        assert dset.q == 1
        assert dset.targets_km[0] == pytest.approx([center, 0.0, 0.0])

    def test_symmetric_in_y_and_z(self):
        pts = dm.soi_grid(steps=1).targets_km
        as_set = {tuple(np.round(p, 6)) for p in pts}
        for sign_y, sign_z in ((-1, 1), (1, -1), (-1, -1)):
            mirrored = {tuple(np.round(p * [1, sign_y, sign_z], 6)) for p in pts}
            assert mirrored == as_set

    def test_static_demand_all_ones(self):
        dset = dm.soi_grid(steps=7)
        assert dset.demand.sum() == 7 * dset.q

    def test_targets_inside_declared_box(self):
        dset = dm.soi_grid(steps=1)
        l1, l2 = find_libration_points()
        lu = EARTH_MOON.length_unit_km
        xs, ys, zs = dset.targets_km.T
        assert xs.min() >= l1 * lu - 1e-6 and xs.max() <= l2 * lu + 1e-6
        half = dm.SOI_WIDTH_KM / 2.0
        assert np.abs(ys).max() <= half + 1e-6
        assert np.abs(zs).max() <= half + 1e-6


class TestConeOfShame:
    def test_default_count(self):
        assert dm.cone_of_shame(steps=2).q == 304

    def test_axis_only(self):
        dset = dm.cone_of_shame(steps=1, counts=(10, 0, 0))
        assert dset.q == 10
        assert np.all(dset.targets_km[:, 1:] == 0.0)

    def test_all_points_within_half_angle(self):
        dset = dm.cone_of_shame(steps=1)
        earth_x = -EARTH_MOON.mu * EARTH_MOON.length_unit_km
        rel = dset.targets_km - [earth_x, 0.0, 0.0]
        axial = rel[:, 0]
        lateral = np.linalg.norm(rel[:, 1:], axis=1)
        angles = np.degrees(np.arctan2(lateral, axial))
        assert np.all(angles <= 15.0 + 1e-9)

    def test_inner_radius_beyond_l2_rejected(self):
        with pytest.raises(ConfigError):
            dm.cone_of_shame(steps=1, inner_radius_km=5.0e5)


class TestLetWindow:
    def test_default_count(self):
        assert dm.let_window().shape == (675, 3)

    def test_single_point_at_l2(self):
        pts = dm.let_window(counts=(1, 1, 1))
        _, l2 = find_libration_points()
        assert pts[0] == pytest.approx([l2 * EARTH_MOON.length_unit_km, 0.0, 0.0])

    def test_bounding_box_equals_spans(self):
        pts = dm.let_window()
        extents = pts.max(axis=0) - pts.min(axis=0)
        assert extents == pytest.approx([2.0e4, 1.0e5, 1.0e5], abs=1e-9)


class TestSynthesizedDemand:
    def test_all_ones_pattern_is_static(self):
        targets = dm.let_window(counts=(2, 2, 1))
        pattern = np.ones((60, 4), dtype=bool)
        dset = dm.synthesize_let_demand(targets, steps=120, pattern=pattern)
        assert dset.demand.all()

    def test_monthly_repetition(self):
        targets = dm.let_window(counts=(2, 2, 2))
        pattern = dm.monthly_pattern(q=8, density=0.4, seed=3)
        dset = dm.synthesize_let_demand(targets, steps=240, pattern=pattern)
        assert np.array_equal(dset.demand[:60], dset.demand[60:120])
        assert np.array_equal(dset.demand[:60], dset.demand[180:240])

    def test_seeded_density(self):
        pattern = dm.monthly_pattern(q=675, density=0.3, seed=11)
        assert pattern.mean() == pytest.approx(0.3, abs=0.02)

    def test_period_must_divide_horizon(self):
        targets = dm.let_window(counts=(1, 2, 1))
        pattern = np.ones((60, 2), dtype=bool)
        with pytest.raises(ConfigError):
            dm.synthesize_let_demand(targets, steps=100, pattern=pattern)

    def test_same_seed_reproducible(self):
        a = dm.monthly_pattern(q=30, density=0.25, seed=42)
        b = dm.monthly_pattern(q=30, density=0.25, seed=42)
        assert np.array_equal(a, b)


class TestDemandFiles:
    def test_round_trip_soi(self, tmp_path):
        dset = dm.soi_grid(steps=5)
        path = tmp_path / "soi.demand"
        dm.save_demand(dset, path)
        assert dm.load_demand(path) == dset

    def test_round_trip_dynamic(self, tmp_path):
        targets = dm.let_window(counts=(2, 2, 1))
        pattern = dm.monthly_pattern(q=4, density=0.5, seed=9, period=6)
        dset = dm.synthesize_let_demand(targets, steps=12, pattern=pattern)
        path = tmp_path / "let.demand"
        dm.save_demand(dset, path)
        assert dm.load_demand(path) == dset

    def test_truncated_file(self, tmp_path):
        dset = dm.soi_grid(steps=3, counts=(2, 1, 1))
        path = tmp_path / "cut.demand"
        dm.save_demand(dset, path)
        content = path.read_text().splitlines()
        path.write_text("\n".join(content[:5]))
        with pytest.raises((ParseError, DimensionMismatch)):
            dm.load_demand(path)

    def test_row_count_mismatch(self, tmp_path):
        dset = dm.soi_grid(steps=3, counts=(2, 1, 1))
        path = tmp_path / "bad.demand"
        dm.save_demand(dset, path)
        lines = path.read_text().splitlines()
        del lines[-2]  # drop one demand row
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DimensionMismatch):
            dm.load_demand(path)

    def test_bad_characters_in_demand(self, tmp_path):
        dset = dm.soi_grid(steps=2, counts=(2, 1, 1))
        path = tmp_path / "chars.demand"
        dm.save_demand(dset, path)
        text = path.read_text().replace("11", "1x", 1)
        path.write_text(text)
        with pytest.raises(ParseError):
            dm.load_demand(path)

    def test_never_demanded_target_rejected(self):
        with pytest.raises(ConfigError):
            dm.DemandSet(targets_km=np.zeros((2, 3)),
                         demand=np.array([[True, False], [True, False]]))

    def test_round_trip_random_positions(self):
        # bit-exactness must survive arbitrary float coordinates
        from hypothesis import given, settings
        from hypothesis import strategies as st
        import tempfile

        coords = st.floats(min_value=-5e8, max_value=5e8,
                           allow_nan=False, allow_subnormal=False)

        @given(st.lists(st.tuples(coords, coords, coords),
                        min_size=1, max_size=6))
        @settings(max_examples=30, deadline=None)
        def check(points):
            targets = np.array(points, dtype=float)
            dset = dm.DemandSet(targets_km=targets,
                                demand=np.ones((2, len(points)), dtype=bool))
            with tempfile.NamedTemporaryFile("w", suffix=".demand") as handle:
                dm.save_demand(dset, handle.name)
                assert dm.load_demand(handle.name) == dset

        check()
