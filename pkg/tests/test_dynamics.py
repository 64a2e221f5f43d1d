import math

import numpy as np
import pytest

from cislunar_ssa import dynamics as dyn
from cislunar_ssa.dynamics import EARTH_MOON, LpoFamily
from cislunar_ssa.errors import ConfigError, ParseError, SingularState


def rec_by(catalog, family, m, n):
    for rec in catalog:
        if rec.family is family and rec.resonance == (m, n):
            return rec
    raise LookupError((family, m, n))


class TestDerivative:
    def test_position_rate_is_velocity(self):
        state = np.array([0.5, 0.1, -0.2, 0.01, -0.02, 0.03])
        rate = dyn.cr3bp_derivative(state)
        assert np.array_equal(rate[:3], state[3:])

    def test_equilibrium_at_l1(self):
        l1, _ = dyn.find_libration_points()
        rate = dyn.cr3bp_derivative(np.array([l1, 0, 0, 0, 0, 0]))
        assert np.all(np.abs(rate[3:]) < 1e-10)

    def test_against_high_precision_scratch_evaluation(self):
        # mpmath (50 digits) evaluation of the EOM at (0.5, 0.1, 0, 0, 0, 0)
        rate = dyn.cr3bp_derivative(np.array([0.5, 0.1, 0, 0, 0, 0]))
        expected = np.array([-3.0125868932584480664, -0.60506051638224214237, 0.0])
        assert np.allclose(rate[3:], expected, rtol=1e-14, atol=1e-15)

    def test_singular_at_primary(self):
        moon = EARTH_MOON.primary_positions[1]
        state = np.concatenate([moon, np.zeros(3)])
        with pytest.raises(SingularState):
            dyn.cr3bp_derivative(state)


class TestPropagate:
    def test_zero_tof_identity(self):
        state = np.array([0.8, 0.0, 0.1, 0.0, 0.5, 0.0])
        out, stm = dyn.propagate(state, 0.0, with_stm=True)
        assert np.array_equal(out, state)
        assert np.array_equal(stm, np.eye(6))

    def test_l1_lyapunov_one_to_one_closure(self):
        # published catalog row: x0, ydot0, and the 1:1 resonant period
        ic = np.array([0.63394833, 0, 0, 0, 0.79045684, 0])
        final, _ = dyn.propagate(ic, 6.65515541)
        assert np.max(np.abs(final - ic)) < 5e-5

    def test_forward_backward_reversibility(self):
        state = np.array([0.82, 0.0, 0.05, 0.0, 0.18, 0.0])
        tol = 1e-12
        fwd, _ = dyn.propagate(state, 1.0, tol=tol)
        back, _ = dyn.propagate(fwd, -1.0, tol=tol)
        assert np.max(np.abs(back - state)) < 10 * tol

    def test_tol_validation(self):
        state = np.zeros(6)
        state[0] = 0.5
        with pytest.raises(ValueError):
            dyn.propagate(state, 1.0, tol=1e-5)

    def test_jacobi_drift_over_one_period(self, catalog):
        rec = rec_by(catalog, LpoFamily.DRO, 9, 2)
        ic = rec.initial_state()
        c0 = dyn.jacobi_constant(ic)
        final, _ = dyn.propagate(ic, rec.period, tol=1e-12)
        assert abs(dyn.jacobi_constant(final) - c0) < 1e-9

    def test_stm_against_finite_differences(self):
        state = np.array([0.75, 0.02, 0.01, 0.01, 0.4, -0.01])
        tof = 1.0
        base, stm = dyn.propagate(state, tof, with_stm=True)
        delta = 1e-7
        for col in range(6):
            pert = state.copy()
            pert[col] += delta
            fwd, _ = dyn.propagate(pert, tof)
            fd = (fwd - base) / delta
            err = np.linalg.norm(stm[:, col] - fd) / np.linalg.norm(fd)
            assert err < 1e-4

    def test_planar_orbits_stay_planar(self, catalog):
        rec = rec_by(catalog, LpoFamily.DRO, 3, 2)
        final, _ = dyn.propagate(rec.initial_state(), rec.period / 3.0)
        assert abs(final[2]) < 1e-12 and abs(final[5]) < 1e-12


class TestLibrationPoints:
    def test_values_match_bisection_oracle(self):
        # independent bisection on the collinear force-balance function
        mu = EARTH_MOON.mu

        def balance(x):
            return (x - (1 - mu) * (x + mu) / abs(x + mu) ** 3
                    - mu * (x - 1 + mu) / abs(x - 1 + mu) ** 3)

        def bisect(lo, hi):
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if balance(lo) * balance(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)

        l1, l2 = dyn.find_libration_points()
        assert l1 == pytest.approx(bisect(0.5, 1 - mu - 1e-9), abs=1e-12)
        assert l2 == pytest.approx(bisect(1 - mu + 1e-9, 1.5), abs=1e-12)
        assert l1 == pytest.approx(0.83692, abs=5e-6)
        assert l2 == pytest.approx(1.15568, abs=5e-6)

    def test_residual_below_tolerance(self):
        l1, l2 = dyn.find_libration_points()
        for x in (l1, l2):
            rate = dyn.cr3bp_derivative(np.array([x, 0, 0, 0, 0, 0]))
            assert np.all(np.abs(rate[3:]) < 1e-10)

    def test_ordering(self):
        l1, l2 = dyn.find_libration_points()
        assert l1 < 1 - EARTH_MOON.mu < l2


class TestStabilityIndex:
    def test_identity_monodromy(self):
        assert dyn.stability_index(np.eye(6)) == pytest.approx(1.0)

    def test_l1_lyapunov_matches_table(self, catalog, corrected_states):
        rec = rec_by(catalog, LpoFamily.L1_LYAPUNOV, 1, 1)
        ic = corrected_states[(rec.family, rec.resonance)]
        _, mono = dyn.propagate(ic, rec.period, with_stm=True)
        assert dyn.stability_index(mono) == pytest.approx(53.98, rel=0.02)

    def test_dro_3_2_matches_table(self, catalog, corrected_states):
        rec = rec_by(catalog, LpoFamily.DRO, 3, 2)
        ic = corrected_states[(rec.family, rec.resonance)]
        _, mono = dyn.propagate(ic, rec.period, with_stm=True)
        assert dyn.stability_index(mono) == pytest.approx(1.00, rel=0.02)


class TestCatalog:
    def test_total_slot_count(self, catalog):
        assert len(catalog) == 40
        assert sum(rec.slots for rec in catalog) == 1212

    def test_dro_9_2_slots(self, catalog):
        assert rec_by(catalog, LpoFamily.DRO, 9, 2).slots == 14

    def test_one_slot_when_spacing_exceeds_period(self):
        coarse = dyn.build_catalog(dt_b_hours=1000.0)
        assert all(rec.slots == 1 for rec in coarse)

    def test_northern_mirrors_flip_z0(self, catalog):
        south = rec_by(catalog, LpoFamily.L2_HALO_S, 9, 2)
        north = rec_by(catalog, LpoFamily.L2_HALO_N, 9, 2)
        assert north.z0 == -south.z0
        assert north.x0 == south.x0 and north.ydot0 == south.ydot0
        assert north.stability == south.stability

    def test_catalog_override_roundtrip(self, tmp_path):
        path = tmp_path / "catalog.txt"
        path.write_text(
            "# family M:N x0 z0 ydot0 period stability\n"
            "DRO 9:2 0.88976967 0 0.47183463 1.47892343 1.00\n"
            "L2HaloS 9:2 1.01958272 -0.18036049 -0.09788185 1.47892343 1.00\n"
        )
        cat = dyn.build_catalog(12.0, table_path=path)
        assert len(cat) == 3  # DRO + Halo S + generated Halo N mirror
        assert cat[2].family is LpoFamily.L2_HALO_N
        assert cat[2].z0 == pytest.approx(0.18036049)

    def test_catalog_override_bad_family(self, tmp_path):
        path = tmp_path / "catalog.txt"
        path.write_text("NRHO 9:2 1.0 0 0.5 1.47892343 1.0\n")
        with pytest.raises(ParseError):
            dyn.build_catalog(12.0, table_path=path)

    def test_record_rejects_wrong_period(self):
        with pytest.raises(ConfigError):
            dyn.LpoRecord(family=LpoFamily.DRO, resonance=(9, 2), x0=0.9, z0=0.0,
                          ydot0=0.5, period=2.0, stability=1.0, slots=10)


class TestDifferentialCorrection:
    @pytest.mark.parametrize("family,m,n", [
        (LpoFamily.L1_LYAPUNOV, 1, 1),
        (LpoFamily.L2_HALO_S, 9, 2),
        (LpoFamily.BUTTERFLY_S, 2, 1),
    ])
    def test_refined_closure(self, catalog, corrected_states, family, m, n):
        rec = rec_by(catalog, family, m, n)
        ic = corrected_states[(family, (m, n))]
        final, _ = dyn.propagate(ic, rec.period)
        assert np.max(np.abs(final - ic)) < 1e-9
        # the correction is a refinement, not a different orbit
        assert np.max(np.abs(ic - rec.initial_state())) < 1e-4


class TestSlotEphemeris:
    def test_phase_zero_slot_starts_at_initial_state(self, catalog):
        rec = rec_by(catalog, LpoFamily.DRO, 9, 2)
        eph = dyn.slot_ephemeris([rec], horizon=3, dt=0.11, correct=False)
        assert eph[0].phase_offset == 0.0
        assert np.allclose(eph[0].positions[0], rec.initial_state()[:3], atol=1e-12)

    def test_positions_match_direct_propagation(self, catalog):
        rec = rec_by(catalog, LpoFamily.L2_HALO_S, 9, 2)
        dt = EARTH_MOON.synodic_period_tu / 60.0
        eph = dyn.slot_ephemeris([rec], horizon=5, dt=dt, correct=False)
        slot = eph[3]
        ic = rec.initial_state()
        for t in range(5):
            tau = (t * dt + slot.phase_offset * rec.period) % rec.period
            expected, _ = dyn.propagate(ic, tau)
            assert np.max(np.abs(slot.positions[t] - expected[:3])) < 1e-9

    def test_adjacent_slots_are_time_shifts(self, catalog):
        # slot s+1 at step t equals slot s at step t + (slot spacing / dt)
        rec = rec_by(catalog, LpoFamily.DRO, 9, 2)
        spacing = rec.period / rec.slots
        shift = 4
        dt = spacing / shift
        horizon = 3 * shift + 1
        eph = dyn.slot_ephemeris([rec], horizon=horizon, dt=dt, correct=False)
        s0, s1 = eph[0], eph[1]
        for t in range(horizon - shift):
            assert np.max(np.abs(s1.positions[t] - s0.positions[t + shift])) < 1e-6

    def test_global_repeat_after_four_synodic_months(self, catalog):
        rec = rec_by(catalog, LpoFamily.L2_HALO_S, 9, 2)
        dt = EARTH_MOON.synodic_period_tu / 60.0
        eph = dyn.slot_ephemeris([rec], horizon=241, dt=dt, correct=False)
        slot = eph[5]
        assert np.max(np.abs(slot.positions[240] - slot.positions[0])) < 1e-6

    def test_slot_indexing_matches_catalog_order(self, catalog):
        sub = [rec_by(catalog, LpoFamily.DRO, 9, 2),
               rec_by(catalog, LpoFamily.DRO, 4, 1)]
        eph = dyn.slot_ephemeris(sub, horizon=1, dt=0.1, correct=False)
        assert len(eph) == sub[0].slots + sub[1].slots
        assert eph[0].slot_orbit == 0
        assert eph[-1].slot_orbit == 1

    def test_horizon_validation(self, catalog):
        with pytest.raises(ConfigError):
            dyn.slot_ephemeris(catalog[:1], horizon=0, dt=0.1)
