import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrisk.attack import craft_attack, min_overload_attack
from gridrisk.errors import ObservabilityError
from gridrisk.estimation import detection_threshold
from gridrisk.grid import dc_power_flow
from gridrisk.mtd import (DEFAULT_GRID, MtdLimits, divergence, max_residual_over_mtd, mtd_measurements,
                          mtd_protection_sweep, post_mtd_residual, rank_physical_targets,
                          residual_from_topology_change, sweep_bus)

from oracles import explicit_residual, grid_search_max_residual, topology_by_loops


def _perturbed(model, scale):
    return model.topology(model.net.susceptance * scale)


class TestResidual:
    def test_unchanged_topology_hides_attack(self, model14, peak14):
        a = craft_attack(model14, np.linspace(0.1, 0.5, model14.n))
        z = mtd_measurements(model14, peak14, model14.net.susceptance)
        assert post_mtd_residual(model14, model14.H, z, a) < 1e-10

    def test_no_attack_no_residual(self, model14, peak14, rng):
        b = model14.net.susceptance * rng.uniform(0.5, 1.5, model14.net.n_branch)
        z = mtd_measurements(model14, peak14, b)
        assert post_mtd_residual(model14, model14.topology(b), z, np.zeros(model14.m)) < 1e-10

    def test_topology_builder_matches_loops(self, model14, rng):
        b = model14.net.susceptance * rng.uniform(0.5, 1.5, model14.net.n_branch)
        np.testing.assert_allclose(model14.topology(b), topology_by_loops(model14.net, b), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_topology_change_form_agrees(self, seed):
        from gridrisk.grid import build_measurement_model, ieee14
        model = build_measurement_model(ieee14())
        rng = np.random.default_rng(seed)
        H_mtd = _perturbed(model, rng.uniform(0.5, 1.5, model.net.n_branch))
        z = rng.normal(size=model.m)
        c = rng.normal(size=model.n)
        direct = post_mtd_residual(model, H_mtd, z, model.H @ c)
        assert residual_from_topology_change(model, H_mtd, z, c) == pytest.approx(direct, abs=1e-9)

    def test_three_bus_against_explicit_projector(self, model3, net3):
        b = net3.susceptance.copy()
        b[2] *= 1.1
        H_mtd = model3.topology(b)
        _, z = dc_power_flow(net3, model=model3, susceptance=b)
        a = craft_attack(model3, [0.0, 0.05])
        expected = explicit_residual(H_mtd, model3.W, z + a)
        assert post_mtd_residual(model3, H_mtd, z, a) == pytest.approx(expected, rel=1e-9)
        assert expected > 0

    def test_shape_check(self, model3):
        with pytest.raises(ValueError):
            post_mtd_residual(model3, np.zeros((2, 2)), np.zeros(model3.m), np.zeros(model3.m))

    def test_measurements_follow_perturbed_physics(self, model14, peak14, net14):
        b = net14.susceptance * 1.2
        z = mtd_measurements(model14, peak14, b)
        _, ref = dc_power_flow(net14, peak14[model14.injection_rows()] * net14.base_mva, model14, b)
        np.testing.assert_allclose(z, ref, atol=1e-10)


class TestDivergence:
    def test_identity(self, model14):
        div, rel = divergence(model14.H, model14.H)
        assert div == pytest.approx(np.linalg.norm(model14.H))
        assert rel == 0

    def test_scaled(self, model14):
        div, rel = divergence(model14.H, 2 * model14.H)
        assert div == pytest.approx(2 * np.linalg.norm(model14.H))
        assert rel == pytest.approx(1.0)

    def test_explicit_projector(self, model14, rng):
        H = model14.H
        H_mtd = _perturbed(model14, rng.uniform(0.7, 1.3, model14.net.n_branch))
        P = H @ np.linalg.inv(H.T @ H) @ H.T
        div, rel = divergence(H, H_mtd)
        assert div == pytest.approx(np.linalg.norm(P @ H_mtd), rel=1e-10)
        assert rel == pytest.approx(np.linalg.norm(H - H_mtd) / np.linalg.norm(H), rel=1e-12)

    def test_rank_deficient(self):
        with pytest.raises(ObservabilityError):
            divergence(np.ones((3, 2)), np.ones((3, 2)))


class TestWorstCase:
    def test_zero_capacity_is_baseline(self, model14, peak14):
        a = craft_attack(model14, np.eye(model14.n)[4])
        out = max_residual_over_mtd(model14, peak14, a, MtdLimits.all_branches(model14.net, 0.0))
        assert out.r_star < 1e-10
        np.testing.assert_array_equal(out.susceptance, model14.net.susceptance)

    def test_respects_box(self, model14, peak14):
        a = craft_attack(model14, np.eye(model14.n)[4])
        limits = MtdLimits((0, 1, 2, 3, 4, 5, 6), 0.2)
        out = max_residual_over_mtd(model14, peak14, a, limits)
        lo, hi = limits.bounds(model14.net.susceptance)
        assert np.all(out.susceptance >= lo - 1e-15) and np.all(out.susceptance <= hi + 1e-15)
        assert out.r_star > 0

    def test_bus8_blind_spot(self, model14, peak14, rng):
        # bus 8 hangs off a single branch: every topology still explains the shift
        a = craft_attack(model14, np.eye(model14.n)[model14.net.state_index(8)])
        for _ in range(20):
            b = model14.net.susceptance * rng.uniform(0.5, 1.5, model14.net.n_branch)
            z = mtd_measurements(model14, peak14, b)
            assert post_mtd_residual(model14, model14.topology(b), z, a) < 1e-9
        out = max_residual_over_mtd(model14, peak14, a, MtdLimits.all_branches(model14.net, 0.5))
        assert out.r_star < 1e-9

    @pytest.mark.parametrize("rho", [0.1, 0.2, 0.5])
    def test_three_bus_matches_grid_search(self, model3, net3, rho):
        _, z = dc_power_flow(net3, model=model3)
        att = min_overload_attack(model3, net3, z, 3, "2-3")
        out = max_residual_over_mtd(model3, z, att.a_ol, MtdLimits.all_branches(net3, rho))
        p = z[model3.injection_rows()]
        oracle = grid_search_max_residual(net3, model3.W, att.a_ol, p, rho)
        assert out.r_star >= oracle * 0.98
        assert out.r_star <= oracle * 1.02 + 1e-12

    def test_deterministic(self, model14, peak14):
        a = craft_attack(model14, np.eye(model14.n)[3])
        limits = MtdLimits.all_branches(model14.net, 0.3)
        one = max_residual_over_mtd(model14, peak14, a, limits, seed=7)
        two = max_residual_over_mtd(model14, peak14, a, limits, seed=7)
        assert one.r_star == two.r_star
        np.testing.assert_array_equal(one.susceptance, two.susceptance)


class TestLimits:
    @pytest.mark.parametrize("rho", [-0.1, 0.51, 2.0])
    def test_rho_range(self, rho):
        with pytest.raises(ValueError):
            MtdLimits((0,), rho)

    @pytest.mark.parametrize("grid", [(), (0.0, 0.1), (0.2, 0.1), (0.1, 0.6)])
    def test_grid_validation(self, model14, peak14, grid):
        with pytest.raises(ValueError):
            sweep_bus(model14, peak14, 2, range(20), grid)


class TestSweep:
    def test_curves_monotone(self, profile14):
        for e in profile14.entries:
            assert np.all(np.diff(e.r_star) >= -1e-12)

    def test_default_threshold(self, profile14, model14):
        assert profile14.eta == pytest.approx(detection_threshold(model14.m, model14.n))
        assert profile14.grid == DEFAULT_GRID

    def test_min_rho_is_first_exposure(self, profile14):
        for e in profile14.entries:
            if e.min_rho is None:
                assert np.all(e.r_star <= profile14.eta)
            else:
                k = profile14.grid.index(e.min_rho)
                assert e.r_star[k] > profile14.eta
                assert np.all(e.r_star[:k] <= profile14.eta)
                assert e.r_star_at_min_rho == e.r_star[k]

    def test_bus8_unprotectable(self, profile14, net14):
        e = profile14.entry(8, net14.branch_index("7-8"))
        assert e.min_rho is None and np.all(e.r_star < 1e-9)

    def test_zero_attack_unprotectable(self, model14, net14, peak14, attacks14):
        att = attacks14[0]
        from dataclasses import replace
        nil = replace(att, a_ol=np.zeros(model14.m))
        prof = mtd_protection_sweep(model14, net14, peak14, [nil], grid=(0.1, 0.5))
        assert prof.entries[0].min_rho is None

    def test_larger_attacks_need_less_capacity(self, profile14):
        from scipy.stats import spearmanr
        pts = [(e.a_norm, e.min_rho) for e in profile14.entries if e.min_rho is not None]
        rho_s, _ = spearmanr(*zip(*pts))
        assert rho_s < 0

    def test_perturbable_subset(self, model14, net14, peak14, attacks14):
        att = [a for a in attacks14 if a.target_bus == 4][:2]
        limits = MtdLimits((), 0.5)
        prof = mtd_protection_sweep(model14, net14, peak14, att, limits=limits, grid=(0.5,))
        assert all(e.min_rho is None for e in prof.entries)

    def test_ranking(self, profile14, net14):
        ranked = rank_physical_targets(profile14)
        assert {b for b, _ in ranked} == set(net14.state_buses())
        assert ranked[0][1].min_rho is None


def test_divergence_branch_2_3_ten_percent(model14, net14):
    b = net14.susceptance.copy()
    b[net14.branch_index("2-3")] *= 1.1
    H, H_mtd = model14.H, model14.topology(b)
    P = H @ np.linalg.inv(H.T @ H) @ H.T
    div, _ = divergence(H, H_mtd)
    assert abs(div - np.linalg.norm(P @ H_mtd)) < 1e-9
