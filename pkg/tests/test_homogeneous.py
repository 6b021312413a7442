"""Duration-free engines: split recursion and duration-integrated level recursion."""

import numpy as np
import pytest

from fluidrisk import (
    LevelDurationGrid,
    LevelGrid,
    StructureError,
    bridge_recursion,
    level_fixed_point,
    run_level_recursion,
    split_fixed_point,
)
from fluidrisk.gallery import pareto_renewal_model, two_state_model

from _oracles import (
    TWO_STATE_BRIDGE2_MASS,
    TWO_STATE_BRIDGE3_MASS,
    TWO_STATE_PSI_03_02,
    two_state_psi_scalar,
)


def _level_grid(l_max=48.0, dl=1.0 / 32):
    return LevelGrid(l_max=l_max, dl=dl)


# ---------------------------------------------------------------------------
# LevelGrid construction
# ---------------------------------------------------------------------------


def test_level_grid_lattice_is_centered_and_uniform():
    g = LevelGrid(l_max=2.0, dl=0.5)
    assert g.zero_index == 4
    assert g.n_levels == 9
    np.testing.assert_allclose(g.levels, np.arange(-4, 5) * 0.5)
    assert g.levels[g.zero_index] == 0.0


def test_level_grid_rejects_bad_spacing():
    with pytest.raises(ValueError):
        LevelGrid(l_max=1.0, dl=0.3)
    with pytest.raises(ValueError):
        LevelGrid(l_max=-1.0, dl=0.1)
    with pytest.raises(ValueError):
        LevelGrid(l_max=1.0, dl=0.0)


def test_level_grid_model_defaults_resolve_holding_scale():
    g = LevelGrid.for_model(two_state_model())
    assert g.dl == pytest.approx(1.0 / 16)
    assert g.l_max == pytest.approx(512.0)
    g2 = LevelGrid.for_model(two_state_model(), l_max=10.0, dl=0.25)
    assert (g2.l_max, g2.dl) == (10.0, 0.25)


# ---------------------------------------------------------------------------
# Per-order level recursion
# ---------------------------------------------------------------------------


def test_level_masses_match_hand_values():
    _, masses, _ = run_level_recursion(two_state_model(), _level_grid(), n_max=3)
    assert masses[2].shape == (1, 1)
    assert masses[2][0, 0] == pytest.approx(TWO_STATE_BRIDGE2_MASS, abs=5e-4)
    assert masses[3][0, 0] == pytest.approx(TWO_STATE_BRIDGE3_MASS, abs=5e-4)


def test_level_and_split_engines_integrate_to_the_same_masses():
    # The level engine integrates the final duration analytically; the split
    # engine carries the duration axis on a grid.  Per-order first-return
    # masses must agree once both use the same level spacing.
    model = two_state_model()
    level_masses = run_level_recursion(model, LevelGrid(l_max=32.0, dl=1.0 / 16), n_max=5)[1]
    tensor = bridge_recursion(
        model,
        LevelDurationGrid(u_max=16.0, du=1.0 / 16, l_max=32.0, dl=1.0 / 16),
        n_max=5,
        method="split",
    )
    for n in range(2, 6):
        assert level_masses[n][0, 0] == pytest.approx(tensor.mass(n)[0, 0], abs=5e-4)


def test_level_window_edges_stay_negligible():
    _, _, diag = run_level_recursion(two_state_model(), _level_grid(), n_max=5)
    assert diag["level_edge_max_density"] < 1e-12
    assert diag["kernel_window_tail"] < 1e-15


def test_arrival_cost_weight_skips_the_arrival_free_order():
    # The two-state second-order bridge contains no arrival, so its
    # duration-integrated mass ignores the arrival-cost weight exactly.
    # The third order carries exactly one self-arrival: the 0.0225 component
    # routes through state 0 (cost 0.5) and the 0.045 component through
    # state 1 (cost 0.4), so the damped mass is the explicit blend.
    model = two_state_model()
    plain = run_level_recursion(model, _level_grid(), n_max=3)[1]
    tilted = run_level_recursion(model, _level_grid(), theta2=5.0, n_max=3)[1]
    np.testing.assert_array_equal(plain[2], tilted[2])
    blend = 0.0225 * np.exp(-5.0 * 0.5) + 0.045 * np.exp(-5.0 * 0.4)
    assert tilted[3][0, 0] == pytest.approx(blend, abs=5e-5)


# ---------------------------------------------------------------------------
# Whole-series fixed points
# ---------------------------------------------------------------------------


def test_level_series_reaches_certain_return():
    # Mean drift is negative, so the first-return mass is exactly one; the
    # lattice value lands within discretization error and the error is
    # second order in the spacing.
    a, b, info = level_fixed_point(two_state_model(), _level_grid())
    assert info["converged"] and info["iterations"] > 10
    gap = abs(1.0 - info["mass"][0, 0])
    assert gap < 5e-2
    hist = info["mass_history"][:, 0, 0]
    assert np.all(np.diff(hist) >= -1e-12)
    _, _, fine = level_fixed_point(two_state_model(), _level_grid(dl=1.0 / 64))
    assert abs(1.0 - fine["mass"][0, 0]) < 0.6 * gap


def test_transform_arguments_damp_the_series_mass():
    model = two_state_model()
    grid = _level_grid()
    masses = {}
    for th in [(0.0, 0.0), (0.3, 0.2), (1.0, 1.0)]:
        masses[th] = level_fixed_point(model, grid, theta1=th[0], theta2=th[1])[2]["mass"][0, 0]
    assert masses[(0.3, 0.2)] == pytest.approx(TWO_STATE_PSI_03_02, abs=2e-3)
    assert masses[(1.0, 1.0)] == pytest.approx(two_state_psi_scalar(1.0, 1.0), abs=2e-3)
    assert masses[(1.0, 1.0)] < masses[(0.3, 0.2)] < masses[(0.0, 0.0)]


def test_costless_model_ignores_transform_arguments():
    # With no dividend rates and no arrival costs both weights are
    # identically one, so the computation is bit-for-bit unchanged.
    model = two_state_model(sigma=(0.0, 0.0), k_cost=((0.0, 0.0), (0.0, 0.0)))
    grid = _level_grid()
    a0, b0, _ = level_fixed_point(model, grid)
    a1, b1, _ = level_fixed_point(model, grid, theta1=0.7, theta2=1.3)
    np.testing.assert_array_equal(a0, a1)
    np.testing.assert_array_equal(b0, b1)


def test_split_series_converges_and_reports_diagnostics():
    A, B, info = split_fixed_point(
        two_state_model(),
        LevelDurationGrid(u_max=16.0, du=1.0 / 16, l_max=32.0, dl=1.0 / 16),
    )
    assert info["converged"] and 0 < info["iterations"] < 400
    hist = info["mass_history"][:, 0, 0]
    assert np.all(np.diff(hist) >= -1e-12)
    assert info["holding_tail_bound"] == pytest.approx(np.exp(-16.0))
    assert 0.9 < info["mass"][0, 0] <= 1.0 + 1e-9
    assert "level_edge_max_density" in info and "duration_edge_max_density" in info


def test_level_engine_outruns_the_duration_window_near_criticality():
    # Near-critical first-return times are heavy tailed, so any finite
    # duration window loses visible series mass; integrating the duration
    # out analytically removes that truncation entirely.
    model = two_state_model()
    split_mass = split_fixed_point(
        model, LevelDurationGrid(u_max=16.0, du=1.0 / 16, l_max=32.0, dl=1.0 / 16)
    )[2]["mass"][0, 0]
    level_mass = level_fixed_point(model, LevelGrid(l_max=32.0, dl=1.0 / 16))[2]["mass"][0, 0]
    assert abs(1.0 - split_mass) > 3e-2
    assert abs(1.0 - level_mass) < 1e-2


def test_duration_free_engines_reject_duration_dependent_kernels():
    model = pareto_renewal_model()
    with pytest.raises(StructureError):
        run_level_recursion(model, LevelGrid(l_max=4.0, dl=1.0 / 8), n_max=2)
    with pytest.raises(StructureError):
        level_fixed_point(model, LevelGrid(l_max=4.0, dl=1.0 / 8))
    with pytest.raises(StructureError):
        split_fixed_point(model, LevelDurationGrid(u_max=4.0, du=1.0 / 8, l_max=4.0, dl=1.0 / 8))
