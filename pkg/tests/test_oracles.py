import pytest

import oracles


def test_frozen_closed_forms_match_high_precision_recomputation():
    assert oracles.t_w_power(4.0, 1.0, 1.5) == pytest.approx(oracles.T_W_NORM4_P15, rel=1e-15)
    assert oracles.one_cell_amplitude(1.5) == pytest.approx(oracles.ONE_CELL_C_P15, rel=1e-15)
    assert oracles.one_cell_amplitude(1.1) == pytest.approx(oracles.ONE_CELL_C_P11, rel=1e-14)
    assert oracles.one_cell_amplitude(1.9) == pytest.approx(oracles.ONE_CELL_C_P19, rel=1e-14)


def test_psi_closed_form_at_unit_ray():
    # t - t^1.5/1.5 peaks at t = 1 with value 1/3
    assert oracles.psi_power(1.0, 1.0, 1.5) == pytest.approx(1.0 / 3.0, rel=1e-15)


def test_loop_reference_on_a_hand_example():
    a = [[0.0], [3.0]]
    assert oracles.tv_loops(a, 1.0, anisotropic=True) == 3.0
    assert oracles.trace_loops(a, 1.0) == 3 * 0.0 + 3 * 3.0
