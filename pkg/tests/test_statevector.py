import math

import numpy as np
import pytest

from conftest import random_amplitudes
from core import statevector as sv
from core.errors import CapabilityError, InvalidArgument, NumericalDegeneracy
from core.gates import ms_gate

X = np.array([[0, 1], [1, 0]], dtype=complex)


def test_size_limits():
    assert sv.sv_product_state(sv.MAX_DENSE_SITES).amplitudes.size == 2 ** sv.MAX_DENSE_SITES
    with pytest.raises(CapabilityError):
        sv.sv_product_state(sv.MAX_DENSE_SITES + 1)
    with pytest.raises(InvalidArgument):
        sv.sv_product_state(1)


def test_site_zero_is_most_significant():
    state = sv.sv_product_state(3)
    sv.sv_apply(state, X, [0])
    assert state.amplitudes[0b100] == pytest.approx(1.0)
    sv.sv_apply(state, X, [2])
    assert state.amplitudes[0b101] == pytest.approx(1.0)


def test_apply_rejects_bad_input():
    state = sv.sv_product_state(3)
    with pytest.raises(InvalidArgument):
        sv.sv_apply(state, X, [3])
    with pytest.raises(InvalidArgument):
        sv.sv_apply(state, np.eye(4), [1, 1])
    with pytest.raises(InvalidArgument):
        sv.sv_apply(state, 2 * X, [0])


def test_bell_entropy():
    state = sv.sv_product_state(4)
    sv.sv_apply(state, ms_gate(math.pi / 4), [1, 2])
    assert sv.sv_entropy(state, 2, 1.0) == pytest.approx(math.log(2))
    assert sv.sv_entropy(state, 1, 2.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InvalidArgument):
        sv.sv_schmidt_values(state, 0)


def test_measure_projects_and_normalizes(rng):
    state = sv.sv_from_amplitudes(random_amplitudes(4, rng))
    outcome, _ = sv.sv_measure(state, 1, rng)
    assert sv.sv_norm(state) == pytest.approx(1.0)
    zero, one = sv._site_slices(state, 1)
    gone = one if outcome == 1 else zero
    assert np.allclose(gone, 0.0)
    again, _ = sv.sv_measure(state, 1, rng)
    assert again == outcome


def test_reset_and_fidelity():
    state = sv.sv_product_state(2, bit=1)
    sv.sv_reset(state, 0)
    assert state.amplitudes[0b01] == pytest.approx(1.0)
    assert sv.sv_fidelity(state, sv.sv_product_state(2, bit=1)) == pytest.approx(0.0)
    with pytest.raises(InvalidArgument):
        sv.sv_fidelity(state, sv.sv_product_state(3))


def test_reset_annihilating_state_raises():
    minus = np.array([1.0, -1.0]) / math.sqrt(2)
    state = sv.sv_from_amplitudes(np.kron(minus, [1.0, 0.0]))
    with pytest.raises(NumericalDegeneracy):
        sv.sv_reset(state, 0)


@pytest.mark.parametrize("site", [-1, 3])
def test_reset_rejects_out_of_range_site(site):
    state = sv.sv_product_state(3, bit=1)
    with pytest.raises(InvalidArgument):
        sv.sv_reset(state, site)
    assert state.amplitudes[-1] == pytest.approx(1.0)
