import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wgmbench.errors import DomainError
from wgmbench.sphere import Polarization
from wgmbench.tuning import (
    DeviceGeometry,
    TuningParameters,
    fractional_shift,
    frequency_shift,
    pzt_chain,
    strain_for_one_fsr,
    temperature_shift,
)

DEVICE = DeviceGeometry(sphere_diameter=210e-6, stem_diameter=105e-6, free_stem_length=4e-3)
NU = 3.75e14


def test_fractional_shift_sign():
    assert fractional_shift(-1e-3, 0.0) == pytest.approx(1e-3)
    assert fractional_shift(0.0, 1e-4) == pytest.approx(-1e-4)
    with pytest.raises(DomainError):
        fractional_shift(0.1, 0.0)


def test_temperature_shift():
    assert temperature_shift(1.0) == pytest.approx(-2.5e9)
    with pytest.raises(DomainError):
        temperature_shift(100.0)


@pytest.mark.parametrize("l", [300, 500, 1200])
def test_strain_for_one_fsr_brackets_tenth_percent(l):
    assert 0.0008 <= strain_for_one_fsr(l) <= 0.0035


def test_stress_ratio_equals_area_ratio():
    s = pzt_chain(DEVICE, 10.0)
    assert s.stress_ratio == pytest.approx(DEVICE.area_ratio)
    assert s.equatorial_strain == pytest.approx(-0.17 * s.sphere_axial_strain)


@given(st.floats(0.0, 70.0), st.floats(0.0, 70.0))
def test_shift_linear_in_voltage(v1, v2):
    f = lambda v: frequency_shift(NU, Polarization.TE, pzt_chain(DEVICE, v))
    assert f(v1 + v2) == pytest.approx(f(v1) + f(v2), rel=1e-12, abs=1e-3)


def test_tm_tunes_faster_by_birefringence_ratio():
    s = pzt_chain(DEVICE, 20.0)
    te = frequency_shift(NU, Polarization.TE, s)
    tm = frequency_shift(NU, Polarization.TM, s)
    assert te > 0
    assert tm / te == pytest.approx(TuningParameters().birefringence_ratio)


def test_geometric_fraction_of_te_rate():
    s = pzt_chain(DEVICE, 20.0)
    geometric = -s.equatorial_strain * NU
    assert geometric / frequency_shift(NU, Polarization.TE, s) == pytest.approx(0.8)


def test_overstress_warning_and_limit():
    v_lim = DEVICE.voltage_at_stem_limit()
    assert not pzt_chain(DEVICE, 0.99 * v_lim).stem_overstressed
    assert pzt_chain(DEVICE, min(1.01 * v_lim, DEVICE.v_max)).stem_overstressed


def test_voltage_range_enforced():
    with pytest.raises(DomainError):
        pzt_chain(DEVICE, -1.0)
    with pytest.raises(DomainError):
        pzt_chain(DEVICE, 151.0)


def test_temperature_offset_adds_uniformly():
    s = pzt_chain(DEVICE, 0.0, temperature_offset=0.4)
    shifts = [frequency_shift(NU, p, s) for p in Polarization]
    assert np.allclose(shifts, -1e9)
