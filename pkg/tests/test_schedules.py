import math

import pytest

from sgsadmm.schedules import ToleranceSchedule


def test_zero_schedule():
    s = ToleranceSchedule.zero()
    assert s(0) == 0.0 and s(100) == 0.0
    assert s.total() == 0.0 and s.total_squares() == 0.0


def test_geometric_sums():
    s = ToleranceSchedule.geometric(1e-2, 0.5)
    assert s(0) == 1e-2
    assert s(3) == pytest.approx(1.25e-3)
    assert s.total() == pytest.approx(2e-2)
    assert s.total_squares() == pytest.approx(1e-4 / 0.75)
    partial = sum(s(k) for k in range(200))
    assert partial == pytest.approx(s.total(), rel=1e-12)


def test_power_sums():
    s = ToleranceSchedule.power(0.5, 2.0)
    assert s(0) == 0.5
    assert s(3) == pytest.approx(0.5 / 16.0)
    assert s.total() == pytest.approx(0.5 * math.pi ** 2 / 6.0, rel=1e-12)
    assert s.total_squares() == pytest.approx(0.25 * math.pi ** 4 / 90.0, rel=1e-12)


def test_scaled():
    s = ToleranceSchedule.geometric(1e-2, 0.3).scaled(4.0)
    assert s(0) == pytest.approx(4e-2)
    assert s.total() == pytest.approx(4e-2 / 0.7)
    assert ToleranceSchedule.zero().scaled(5.0).total() == 0.0


def test_parse():
    s = ToleranceSchedule.parse("geom:1e-2:0.5")
    assert s.kind == "geometric" and s.eps0 == 1e-2 and s.ratio == 0.5
    s = ToleranceSchedule.parse("pow:0.1:1.5")
    assert s.kind == "power" and s.exponent == 1.5
    assert ToleranceSchedule.parse("zero").kind == "zero"
    with pytest.raises(ValueError):
        ToleranceSchedule.parse("geom:1e-2")
    with pytest.raises(ValueError):
        ToleranceSchedule.parse("linear:1:2")


def test_validation():
    with pytest.raises(ValueError):
        ToleranceSchedule.geometric(1e-2, 1.0)
    with pytest.raises(ValueError):
        ToleranceSchedule.power(1e-2, 1.0)
    with pytest.raises(ValueError):
        ToleranceSchedule.geometric(-1.0, 0.5)
