import numpy as np
import pytest

from quadfoundry.dynamics import QuadParams


def crazyflie_like(c_f0_zero: bool = False) -> QuadParams:
    """Mid-range vehicle built from the midpoint of the sampling chain."""
    t = 31.004  # max total thrust, N
    return QuadParams(
        mass=0.97238,
        arm_length=0.12541,
        c_f0=0.0 if c_f0_zero else 0.038 * t / 4,
        c_f1=0.154 * t / 4,
        c_f2=0.987 * t / 4,
        c_m=0.0275,
        J_xx=8.868e-3, J_yy=8.868e-3, J_zz=1.6246e-2,
        motor_tau_up=0.065, motor_tau_down=0.165,
    )


@pytest.fixture
def params() -> QuadParams:
    return crazyflie_like()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
