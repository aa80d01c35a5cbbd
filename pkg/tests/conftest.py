import math

import pytest

from pll_lockin import PdCharacteristic, PhaseModel, make_active_pi, make_lead_lag

SIN = PdCharacteristic.sinusoidal()
TRI = PdCharacteristic.triangular()


def pi_model(tau1=1.0, tau2=1.0, k=1.0, omega=0.0, pd=SIN):
    return PhaseModel(make_active_pi(tau1, tau2), pd, k, omega)


def ll_model(tau1=1.0, tau2=0.1, k=1.0, omega=0.0, pd=SIN):
    return PhaseModel(make_lead_lag(tau1, tau2), pd, k, omega)


# loop used for the PI phase portraits at +-50, +-60, +-66 rad/s
PI_LOOP = dict(tau1=0.0633, tau2=0.0225, k=250.0)
# lead-lag loop of the reference portraits
LL_LOOP = dict(tau1=0.0633, tau2=0.0185, k=250.0)


@pytest.fixture
def pi_loop():
    return pi_model(**PI_LOOP)


@pytest.fixture
def ll_loop():
    return ll_model(**LL_LOOP)


def zero_pd():
    """Characteristic identically zero: theta' = omega - K c x."""
    return PdCharacteristic.custom(lambda t: 0.0 * t, lambda t: 0.0)


TWO_PI = 2 * math.pi
