import math

import pytest

from leanwing.dynamics import TrimSpec, compute_trim
from leanwing.runtime import default_airframe


@pytest.fixture(scope="session")
def airframe():
    return default_airframe()


@pytest.fixture(scope="session")
def trim_straight(airframe):
    return compute_trim(TrimSpec(va=25.0, gamma=0.0), airframe)


@pytest.fixture(scope="session")
def trim_orbit(airframe):
    return compute_trim(TrimSpec(va=25.0, gamma=0.0, orbit_radius=150.0), airframe)


def state_tuple(s):
    return (s.p_n, s.p_e, s.p_d, s.u, s.v, s.w,
            s.phi, s.theta, s.psi, s.p, s.q, s.r)


def angle_dist(a, b):
    return abs(math.remainder(a - b, 2.0 * math.pi))
