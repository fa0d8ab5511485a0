"""Small builders shared by the test modules."""

import math

import numpy as np

from rtkspoof.constellation import visible_satellites
from rtkspoof.geodesy import EnuVector, GeodeticCoord, ecef_to_geodetic, enu_to_ecef
from rtkspoof.observation import AtmosphereModel, ReceiverModel, measure

STATION = GeodeticCoord.from_degrees(59.4047, 17.9495, 30.0)
MASK = math.radians(10.0)


def offset(origin, e, n, u=0.0):
    return ecef_to_geodetic(enu_to_ecef(EnuVector(e, n, u), origin))


def quiet_receiver(rx_id, pos, **kw):
    """Receiver with (effectively) no noise and no clock wander."""
    kw.setdefault("sigma_code", 1e-300)
    kw.setdefault("sigma_phase", 1e-300)
    kw.setdefault("clock_rw_intensity", 0.0)
    return ReceiverModel(rx_id, pos, **kw)


def no_atmosphere():
    return AtmosphereModel(0.0, 0.0, 0.0)


def epoch_pair(ephemeris, station_rx, rover_rx, t, atmos=None, seed=0, station_pos=None):
    """Station and rover epochs at the same time tag."""
    atmos = atmos or no_atmosphere()
    rng = np.random.default_rng(seed)
    s_states = visible_satellites(ephemeris.states(t, station_rx.truth_position), MASK)
    r_states = visible_satellites(ephemeris.states(t, rover_rx.truth_position), MASK)
    return measure(station_rx, s_states, atmos, t, rng), measure(rover_rx, r_states, atmos, t, rng)
