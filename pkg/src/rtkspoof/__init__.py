"""Simulation of RTK positioning under attacks on the reference station.

Satellites, receivers and attacks are modelled at the measurement level; the
rover runs a double-difference RTK engine with integer ambiguity resolution and
receives corrections through a bit-exact framed wire format.
"""

from .attacker import AttackMode, AttackProfile, Attacker
from .constellation import Constellation, Ephemeris, SatelliteId, build_constellation
from .geodesy import EcefCoord, EnuVector, GeodeticCoord, ecef_to_enu, ecef_to_geodetic, geodetic_to_ecef
from .metrics import EpochRecord, MetricsSummary, compute_metrics
from .observation import AtmosphereModel, EpochObservations, Observation, ReceiverModel, measure
from .rtk import RtkConfig, RtkSolution, SolutionStatus, solve_epoch
from .scenario import ConfigInvalid, ScenarioConfig, load_scenario, run_scenario
from .wire import CorrectionMessage, MessageType, decode_message, encode_message

__version__ = "0.1.0"
