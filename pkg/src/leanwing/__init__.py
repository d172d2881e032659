"""Fixed-wing UAV autonomy stack with a matching 6-DOF simulator.

Layered the way the airborne code is: state estimation feeds a waypoint
manager, a vector-field path follower, and a cascaded autopilot, all glued
together by an in-process bus and a deterministic scheduler. The same force
and moment model drives both the simulator and the trim/linearization tools.
"""

from .aero import (AircraftParams, ControlSurfaces, ForcesMoments,
                   ParamFileError, forces_and_moments, load_params,
                   load_params_file)
from .bus import Bus, BusError, ParamEvent, Topic
from .controller import (Autopilot, AutopilotCommand, ControlFeedback,
                         ControllerConfig, FlightPhase)
from .dynamics import (SimFault, TrimInfeasibleError, TrimResult, TrimSpec,
                       WindModel, compute_trim, rk4_step, state_derivative)
from .ekf import Ekf, EkfConfig, EstimatedState, MeasurementModel, UpdateResult
from .follower import FollowerConfig, FollowerOutput, PathCommand, follow
from .frames import (AirData, GeodeticCoord, StateVector, WindVector,
                     compute_air_data, euler_kinematics, euler_to_rotation,
                     lla_to_ned, ned_to_lla, rotation_to_euler, wrap_angle)
from .manager import (DubinsPath, ManagerConfig, Mission, MissionError,
                      PathManager, Waypoint, compute_dubins, load_mission,
                      load_mission_file)
from .runtime import (ConfigError, SimConfig, Simulation, default_airframe,
                      default_sim_config, load_sim_config, read_telemetry,
                      run_simulation)
from .sensors import (GnssMeasurement, ImuMeasurement, MagMeasurement,
                      PressureMeasurement, SensorConfig, SensorSuite,
                      pressure_to_airspeed, pressure_to_altitude)

__version__ = "0.1.0"
