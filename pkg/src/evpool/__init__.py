"""EV ridepooling fleet simulator with a pluggable charging-control layer."""

__version__ = "0.1.0"

from .charging import (ChargeAssignment, ChargingController, ChargingPolicyConfig,
                       hungarian, matching_value, pect, stranded_step)
from .dispatch import (assign_trips, build_rtv, build_rv, dispatch_vehicle,
                       pair_feasibility, vehicle_feasibility)
from .engine import SimConfig, SimParams, Simulation, fare_cents
from .ev import (DEFAULT_TYPES, ChargePlan, Vehicle, VehicleState, VehicleTypeSpec,
                 apply_charging_step, apply_idle_draw, charge_power_kw,
                 drive_power_w, estimate_charge_seconds, traversal_energy_kwh)
from .network import (RoadNetwork, TravelTimeProvider, build_grid,
                      generate_grid_graphml, haversine, load_network, write_graphml)
from .predictor import (ConstantPredictor, GcnPredictor, IdleFeatures,
                        PredictorContext, PredictorWeights, SampleWriter, SimClock,
                        TablePredictor, build_features, gcn_forward, read_samples,
                        time_features)
from .repositioning import DemandWindow, reposition
from .stations import (ChargingStation, expected_wait, grid_power_kw,
                       place_chargers, request_charge, station_step)
from .trips import (RequestStream, TripRequest, ingest_trips, load_request_csv,
                    synthesize_demand, write_request_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
