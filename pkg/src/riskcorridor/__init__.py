"""Risk-field trajectory planning inside a time-varying convex corridor.

The package combines three pieces: an obstacle risk field with analytic
gradients, a growing-and-clipped sequence of convex regions that certifies
obstacle separation, and an iterative LQR tracker that keeps its solution
inside those regions. A closed-loop simulator, metrics, Monte Carlo batches,
a config format, and a CLI wrap the core for desk-scale experiments.
"""

from .corridor import (Certificate, ConvexRegion, FeasibilityResult, GrowthParams,
                       KinematicLimits, generate_corridor, grow, growth_tensor,
                       init_region, kinematic_feasible, separating_certificate)
from .errors import (ConfigError, DivergenceError, InfeasibleSeedError,
                     InvalidStateError, ParameterError, PlannerError, SchemaError,
                     SingularSteeringError, SolverFailureError)
from .geometry import OrientedRect, rect_rect_distance, wrap_angle
from .ilqr import (BackwardPassResult, CostWeights, SolveReport, SolverOptions,
                   Trajectory, backward_pass, plan)
from .metrics import (MetricsParams, MetricsReport, compute_metrics,
                      min_distance_series)
from .montecarlo import BatchResult, RunSummary, run_batch
from .obstacles import (ArcMotion, ObstacleVehicle, StraightMotion, WaypointMotion,
                        from_motion)
from .risk import (HorizonRiskField, RiskFieldParams, RiskGrid, decay_factor,
                   dynamic_risk, read_risk_grid, risk_gradient, risk_grid,
                   static_risk, total_risk, write_risk_grid)
from .simulation import (CycleLog, RingRoad, Scenario, SimulationResult, StraightRoad,
                         build_reference, perturb_scenario, predict_obstacles,
                         simulate)
from .vehicle import (ControlInput, VehicleGeometry, VehicleLimits, VehicleState,
                      curvature, jacobians, step)

__version__ = "0.1.0"
