"""Contact-mode guided quasistatic manipulation planning for planar objects."""

from .geom2d import (
    BisectionFailure,
    Contact,
    ContactSource,
    GeometryError,
    PenetrationError,
    Polygon,
    Pose,
    Twist,
    body_twist_between,
    contact_query,
    penetration_rollback,
    twist_to_transform,
)
from .modes import ContactLabel, ContactMode, assemble_mode_constraints, enumerate_env_modes
from .mechanics import (
    GraspMap,
    GravityPlane,
    QuasistaticSolution,
    TabletopPlane,
    closest_feasible_velocity,
    grasp_map,
    stability_margin,
    static_equilibrium_possible,
)
from .solver import QuadraticProgram, SolveResult, SolveStatus, solve_lp_feasibility, solve_qp

__version__ = "0.1.0"

__all__ = [
    "BisectionFailure",
    "Contact",
    "ContactLabel",
    "ContactMode",
    "ContactSource",
    "GeometryError",
    "GraspMap",
    "GravityPlane",
    "PenetrationError",
    "Polygon",
    "Pose",
    "QuadraticProgram",
    "QuasistaticSolution",
    "SolveResult",
    "SolveStatus",
    "TabletopPlane",
    "Twist",
    "assemble_mode_constraints",
    "body_twist_between",
    "closest_feasible_velocity",
    "contact_query",
    "enumerate_env_modes",
    "grasp_map",
    "penetration_rollback",
    "solve_lp_feasibility",
    "solve_qp",
    "stability_margin",
    "static_equilibrium_possible",
    "twist_to_transform",
]
