"""Reachability bounds for piecewise affine systems.

Pipeline: parse a system, detect the possible switches, synthesize a
piecewise quadratic Lyapunov certificate by SDP, then tighten per-coordinate
bounds by policy iteration and check them against simulation.
"""

from .errors import PwaCertifyError
from .lifting import LiftedSystem, build_lifted
from .polyhedra import SwitchSets, X0Bounds, switch_sets, x0_coordinate_bounds
from .policy import IterationTrace, Termination, iterate
from .relaxed import MINUS_INFINITY, MinusInfinity, eval_relaxed, eval_relaxed_combined
from .synthesis import PqlCertificate, evaluate_L, synthesize, verify_certificate
from .system import PwaSystem, load_system, load_system_file
from .validation import check_membership, simulate

__version__ = "0.1.0"
