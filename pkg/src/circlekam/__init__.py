"""Random circle diffeomorphisms near rotations: Lyapunov expansions, KAM linearization and SL2 cocycles."""
from .circle import GOLDEN, CircleDiffeo, compose, diophantine_profile, invert, rotation_number
from .cohomology import ResonanceError, solve_U, solve_Ubar
from .ensemble import RandomEnsemble
from .periodic import PeriodicMap

__version__ = "0.1.0"

__all__ = [
    "GOLDEN", "CircleDiffeo", "PeriodicMap", "RandomEnsemble", "ResonanceError", "__version__",
    "compose", "diophantine_profile", "invert", "rotation_number", "solve_U", "solve_Ubar",
]
