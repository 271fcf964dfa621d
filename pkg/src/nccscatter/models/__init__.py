from .trajectory import ChaosMap, GeodesicState, GeodesicTrajectory, Outcome  # noqa: F401
from .scattering import ScatteringMatrix  # noqa: F401
from .measure import AveragedProbability, PhaseMeasure, Rectangle  # noqa: F401
