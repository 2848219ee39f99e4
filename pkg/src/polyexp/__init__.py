"""polyexp: polyrigid transform interpolation on dense regular grids.

Core numerics live in linalg (scaling-and-squaring exponential, inverse
scaling-and-squaring logarithm), eigen4 (structured 4x4 eigendecomposition and
eigenvalue-scaling interpolation), se3 (rigid transforms, Euler angles, the
closed-form trigonometric path, geodesics), polyrigid (log-Euclidean fusion
and flow fields), field (grids, distance transform, warping, binary I/O),
bench (timing / memory-model harness) and synth (fixtures and generators).
A FastAPI service (polyexp.service) wraps the library; the CLI is a thin
client of that service.
"""

__version__ = "0.1.0"
