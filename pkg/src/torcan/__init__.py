"""torcan: torus-canard detection, classification and continuation.

Averaging on folded manifolds of limit cycles for 2-fast/k-slow singularly
perturbed systems: periodic-BVP cycle computation, toral-folded-singularity
classification, FSN-II continuation, invariant-manifold sweeps, and the
torus-canard-explosion predictor.
"""

__version__ = "0.1.0"

from .models import get_model, model_names  # noqa: F401
