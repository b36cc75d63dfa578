"""Physics-constrained neural strain-energy models for incompressible solids.

Kinematics, block CANN models, training, sampling-based constraint
validators, stress-strain datasets and a Creator-Inspector agent loop.
"""

from .datasets import (
    StressStrainDataset,
    generate_synthetic,
    invariant_plane_eval,
    load_dataset,
    write_dataset,
)
from .mechanics import DeformationGradient, LoadingMode, base_sample_set, mode_F, plane_strain_F
from .model import (
    ConstitutiveModel,
    ModelDescriptor,
    Term,
    build_model,
    canonical_descriptor,
    load_model,
    mooney_rivlin,
    neo_hookean,
    save_model,
)
from .training import FitReport, TrainConfig, fit, train
from .validators import CONSTRAINTS, ConstraintId, ToleranceConfig, ValidationReport, validate_all

__version__ = "0.1.0"
