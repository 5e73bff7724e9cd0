"""Double phase image restoration: TV plus a weighted quadratic gradient term.

The model minimises ``|Du|(Omega) + int (a|grad u|)^2 + |u - f|^2`` over BV
images.  Alongside the solvers the package carries the experiments that probe
its analysis: regularised energies and their limit, mollified recovery
sequences, and capped fractional maximal functions of measures.
"""

__version__ = "0.1.0"

from .energy import (
    EnergyReport,
    RegularizationMode,
    energy_I,
    energy_I_eps,
    energy_J,
    tv,
    young_constant,
)
from .gamma import (
    GammaSweepRecord,
    RelaxationReport,
    WeightHypothesisError,
    coupling_diagnostics,
    gamma_sweep,
    recovery_sequence,
    relaxation_check,
    summarize_sweep,
)
from .grid import (
    GridMismatchError,
    Mollifier,
    ScalarField,
    VectorField,
    divergence,
    gradient_forward,
    inner,
    mollify,
)
from .imageio import ImageFormatError, read_image, write_image
from .maximal import (
    DiscreteMeasure,
    ball_decay_check,
    capped_maximal_ball,
    capped_maximal_dyadic,
    domination_constant,
    lp_experiment,
    lp_threshold,
    plane_measure,
)
from .solver import (
    SolveOptions,
    SolveResult,
    StepRule,
    minimize_I,
    minimize_I_eps,
    rof_baseline,
    staircase_metric,
)
from .synth import KINDS, synthesize
from .weight import WeightSpec, boundary_positivity, check_remark_condition, estimate_weight
