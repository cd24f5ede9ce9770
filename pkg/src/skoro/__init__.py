"""Max/min-optimal Skorokhod embeddings for Brownian motion and regular diffusions."""

from .barrier import BarrierSet, IdentityViolation, verify_barrier_identities
from .diffusion import (
    Bessel3,
    CustomScale,
    DiffusionTarget,
    DriftingBM,
    Identity,
    MeanUndefined,
    NotEmbeddable,
    PiecewiseLinear,
    ScaleBoundaryHit,
    SymmetricBessel,
    classify_embeddable,
    pushforward,
    rho_zeta_nu,
    scale_from_dict,
    simulate_diffusion_embedding,
)
from .hp import HpQuery, HpReport, Verdict, bessel_counterexample, hp_check, hp_condition_check, sbounds_classify, transient_hp
from .measure import (
    DensityPiece,
    MeasureError,
    TargetMeasure,
    TruncationInfeasible,
    check_truncation,
    measure_from_dict,
    measure_to_dict,
    truncate_center,
)
from .simulate import LatticeLaw, WalkConfig, empirical_tails, exact_lattice_law, simulate_embedding

__version__ = "0.1.0"
