"""Numerical verification toolkit for prescribed-curvature perturbed geodesic spheres."""
from .curvature_functions import (AxiomReport, CurvatureSpec, extrinsic_curvature, mean_curvature,
                                  power_mean, sigma_quotient, verify_axioms)
from .errors import (AssemblyError, CapabilityError, ConfigurationError, ConsistencyError,
                     ContinuationError, DomainError, IntegrationError, PipelineError, YeSpheresError)
from .expansions import ExpansionKind, OrderFit, expansion_fit, order_fit, predict
from .families import (MetricFamily, conformal_perturbation, euclidean, flat_torus, hyperbolic,
                       round_sphere)
from .geometry import (CurvatureJet, curvature_jet, exp_and_transport, pullback_metric,
                       scalar_jet)
from .immersion import CenteredSphere, ImmersionData, immerse, k_field, residual
from .jacobi import (JacobiMatrix, SpectrumReport, assemble_J, euler_census, near_kernel_block,
                     signature_check, spectrum)
from .scenario import Scenario, load_scenario, run
from .spectral import (HarmonicBasis, SphereField, SphereGrid, build_basis, build_grid,
                       helmholtz_solve, standard_basis)
from .ye import CriticalPoint, YeBranch, critical_points, phi0, phi1, solve_ye

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "AxiomReport", "CapabilityError", "CenteredSphere", "ConfigurationError",
    "ConsistencyError", "ContinuationError", "CriticalPoint", "CurvatureJet", "CurvatureSpec",
    "DomainError", "ExpansionKind", "HarmonicBasis", "ImmersionData", "IntegrationError",
    "JacobiMatrix", "MetricFamily", "OrderFit", "PipelineError", "Scenario", "SpectrumReport",
    "SphereField", "SphereGrid", "YeBranch", "YeSpheresError", "assemble_J", "build_basis",
    "build_grid", "conformal_perturbation", "critical_points", "curvature_jet", "euclidean",
    "euler_census", "exp_and_transport", "expansion_fit", "extrinsic_curvature", "flat_torus",
    "helmholtz_solve", "hyperbolic", "immerse", "k_field", "load_scenario", "mean_curvature",
    "near_kernel_block", "order_fit", "phi0", "phi1", "power_mean", "predict", "pullback_metric",
    "residual", "round_sphere", "run", "scalar_jet", "sigma_quotient", "signature_check",
    "solve_ye", "spectrum", "standard_basis", "verify_axioms",
]
