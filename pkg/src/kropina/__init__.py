"""Numerical engine for strong Kropina spaces."""

from .geometry import (FieldDiagnostics, GeometryError, MetricField, VectorField, christoffel,
                       constant_field, constant_metric, covariant_derivative, field_diagnostics,
                       halton_samples, inner)
from .zermelo import (AlphaBetaData, ConicDomainError, KropinaValue, NavigationData,
                      alpha_beta_value, fundamental_tensor, indicatrix_residual, kropina_value,
                      to_alpha_beta, to_navigation)
from .space import SpaceDefinition
from .geodesics import (ConjugateReport, PathSample, gauss_orthogonality, integrate_flow,
                        integrate_h_geodesic, jacobi_conjugate_search, kropina_exponential,
                        kropina_geodesic)
from .models import (CutLocusCurve, closed_form_distance, cut_locus, cylinder_space,
                     euclidean_space, sphere_space, torus_space, twist_h_cut_locus)
from .separation import (SeparationResult, ball_membership, delta,
                         forward_domain_membership, polyline_oracle, separation)
from .projective import (beta_derivatives, navigation_parallel_residual,
                         projective_equivalence_verdict)
from .dsl import evaluate, load_space, parse_document, parse_expression

__version__ = "0.1.0"
