"""Invariant boundary measure, convex floating bodies and the holomorphic floating body."""

from .numerics import McEstimate, Rejected, takagi, gamma_fn, find_root, mc_volume, sphere_sample
from .convex import (Ball, Cube, Superellipsoid, AffineImage, ellipsoid, apply_affine,
                     body_from_descriptor, gauss_curvature, affine_surface_area)
from .floating import (CapSpec, cap_volume, min_cap_volume, wet_volume, c_n_constant,
                       asa_limit_study, ConvergenceReport)
from .cr import (ComplexJet2, ComplexBall, ComplexEllipsoid, PerturbedBall, Tube, Polydisk,
                 domain_from_descriptor, monge_ampere, fefferman_density, levi_adapted,
                 fefferman_density_leviframe, fefferman_total, transformation_check,
                 tube_density_check)
from .holo import (PeakFunction, NormalForm, levi_peak, sublevel_quantiles, holo_wet_volume,
                   C_n_constant, theorem1_study, holo_limit_study, cap_area, hermitian_cap_volume,
                   webster_normal_form)

__version__ = "0.1.0"
