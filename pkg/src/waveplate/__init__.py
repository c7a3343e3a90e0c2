"""Numerical lab for a weakly coupled wave-plate system with internal damping.

The wave component ``y`` and the hinged plate component ``z`` are coupled
through a zero-order term ``c(x)``; damping ``d(x)`` acts on the wave
(``alpha = 1``) or on the plate (``alpha = 0``).  The package discretises the
generator, integrates the flow, probes the spectrum and resolvent, and checks
the weighted (Carleman) and interpolation inequalities behind the
logarithmic decay rate numerically.
"""
__version__ = "0.1.0"

from .geometry import (Field, Grid, SubdomainChain, build_chain, build_coefficient, build_cutoffs, build_grid,
                       build_weight_base)
from .operators import ProblemConfig, StateVector, assemble_generator, energy, graph_norm, h_norm
from .evolution import DecayReport, fit_decay, simulate, step_midpoint
from .spectral import (SpectrumReport, eigenpairs_near, resolvent_norm, resolvent_solve, scan_exclusion_region,
                       spectrum_sweep)
from .carleman import (InequalityReport, VerifierConfig, build_weights, lift_resolvent_data, random_test_function,
                       verify_elliptic_carleman, verify_interpolation, verify_local_energy,
                       verify_parabolic_carleman)
