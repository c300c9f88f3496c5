"""Affine random walks on tori: exact orbits, Fourier decay, energy bounds and F_p experiments."""

from .algebra import AffineMap, IntMatrix, TorusPoint, compose_word, operator_norm_bounds, torus_distance
from .energy import (
    alpha_energy,
    calibrate_C2,
    checkerboard_decompose,
    diagonal_mass,
    fit_contraction,
    margulis_inequality_check,
    max_ball_mass,
)
from .errors import TorusLabError
from .fp import (
    FpWalkSpec,
    build_group_table,
    fp_dft,
    fp_evolve,
    fp_fixed_point,
    fp_orbit_census,
    gap_dichotomy_verdict,
    init_decay_check,
    lv_decay_run,
    reduce_spec_mod_p,
    regular_rep_gap,
)
from .orbits import (
    LinearFormSystem,
    concentration_probability,
    distance_to_PQ_upper,
    fixed_point_solve,
    is_in_PQ,
    orbit_closure,
    orbit_height,
    solve_integer_linear_approx,
)
from .spectral import (
    decay_scan,
    fourier_coefficient,
    granule_detect,
    mu0k_convolution_bound_check,
    rate_dichotomy_check,
    trapping_lowerbound_check,
    weyl_scan,
)
from .specs import fp_fixedpoint, hyperbolic_pair, std_sl2, trapped_q3
from .walk import (
    FiniteMeasure,
    WalkSpec,
    estimate_lyapunov,
    exact_pushforward,
    monte_carlo_measure,
    simulate_points,
)

__version__ = "0.1.0"
