"""Stochastic-bridge object removal on synthetic clips.

The bridge runs from the source clip (t=1) to the clean target (t=0) on a
variance clock set by a linear beta schedule.  A small convolutional velocity
network with adaptive mask modulation is trained by velocity matching and
sampled with a posterior SDE step; a DDIM diffusion baseline shares the same
conditioning and network.
"""

from .bridge import (
    BridgeState,
    analytic_score,
    brownian_interpolate,
    guidance_h,
    interpolate,
    recover_target,
    simulate_forward_bridge,
    velocity_target,
)
from .data import EvalReport, GenSpec, RemovalTriplet, evaluate, generate_triplet
from .model import VelocityModel, forward, init_params, make_condition
from .sampler import SamplerConfig, SolverWeights, posterior_weights, sample, sde_step
from .schedule import (
    BridgeCoefficients,
    NoiseSchedule,
    TimeGrid,
    beta_at,
    coefficients_at,
    general_coefficients_at,
    make_time_grid,
    sigma_sq_at,
)
from .tensorio import read_tensor, write_tensor

__version__ = "0.1.0"
