"""Selective uplink training simulator for massive MIMO.

Channels follow a first-order Gauss-Markov process; each block the base
station trains a subset of users with orthogonal pilots and predicts the
rest. Rates are evaluated by Monte Carlo and by a deterministic equivalent.
"""

from .channel import ChannelState, evolve_channel, init_channel
from .config import RateUnit, SystemConfig, load_config, parse_config
from .csi import (CsiState, PilotMatrix, TrainingObservation, advance_csi, build_pilot_matrix,
                  matched_filter, mmse_estimate, predict, simulate_training)
from .errors import ConfigError, ContractError, ConvergenceError, InfeasibleError
from .experiment import (EpisodeResult, SweepResult, SweepSpec, deteq_episode, run_episode,
                         sweep_density, sweep_tau)
from .geometry import (UserDrop, large_scale_variance, sample_user_drop, snr_db,
                       temporal_correlation_jakes)
from .rate import (DetEqProblem, EquivalentNoise, FixedPointResult, block_rate_sample,
                   det_eq_rate, equivalent_noise, normalized_variances, solve_fixed_point)
from .selection import (Policy, SelectionOutcome, SelectionScore, brute_force_oracle,
                        score_users, select_all, select_closest, select_dus, select_random)
from .streams import EpisodeStreams, derive_stream

__version__ = "0.1.0"
