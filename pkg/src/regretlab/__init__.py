"""Regret experiments for posterior sampling and optimistic agents on tabular MDPs."""
from .agents import PSRL, LazyPSRL, OptimisticRL, SmoothedPSRL, make_agent
from .belief import (ConjugateBelief, FiniteSupportBelief, Observation, conjugate_prior,
                     heaven_hell_prior, posterior_mean, posterior_update, sample_mdp,
                     two_point_prior)
from .envs import chain, heaven_hell, load_mdp, random_mdp, save_mdp, two_point_bandit
from .errors import (ArgumentError, ConfigError, ContractError, ConvergenceError,
                     InconsistentObservationError, InsufficientDataError, NumericalError,
                     RegretLabError)
from .experiment import ExperimentConfig, load_config, run_experiment
from .mdp import (FiniteHorizonMDP, StationaryPolicy, TabularMDP, TimePolicy, Trajectory,
                  classify, simulate, step)
from .oracles import exact_counterexample, exact_heaven_hell, lemma1_check
from .planner import (backward_induction, extended_value_iteration, gain, optimal_gain,
                      policy_value_finite, relative_value_iteration, ucrl2_confidence_set)
from .regret import decompose_finite, decompose_gain, regret_curve
from .signals import FixedLength, Never, RewardThreshold, VisitCountDoubling, signal_eval

__version__ = "0.1.0"
