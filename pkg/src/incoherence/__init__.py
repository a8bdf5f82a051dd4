"""Exact-inference tools for incoherence, retraining operators and policy stability
in small finite-horizon MDPs."""

from .coherence import (ArgmaxUniform, IterationTrace, Softmax, TraceEntry,
                        boltzmann_incoherence, check_greedy_coherence,
                        check_order_respecting, f_soft_policy, fixpoint_step,
                        incoherence, iterate_coherence, kappa_optimality_probe)
from .mdp import (BUILTIN_NAMES, EnumerationCapError, Mdp, MdpError, PreconditionError,
                  SchemaError, Trajectory, builtin_example, dump_mdp, enumerate_trajectories,
                  is_deterministic, load_mdp, mdp_from_dict, validate_mdp)
from .policy import (Policy, causal_entropy, expected_return, occupancy,
                     oracle_expected_return, oracle_trajectory_kl, policy_tv,
                     success_probability, trajectory_distribution, trajectory_kl,
                     validate_policy)
from .random_mdp import random_mdp, random_prior
from .reports import Report
from .retraining import (FoldedState, check_equivalence, check_strict_temperature,
                         convergence_probe, cumulative_folded_sequence, folded_sequence,
                         goal_condition, improvement_audit, iterate_G, iterate_temperature,
                         rate_check, temperature_policy)
from .soft_values import (SoftValues, check_deterministic_factorization, limit_policy,
                          oracle_check_qv, soft_values)
from .stability import StabilityReport, n_policy_stable, stability_conflict_demo

__version__ = "0.1.0"
