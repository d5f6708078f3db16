"""Active coverage in episodic tabular MDPs."""
from .covgame import CovGameRun, active_set, run_covgame
from .envs import (gen_bandit, gen_chain, gen_contextual_bandit, gen_ergodic, gen_random_mdp,
                   gen_tree_mdp, gen_two_block)
from .flow_lp import (LpSolution, TargetFunction, concentrability, constrained_best_value,
                      constrained_max_occupancy, coverage_bounds, phi_star)
from .learners import UcbviStats, WmfState, beta, ucbvi_plan, ucbvi_update, wmf_init, wmf_update
from .mdp import (Episode, EpisodeDataset, Occupancy, Policy, TabularMdp, VisitCounts,
                  extract_policy, max_reach, optimal_value, policy_gap, policy_value,
                  sample_episode, visitation_distribution)
from .pce import PceResult, beta_rf, rfe_plan, run_pce
from .principle import PrincipleResult, beta_bpi, prune_dataset, run_principle
from .reachability import ReachInterval, build_x_hat, estimate_reachability, horizon_T

__version__ = "0.1.0"
