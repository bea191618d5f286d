"""Privacy of monitoring signals and the regret of repeated-game equilibria.

Noisy enough monitoring forces every equilibrium of a repeated game to play
near-equilibrium profiles of the stage game. This package computes how
private a signal structure is, verifies the resulting regret bounds on
explicit strategy automata, and builds example families where privacy grows
with the number of players.
"""

from .errors import AntifolkError, GuardError, IncompatibleMonitoringError, ZeroProbabilityError
from .game import (AggregateGame, AnonymousGame, CorrelatedDevice, StageGame, correlated_regret, nash_regret)
from .privacy import (DPWitness, PrivacyCurve, PrivacyParams, SensitivitySpec, anti_folk_bound, coarsen_signals,
                      compose_advanced, compose_basic, finite_dp_gamma, gaussian_privacy_curve, gaussian_sigma,
                      privacy_curve, product_structure, subsample_privacy)
from .signals import AggregateSignalStructure, SignalStructure, check_full_support, perfect_monitoring
from .repeated import (PlayerAutomaton, PrivateStrategyAutomaton, PublicStrategyAutomaton, RegretReport,
                       conditional_play_distribution, one_shot_deviation_gain, reachable_states,
                       solve_values_public, track_beliefs, verify_theorem1, verify_theorem2, verify_theorem3,
                       verify_theorem4)

__version__ = "0.1.0"
