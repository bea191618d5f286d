"""Repeated games: strategy automata, continuation values, beliefs, and theorem verifiers."""

from .automata import (PlayerAutomaton, PrivateStrategyAutomaton, PublicStrategyAutomaton, as_private,
                       history_automaton)
from .beliefs import (BeliefState, conditional_play_distribution, factorization_gap, history_profiles,
                      joint_play_distribution, public_histories, track_beliefs)
from .theorems import (DeviationWitness, RegretReport, StateCheck, construct_public_deviation,
                       verify_theorem1, verify_theorem2, verify_theorem3, verify_theorem4)
from .values import (JointValues, Reachability, ValueTable, deviation_table, one_shot_deviation_gain,
                     reachable_states, solve_joint_values, solve_values_public)
