"""Nonautonomous difference equations with dichotomies: conjugacies to the
linear part, their derivatives, and machine-checked hypotheses."""

from .errors import *  # noqa: F401,F403
from .system import (MatrixSequence, PerturbationModel, Trajectory, backward_step,  # noqa: F401
                     forward_step, green_operator, green_table, solve_trajectory,
                     transition_matrix)
from .certificates import (ConditionReport, ConditionStatus, DichotomyCertificate,  # noqa: F401
                           check_all, check_c2_conditions, check_d0, check_d1, check_d2,
                           check_d3_d4, check_d5, check_d6, check_d7)
from .envelopes import GrowthEnvelopes  # noqa: F401
from .scenarios import PRESETS, Scenario, ScenarioParams, Seq, make_scenario, preset  # noqa: F401

__version__ = "0.1.0"
