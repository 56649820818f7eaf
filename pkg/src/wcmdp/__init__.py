"""LP-update policies for weakly coupled Markov decision processes.

Library layout:

* :mod:`wcmdp.model` -- instance types, validation, feasibility, JSON I/O
* :mod:`wcmdp.numerics` -- LP solver, matrix rank, right inverse
* :mod:`wcmdp.relaxation` -- the budget-relaxed LP over a horizon
* :mod:`wcmdp.degeneracy` -- active sets, rank condition, local linear maps
* :mod:`wcmdp.rounding` -- integer-feasible roundings of fractional decisions
* :mod:`wcmdp.policies` -- LP-update (full/selective), occupation, passive
* :mod:`wcmdp.simulator` -- episodes, campaigns, rate studies, concentration
* :mod:`wcmdp.instances` -- builtin counterexample and screening generators
* :mod:`wcmdp.cli` -- the ``wcmdp`` command-line front end
"""

from .model import (
    EpochParams,
    WcMdpModel,
    is_feasible_decision,
    load_model,
    model_from_json,
    model_to_json,
    save_model,
    snap_config_to_grid,
    validate_model,
)
from .numerics import LpSolution, StandardLp, matrix_rank, right_inverse, solve_lp
from .relaxation import RelaxedSolution, build_relaxed_lp, phi, solve_relaxed
from .degeneracy import (
    ActiveSets,
    LocalLinearMap,
    active_sets,
    build_active_matrix,
    build_local_map,
    is_nondegenerate,
    local_value,
    twoaction_nondegenerate,
)
from .rounding import (
    RoundingOutcome,
    floor_round,
    min_distance_round,
    randomized_round,
)
from .policies import (
    LpUpdateFullPolicy,
    LpUpdateSelectivePolicy,
    OccupationMeasurePolicy,
    PassivePolicy,
    make_policy,
)
from .simulator import (
    CampaignResult,
    EpisodeResult,
    concentration_check,
    derive_seed,
    evaluate,
    rate_study,
    run_episode,
    step_population,
)
from .instances import (
    CounterexampleInstance,
    ScreeningParams,
    build_counterexample,
    build_screening_model,
    exact_gap_oracle,
    load_preset,
    scenario_params,
)

__version__ = "0.1.0"
