"""State pruning for diagonal deep state space models.

Layers carry diagonal complex state matrices, so every state contributes an
independent rank-one subsystem whose H-infinity norm has a closed form.  The
package scores states by those norms (optionally normalized across layers),
selects survivors under uniform, global or adaptive budgets, and verifies the
resulting energy-loss bounds empirically.
"""

from .core import (
    Activation,
    Arch,
    ArchKind,
    CtLayer,
    DtLayer,
    MIMO,
    Model,
    pair_conjugates,
    siso_block_to_mimo,
    validate_layer,
)
from .discretize import check_dt_stability, is_stable, rescale_timescales, zoh_discretize
from .errors import (
    AmbiguousPairingWarning,
    BudgetTooLarge,
    ChannelMismatch,
    DegenerateLayer,
    DegenerateLayerWarning,
    DimensionMismatch,
    EmptyLayer,
    MalformedFile,
    NonHurwitz,
    NonPositiveRatio,
    SchemaMismatch,
    SsmError,
    UnpairedState,
    UnstableLayer,
    UnstableState,
    ValidationFailed,
)
from .norms import (
    energy_gain_check,
    hinf_bruteforce,
    parseval_check,
    signal_energy,
    subsystem_hinf,
)
from .pruning import (
    Criterion,
    LayerScores,
    PruneMask,
    PrunePlan,
    ScoreTable,
    apply_mask,
    apply_mask_model,
    greedy_last_trace,
    hinf_table,
    lamp_scores,
    last_scores,
    magnitude_table,
    score_table,
    select_global,
    select_random,
    select_uniform,
)
from .simulate import (
    FreqGrid,
    Signal,
    frequency_response,
    layer_forward,
    model_forward,
    pad_for_decay,
    run_recursion,
)
from .verify import (
    ablation_scale_mismatch,
    layer_bound_report,
    make_scale_gap_model,
    model_bound_report,
    probe_inputs,
    random_ct_layer,
    random_dt_layer,
    random_model,
)

__version__ = "0.1.0"
