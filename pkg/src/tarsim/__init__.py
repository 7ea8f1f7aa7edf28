"""Deterministic, resumable simulation of technology-assisted review workflows.

The pieces compose like this: a :mod:`~tarsim.dataset` provides tasks; a
:class:`~tarsim.components.ComponentSetting` bundles a ranker, sampler,
labeler, and stopping rule; a workflow iterates rounds and records everything
in a :class:`~tarsim.ledger.Ledger`; :mod:`~tarsim.evaluation` scores round
states; :mod:`~tarsim.experiment` fans a grid of runs over processes and
nodes; :mod:`~tarsim.cli` wraps it all for the command line.
"""

from . import components
from .components import (
    BatchPrecisionRule,
    BudgetRule,
    ComponentSetting,
    FixedRoundRule,
    KneeRule,
    LogisticRegressionRanker,
    NoisyLabeler,
    PerfectLabeler,
    QuantRule,
    RandomSampler,
    RelevanceSampler,
    Role,
    TargetSampleRule,
    UncertaintySampler,
    combine,
)
from .dataset import (
    Corpus,
    LabelStore,
    Task,
    build_tfidf,
    ingest_sparse,
    load_labels,
    task_feeder,
    write_sparse,
)
from .errors import (
    ConfigurationError,
    CorpusFormatError,
    DriftError,
    IntegrityError,
    LedgerLoadError,
    NotTrainedError,
    ReplayError,
    TarSimError,
)
from .evaluation import (
    CostStructure,
    OptimisticCost,
    PrecisionAtK,
    RecallAtK,
    RPrec,
    cost_trajectory,
    optimistic_cost,
    parse_measure,
    rank,
)
from .experiment import (
    ExperimentSpec,
    RunDescriptor,
    dispatch,
    expand_grid,
    load_spec,
    results_table,
    shard,
    write_results_csv,
)
from .ledger import FrozenLedger, Ledger, read_score_dump, write_score_dump
from .workflow import (
    OnePhaseWorkflow,
    PhaseTwoResult,
    RoundOutcome,
    TwoPhaseWorkflow,
    WorkflowConfig,
    compute_metrics,
    compute_run_hash,
    replay,
)

__version__ = "0.1.0"
