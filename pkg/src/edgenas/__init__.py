"""Hardware-aware NAS toolkit: cost models, simulator, search, and service."""

__version__ = "0.1.0"

from .ir import (  # noqa: E402
    Conv2D,
    Dense,
    DepthwiseConv,
    FusedIBNBlock,
    GlobalAvgPool,
    IBNBlock,
    ModelGraph,
    ModelValidationError,
    ShapeError,
    TensorShape,
    count_macs,
    count_params,
    infer_shapes,
    load_model,
    model_from_dict,
    model_from_json,
    model_to_dict,
    model_to_json,
    save_model,
    validate,
)
from .accel import (  # noqa: E402
    AcceleratorConfig,
    ConfigError,
    LatencyBreakdown,
    LayerLatency,
    estimate_layer,
    estimate_model,
    load_config,
    traffic,
    utilization,
)
from .simulator import (  # noqa: E402
    InfeasibleTile,
    SimReport,
    TileSchedule,
    plan_tiles,
    simulate_layer,
    simulate_model,
)
from .space import (  # noqa: E402
    BlockChoice,
    DEFAULT_SKELETON,
    StageSkeleton,
    decode,
    load_skeleton,
    mutate,
    sample,
    space_size,
)
from .surrogate import AccuracyTable, MissEntry, SurrogateParams, predict, predict_from_table  # noqa: E402
from .search import (  # noqa: E402
    Candidate,
    EvaluatorError,
    ParetoPoint,
    RewardSpec,
    SearchConfig,
    evolution_search,
    pareto_front,
    random_search,
    reward,
    run_search,
)
from .evaluate import make_evaluator  # noqa: E402
