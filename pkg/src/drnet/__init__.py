"""Feed-forward networks with differential rectifier (DR) units for learning
relations between pairs of binary vectors."""

from .data import (
    BinaryPair,
    CapacityError,
    Dataset,
    TaskKind,
    build_coverage_dataset,
    generate_equality_dataset,
    generate_task_dataset,
    oracle_label,
    stratified_split,
    subsample_train,
)
from .network import (
    DivergenceError,
    Fusion,
    Network,
    NetworkSpec,
    RunResult,
    TrainConfig,
    build_network,
    evaluate,
    gradient_check,
    train,
)
from .tensor import Rng, ShapeError

__version__ = "0.1.0"
