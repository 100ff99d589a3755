"""Difficulty-aware hybrid object detection: metric, scheduler, evaluation."""

from .errors import (
    ConfigurationError,
    InputError,
    JoinMismatchError,
    OddError,
    ProtocolError,
    ValidationError,
)
from .evaluation import EvalConfig, EvalReport, Interpolation, evaluate, frame_diff
from .metric import (
    CategorizedDetection,
    MatchCategory,
    MetricConfig,
    OddScore,
    categorize,
    label_dataset,
    odd_loss,
    odd_score,
    weighted_precision,
    weighted_recall,
    weighted_samples,
)
from .model import (
    BoundingBox,
    Detection,
    DetectionDump,
    FrameKey,
    FrameRecord,
    GroundTruthBox,
    Video,
    VideoDataset,
    iou,
    validate_dataset,
)
from .refpool import GlobalPool, PoolConfig, announce_pool, select_pool
from .scheduling import (
    CostModel,
    Route,
    RunReport,
    ScheduleDecision,
    SchedulerConfig,
    decide,
    model_speed,
    run,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
