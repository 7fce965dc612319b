"""becv: a desk-scale bidirectional conditional video codec.

Hierarchical B-frame coding with diversified local and non-local temporal
contexts, conditional-coding-aware gating, a range-coded conditional
entropy model, and plan-driven feature caching. Verified by invariants,
brute-force oracles, and bit-exact round trips.
"""

from .errors import (
    CodecError,
    CorruptBitstreamError,
    NumericalError,
    PlanError,
    ProfileError,
    ShapeError,
)
from .gop import GopPlan, build_plan, quality_weight, validate_plan
from .params import CodecConfig, ParamSet, generate, load_params, save_params
from .pipeline import (
    FrameReport,
    MetricsSummary,
    SequenceJob,
    decode_sequence,
    encode_sequence,
    metrics,
)

__version__ = "0.1.0"

__all__ = [
    "CodecConfig",
    "CodecError",
    "CorruptBitstreamError",
    "FrameReport",
    "GopPlan",
    "MetricsSummary",
    "NumericalError",
    "ParamSet",
    "PlanError",
    "ProfileError",
    "SequenceJob",
    "ShapeError",
    "build_plan",
    "decode_sequence",
    "encode_sequence",
    "generate",
    "load_params",
    "metrics",
    "quality_weight",
    "save_params",
    "validate_plan",
    "__version__",
]
