"""argmine: argument detection, claim topic extraction, and stance
classification over pluggable chat-completion backends."""

from .atn import (
    Atn,
    AtnState,
    TokenSequence,
    build_detection_atn,
    predicate_oracle,
    render_pseudo_language,
)
from .backend import (
    BackendConfig,
    BackendError,
    Embedding,
    HttpBackend,
    MockBackend,
    mock_complete,
    mock_embed,
)
from .core import (
    ArgumentLabel,
    Instance,
    StanceLabel,
    TokenState,
    Topic,
    validate_instance,
)
from .data import CorpusFile, SynthSpec, generate_synthetic, load_corpus, save_corpus
from .metrics import (
    ConfusionMatrix,
    CteResult,
    EvalReport,
    cte_score,
    f1_binary,
    f1_macro,
    type_breakdown,
)
from .pipeline import AnalysisRecord, JobSpec, TopicSource, analyze, run_batch
from .prompting import (
    ParseBasis,
    Prompt,
    PromptVariant,
    Task,
    build_cte_prompt,
    build_detection_prompt,
    build_stance_prompt,
    parse_cte_response,
    parse_detection_response,
    parse_stance_response,
)
from .sampling import merge_annotations, stratified_sample

__version__ = "0.1.0"

__all__ = [
    "AnalysisRecord",
    "ArgumentLabel",
    "Atn",
    "AtnState",
    "BackendConfig",
    "BackendError",
    "ConfusionMatrix",
    "CorpusFile",
    "CteResult",
    "Embedding",
    "EvalReport",
    "HttpBackend",
    "Instance",
    "JobSpec",
    "MockBackend",
    "ParseBasis",
    "Prompt",
    "PromptVariant",
    "StanceLabel",
    "SynthSpec",
    "Task",
    "TokenSequence",
    "TokenState",
    "Topic",
    "TopicSource",
    "analyze",
    "build_cte_prompt",
    "build_detection_atn",
    "build_detection_prompt",
    "build_stance_prompt",
    "cte_score",
    "f1_binary",
    "f1_macro",
    "generate_synthetic",
    "load_corpus",
    "mock_complete",
    "mock_embed",
    "parse_cte_response",
    "parse_detection_response",
    "parse_stance_response",
    "predicate_oracle",
    "render_pseudo_language",
    "run_batch",
    "save_corpus",
    "stratified_sample",
    "merge_annotations",
    "type_breakdown",
    "validate_instance",
]
