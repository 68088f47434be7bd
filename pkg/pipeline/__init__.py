from pipeline.runner import RunResult, run_pipeline
from pipeline.settings import Diagnostic, PipelineConfig, load_config, validate_config

__all__ = ["RunResult", "run_pipeline", "Diagnostic", "PipelineConfig", "load_config", "validate_config"]
